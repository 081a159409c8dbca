//! Scalar field abstraction: everything in this crate is generic over
//! double-precision real or complex scalars.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Field tag carried through file formats and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<Field> {
        match s {
            "real" => Some(Field::Real),
            "complex" => Some(Field::Complex),
            _ => None,
        }
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Double-precision scalar over ℝ or ℂ.
///
/// `f64` and `Complex64` are the only implementors; all numeric modules are
/// generic over this trait so real and complex frames share one code path.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const FIELD: Field;

    fn to_c64(self) -> Complex64;

    /// Project back from ℂ; over the reals the imaginary part is dropped
    /// (it is roundoff whenever the exact result is real).
    fn from_c64(z: Complex64) -> Self;

    /// Standard normal with unit total variance (complex: CN(0,1), i.e.
    /// independent N(0,1/2) real and imaginary parts).
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on {−1, +1}.
    fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on the complex unit circle; `None` over the reals.
    fn steinhaus<R: Rng + ?Sized>(rng: &mut R) -> Option<Self>;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn from_c64(z: Complex64) -> Self {
        z.re
    }

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    fn steinhaus<R: Rng + ?Sized>(_rng: &mut R) -> Option<Self> {
        None
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;

    fn to_c64(self) -> Complex64 {
        self
    }

    fn from_c64(z: Complex64) -> Self {
        z
    }

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Complex64::new(f64::rademacher(rng), 0.0)
    }

    fn steinhaus<R: Rng + ?Sized>(rng: &mut R) -> Option<Self> {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        Some(Complex64::new(phase.cos(), phase.sin()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn complex_normal_has_unit_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let m = 20000;
        let mean_sq: f64 = (0..m)
            .map(|_| Complex64::std_normal(&mut rng).norm_sqr())
            .sum::<f64>()
            / m as f64;
        assert!((mean_sq - 1.0).abs() < 0.05, "E|z|^2 = {mean_sq}");
    }

    #[test]
    fn steinhaus_on_unit_circle() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let z = Complex64::steinhaus(&mut rng).unwrap();
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        assert!(<f64 as Scalar>::steinhaus(&mut rng).is_none());
    }
}

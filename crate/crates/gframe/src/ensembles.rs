//! Random frame ensembles, the order-p tightness probe, and the
//! matrix-Chernoff concentration experiment.
//!
//! All sampling uses ChaCha12 with a base seed and explicit stream splitting:
//! element j of a frame draws from stream `j`; the tightness probe and the
//! concentration trials use the disjoint stream ranges declared below, so
//! every result is reproducible bit-exactly regardless of parallelism.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::formats::{self, FormatError};
use crate::frame::{FrameError, GFrame};
use crate::linalg::{herm_eig, hermitian_part, HermitianPd, LinalgError, PdExponent};
use crate::operators::{OperatorError, StructuredOperator};
use crate::scalar::{Field, Scalar};

/// Stream ranges for derived sampling (frame elements use streams 0..n).
const STREAM_ORDER_P_SAMPLES: u64 = 1 << 48;
const STREAM_DIRECTIONS: u64 = 2 << 48;
const STREAM_CONCENTRATION: u64 = 3 << 48;
const CONCENTRATION_TRIAL_STRIDE: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble dimensions: {0}")]
    InvalidDims(String),
    #[error("elliptical ensembles need a covariance matrix")]
    MissingSigma,
    #[error("{0} requires the complex field")]
    ComplexFieldRequired(&'static str),
    #[error("ensemble {0:?} does not have constant Hilbert–Schmidt norm")]
    NonConstantNorm(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    GaussianIid,
    UniformSphere,
    HaarSubspace,
    GaborRandomWindow,
    CirculantBlockRandom,
    SubsamplerRandom,
    EllipticalGaussian,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::GaussianIid => "gaussian_iid",
            EnsembleKind::UniformSphere => "uniform_sphere",
            EnsembleKind::HaarSubspace => "haar_subspace",
            EnsembleKind::GaborRandomWindow => "gabor_random_window",
            EnsembleKind::CirculantBlockRandom => "circulant_block_random",
            EnsembleKind::SubsamplerRandom => "subsampler_random",
            EnsembleKind::EllipticalGaussian => "elliptical_gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        // accept dashes as separators too (CLI style)
        let norm = s.replace('-', "_");
        Some(match norm.as_str() {
            "gaussian_iid" => EnsembleKind::GaussianIid,
            "uniform_sphere" => EnsembleKind::UniformSphere,
            "haar_subspace" => EnsembleKind::HaarSubspace,
            "gabor_random_window" => EnsembleKind::GaborRandomWindow,
            "circulant_block_random" => EnsembleKind::CirculantBlockRandom,
            "subsampler_random" => EnsembleKind::SubsamplerRandom,
            "elliptical_gaussian" => EnsembleKind::EllipticalGaussian,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowDist {
    Rademacher,
    Steinhaus,
}

impl WindowDist {
    pub fn name(self) -> &'static str {
        match self {
            WindowDist::Rademacher => "rademacher",
            WindowDist::Steinhaus => "steinhaus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rademacher" => Some(WindowDist::Rademacher),
            "steinhaus" => Some(WindowDist::Steinhaus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec<K: Scalar> {
    pub kind: EnsembleKind,
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub window_dist: WindowDist,
    pub seed: u64,
    /// Covariance for the elliptical family; ignored elsewhere.
    pub sigma: Option<DMatrix<K>>,
}

impl<K: Scalar> EnsembleSpec<K> {
    pub fn new(kind: EnsembleKind, d: usize, r: usize, n: usize, seed: u64) -> Self {
        Self {
            kind,
            d,
            r,
            n,
            window_dist: WindowDist::Rademacher,
            seed,
            sigma: None,
        }
    }

    pub fn with_window_dist(mut self, dist: WindowDist) -> Self {
        self.window_dist = dist;
        self
    }

    pub fn with_sigma(mut self, sigma: DMatrix<K>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |msg: String| Err(EnsembleError::InvalidDims(msg));
        if self.d == 0 || self.r == 0 || self.n == 0 {
            return bad(format!(
                "d={}, r={}, n={} must be positive",
                self.d, self.r, self.n
            ));
        }
        match self.kind {
            EnsembleKind::UniformSphere if self.r != 1 => {
                bad("uniform_sphere requires r = 1".into())
            }
            EnsembleKind::HaarSubspace if self.r >= self.d => bad(format!(
                "haar_subspace requires r < d, got r={}, d={}",
                self.r, self.d
            )),
            EnsembleKind::GaborRandomWindow => {
                if K::FIELD != Field::Complex {
                    return Err(EnsembleError::ComplexFieldRequired("gabor_random_window"));
                }
                if self.d != self.r * self.r {
                    return bad(format!(
                        "gabor ambient dimension must be r² = {}, got {}",
                        self.r * self.r,
                        self.d
                    ));
                }
                Ok(())
            }
            EnsembleKind::CirculantBlockRandom if self.r > self.d => bad(format!(
                "circulant block needs k ≤ d, got k={}, d={}",
                self.r, self.d
            )),
            EnsembleKind::EllipticalGaussian => match &self.sigma {
                None => Err(EnsembleError::MissingSigma),
                Some(s) if s.nrows() != self.d || s.ncols() != self.d => {
                    bad(format!("sigma must be {}x{}", self.d, self.d))
                }
                Some(_) => Ok(()),
            },
            _ => Ok(()),
        }?;
        if self.window_dist == WindowDist::Steinhaus && K::FIELD != Field::Complex {
            return Err(EnsembleError::ComplexFieldRequired("steinhaus window"));
        }
        Ok(())
    }

    /// ‖T‖²_HS when it is constant over the ensemble.
    pub fn constant_hs_norm_squared(&self) -> Option<f64> {
        match self.kind {
            EnsembleKind::UniformSphere => Some(1.0),
            EnsembleKind::HaarSubspace => Some(self.r as f64),
            EnsembleKind::GaborRandomWindow => Some(self.r as f64),
            EnsembleKind::SubsamplerRandom => Some(self.r as f64),
            // unit-modulus generators: each of the k columns has norm² = d
            EnsembleKind::CirculantBlockRandom => Some(self.r as f64 * self.d as f64),
            EnsembleKind::GaussianIid | EnsembleKind::EllipticalGaussian => None,
        }
    }

    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("kind".into(), self.kind.name().to_string()),
            ("d".into(), self.d.to_string()),
            ("r".into(), self.r.to_string()),
            ("n".into(), self.n.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("window_dist".into(), self.window_dist.name().to_string()),
        ];
        if let Some(s) = &self.sigma {
            out.push(("sigma".into(), formats::write_matrix(s)));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind.name(),
            "d": self.d,
            "r": self.r,
            "n": self.n,
            "seed": self.seed,
            "window_dist": self.window_dist.name(),
            "field": K::FIELD.name(),
            "sigma": self.sigma.as_ref().map(formats::write_matrix),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, EnsembleError> {
        let get_u64 = |key: &str| -> Result<u64, EnsembleError> {
            v.get(key)
                .and_then(Value::as_u64)
                .ok_or_else(|| EnsembleError::Format(FormatError::MissingKey(key.into())))
        };
        let kind_str = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| EnsembleError::Format(FormatError::MissingKey("kind".into())))?;
        let kind = EnsembleKind::parse(kind_str)
            .ok_or_else(|| EnsembleError::Format(FormatError::UnknownKind(kind_str.into())))?;
        let mut spec = EnsembleSpec::new(
            kind,
            get_u64("d")? as usize,
            get_u64("r")? as usize,
            get_u64("n")? as usize,
            get_u64("seed")?,
        );
        if let Some(w) = v.get("window_dist").and_then(Value::as_str) {
            spec.window_dist = WindowDist::parse(w)
                .ok_or_else(|| EnsembleError::Format(FormatError::UnknownKind(w.into())))?;
        }
        if let Some(s) = v.get("sigma").and_then(Value::as_str) {
            spec.sigma = Some(formats::parse_matrix::<K>(s)?);
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn element_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn window_entry<K: Scalar>(dist: WindowDist, rng: &mut ChaCha12Rng) -> K {
    match dist {
        WindowDist::Rademacher => K::rademacher(rng),
        WindowDist::Steinhaus => K::steinhaus(rng).expect("validated complex"),
    }
}

/// Orthonormal column factor of a Haar-random r-dimensional subspace:
/// QR of a Gaussian matrix with the R-diagonal phase normalized.
fn haar_factor<K: Scalar>(d: usize, r: usize, rng: &mut ChaCha12Rng) -> DMatrix<K> {
    let raw = DMatrix::<K>::from_fn(d, r, |_, _| K::std_normal(rng));
    let qr = raw.qr();
    let rmat = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        let diag = rmat[(j, j)];
        let modulus = diag.modulus();
        if modulus > 0.0 {
            let correction = (diag * K::from_real(1.0 / modulus)).conjugate();
            for i in 0..d {
                q[(i, j)] *= correction;
            }
        }
    }
    q
}

fn make_element<K: Scalar>(
    spec: &EnsembleSpec<K>,
    sigma_sqrt: Option<&DMatrix<K>>,
    rng: &mut ChaCha12Rng,
) -> Result<StructuredOperator<K>, EnsembleError> {
    let (d, r) = (spec.d, spec.r);
    Ok(match spec.kind {
        EnsembleKind::GaussianIid => {
            StructuredOperator::dense(DMatrix::from_fn(d, r, |_, _| K::std_normal(rng)))
        }
        EnsembleKind::UniformSphere => {
            let v = DVector::<K>::from_fn(d, |_, _| K::std_normal(rng));
            let norm = v.norm();
            StructuredOperator::dense(DMatrix::from_column_slice(
                d,
                1,
                (v * K::from_real(1.0 / norm)).as_slice(),
            ))
        }
        EnsembleKind::HaarSubspace => {
            StructuredOperator::projector_factor(haar_factor(d, r, rng))?
        }
        EnsembleKind::GaborRandomWindow => {
            let window = DVector::from_fn(r, |_, _| window_entry::<K>(spec.window_dist, rng));
            StructuredOperator::gabor(window)?
        }
        EnsembleKind::CirculantBlockRandom => {
            let generator = DVector::from_fn(d, |_, _| window_entry::<K>(spec.window_dist, rng));
            StructuredOperator::circulant(generator, r)?
        }
        EnsembleKind::SubsamplerRandom => {
            let indices = (0..r).map(|_| rng.random_range(0..d)).collect();
            StructuredOperator::subsampler(d, indices)?
        }
        EnsembleKind::EllipticalGaussian => {
            let z = DMatrix::<K>::from_fn(d, r, |_, _| K::std_normal(rng));
            StructuredOperator::dense(sigma_sqrt.expect("validated") * z)
        }
    })
}

fn sigma_sqrt<K: Scalar>(spec: &EnsembleSpec<K>) -> Result<Option<DMatrix<K>>, EnsembleError> {
    match (&spec.kind, &spec.sigma) {
        (EnsembleKind::EllipticalGaussian, Some(s)) => Ok(Some(
            HermitianPd::new(s.clone())?
                .power(PdExponent::Half)
                .matrix()
                .clone(),
        )),
        _ => Ok(None),
    }
}

/// Draw the frame {T₁..T_n}; element j uses stream j of the seed.
pub fn sample<K: Scalar>(spec: &EnsembleSpec<K>) -> Result<GFrame<K>, EnsembleError> {
    spec.validate()?;
    let sq = sigma_sqrt(spec)?;
    let elements = (0..spec.n)
        .map(|j| {
            let mut rng = element_rng(spec.seed, j as u64);
            make_element(spec, sq.as_ref(), &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GFrame::new(spec.d, elements)?)
}

/// Monte-Carlo bracket (Â_p, B̂_p) of E‖Tᴴx‖^{2p} over random unit directions.
pub fn order_p_tightness<K: Scalar>(
    spec: &EnsembleSpec<K>,
    p: u32,
    samples: usize,
    directions: usize,
) -> Result<(f64, f64), EnsembleError> {
    assert!(p >= 1, "order p must be at least 1");
    spec.validate()?;
    let sq = sigma_sqrt(spec)?;
    let draws: Vec<StructuredOperator<K>> = (0..samples)
        .map(|i| {
            let mut rng = element_rng(spec.seed, STREAM_ORDER_P_SAMPLES + i as u64);
            make_element(spec, sq.as_ref(), &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..directions {
        let mut rng = element_rng(spec.seed, STREAM_DIRECTIONS + i as u64);
        let x = DVector::<K>::from_fn(spec.d, |_, _| K::std_normal(&mut rng));
        let x = &x * K::from_real(1.0 / x.norm());
        let mut mean = 0.0;
        for t in &draws {
            let energy = t.adjoint_apply(&x)?.norm_squared();
            mean += energy.powi(p as i32);
        }
        mean /= samples as f64;
        lo = lo.min(mean);
        hi = hi.max(mean);
    }
    Ok((lo, hi))
}

/// Closed-form tail bound 2d·(e^ε/(1+ε)^{1+ε})^{n/d}.
pub fn chernoff_bound(d: usize, eps: f64, n: usize) -> f64 {
    let a_eps = (1.0 + eps) * (1.0 + eps).ln() - eps;
    2.0 * d as f64 * (-(n as f64 / d as f64) * a_eps).exp()
}

#[derive(Debug, Clone, Copy)]
pub struct ConcentrationRow {
    pub n: usize,
    pub failure_rate: f64,
    pub std_err: f64,
    pub bound: f64,
}

/// Empirical P(‖I − S_n‖₂ ≥ ε) for the scaled collection {√(d/(nR)) Tⱼ},
/// next to the closed-form tail bound.
///
/// Requires an ensemble with constant ‖T‖²_HS = R.
pub fn concentration_experiment<K: Scalar>(
    spec: &EnsembleSpec<K>,
    n_grid: &[usize],
    eps: f64,
    trials: usize,
) -> Result<Vec<ConcentrationRow>, EnsembleError> {
    spec.validate()?;
    let r_norm = spec
        .constant_hs_norm_squared()
        .ok_or_else(|| EnsembleError::NonConstantNorm(spec.kind.name().into()))?;
    let d = spec.d;
    let sq = sigma_sqrt(spec)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut failures = 0usize;
        for trial in 0..trials {
            let scale = d as f64 / (n as f64 * r_norm);
            let mut s = DMatrix::<K>::zeros(d, d);
            for j in 0..n {
                let mut rng = element_rng(
                    spec.seed,
                    STREAM_CONCENTRATION + trial as u64 * CONCENTRATION_TRIAL_STRIDE + j as u64,
                );
                let t = make_element(spec, sq.as_ref(), &mut rng)?.to_dense();
                s += &t * t.adjoint() * K::from_real(scale);
            }
            let eig = herm_eig(&hermitian_part(&s))?;
            let dev = eig
                .values
                .iter()
                .fold(0.0_f64, |acc, &x| acc.max((x - 1.0).abs()));
            if dev >= eps {
                failures += 1;
            }
        }
        let failure_rate = failures as f64 / trials as f64;
        let std_err = (failure_rate * (1.0 - failure_rate) / trials as f64).sqrt();
        rows.push(ConcentrationRow {
            n,
            failure_rate,
            std_err,
            bound: chernoff_bound(d, eps, n),
        });
    }
    Ok(rows)
}

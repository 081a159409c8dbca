//! Dense Hermitian kernels: eigendecomposition, positive-definite matrix
//! powers, Hilbert–Schmidt norms, quadratic traces, and the unitary DFT.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;
use std::sync::Mutex;
use thiserror::Error;

use crate::scalar::Scalar;

/// Relative Frobenius tolerance below which a matrix is accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalue ratio below which a nominally positive definite matrix is
/// treated as singular.
pub const PD_RANK_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not hermitian (relative asymmetry {asym:.3e})")]
    NotHermitian { asym: f64 },
    #[error("matrix is numerically singular (smallest eigenvalue {min_eig:.6e})")]
    Singular { min_eig: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("eigendecomposition did not converge")]
    EigFailed,
}

/// Reject matrices containing NaN or infinite entries.
pub fn validate_finite<K: Scalar>(m: &DMatrix<K>) -> Result<(), LinalgError> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let z = m[(row, col)].to_c64();
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(LinalgError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermEig<K: Scalar> {
    pub values: DVector<f64>,
    pub vectors: DMatrix<K>,
}

impl<K: Scalar> HermEig<K> {
    /// V f(Λ) Vᴴ for a real function of the eigenvalues.
    pub fn map_matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<K> {
        let d = self.values.len();
        let scaled = DMatrix::from_fn(d, d, |i, j| {
            self.vectors[(i, j)] * K::from_real(f(self.values[j]))
        });
        let m = &scaled * self.vectors.adjoint();
        hermitian_part(&m)
    }
}

/// (A + Aᴴ)/2.
pub fn hermitian_part<K: Scalar>(a: &DMatrix<K>) -> DMatrix<K> {
    (a + a.adjoint()) * K::from_real(0.5)
}

fn hermitian_asymmetry<K: Scalar>(a: &DMatrix<K>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.adjoint()).norm() / norm
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// The input is symmetrized before decomposing; inputs farther than
/// `HERMITIAN_TOL` (relative Frobenius) from Hermitian are rejected.
pub fn herm_eig<K: Scalar>(a: &DMatrix<K>) -> Result<HermEig<K>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    validate_finite(a)?;
    let asym = hermitian_asymmetry(a);
    if asym > HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian { asym });
    }
    let h = hermitian_part(a);
    let d = h.nrows();
    let eig = match d {
        0 => HermEig {
            values: DVector::zeros(0),
            vectors: DMatrix::identity(0, 0),
        },
        1 => HermEig {
            values: DVector::from_element(1, h[(0, 0)].real()),
            vectors: DMatrix::identity(1, 1),
        },
        2 => herm_eig_2x2(&h),
        _ => {
            let se = h
                .clone()
                .try_symmetric_eigen(f64::EPSILON, 0)
                .ok_or(LinalgError::EigFailed)?;
            sort_eig(se.eigenvalues, se.eigenvectors)
        }
    };
    #[cfg(debug_assertions)]
    {
        let rec = eig.map_matrix(|x| x);
        let scale = h.norm().max(1e-300);
        debug_assert!(
            (&rec - &h).norm() / scale < 1e-9,
            "eig reconstruction residual {}",
            (&rec - &h).norm() / scale
        );
    }
    Ok(eig)
}

/// Closed form for 2x2 Hermitian matrices. Much faster than the iterative
/// path and exercised heavily by the d=2 experiments.
fn herm_eig_2x2<K: Scalar>(h: &DMatrix<K>) -> HermEig<K> {
    let a = h[(0, 0)].real();
    let c = h[(1, 1)].real();
    let b = h[(0, 1)];
    let babs = b.modulus();
    let mean = 0.5 * (a + c);
    let half = 0.5 * (a - c);
    let gap = half.hypot(babs);
    let lo = mean - gap;
    let hi = mean + gap;
    let scale = a.abs().max(c.abs()).max(babs);
    if babs <= scale * 1e-300 || scale == 0.0 {
        // Diagonal
        return if a <= c {
            HermEig {
                values: DVector::from_vec(vec![a, c]),
                vectors: DMatrix::identity(2, 2),
            }
        } else {
            HermEig {
                values: DVector::from_vec(vec![c, a]),
                vectors: DMatrix::from_row_slice(2, 2, &[K::zero(), K::one(), K::one(), K::zero()]),
            }
        };
    }
    // Eigenvector for the larger eigenvalue; pick the component form that
    // avoids cancellation.
    let (x, y) = if hi - a >= hi - c {
        (K::from_real(hi - c), b.conjugate())
    } else {
        (b, K::from_real(hi - a))
    };
    let nrm = (x.modulus_squared() + y.modulus_squared()).sqrt();
    let (x, y) = (x * K::from_real(1.0 / nrm), y * K::from_real(1.0 / nrm));
    // Orthogonal complement is the eigenvector of the smaller eigenvalue.
    let (u, v) = ((-y.conjugate()), x.conjugate());
    HermEig {
        values: DVector::from_vec(vec![lo, hi]),
        vectors: DMatrix::from_row_slice(2, 2, &[u, x, v, y]),
    }
}

fn sort_eig<K: Scalar>(values: DVector<f64>, vectors: DMatrix<K>) -> HermEig<K> {
    let d = values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let sorted_vals = DVector::from_iterator(d, order.iter().map(|&i| values[i]));
    let sorted_vecs = DMatrix::from_fn(d, d, |i, j| vectors[(i, order[j])]);
    HermEig {
        values: sorted_vals,
        vectors: sorted_vecs,
    }
}

/// Supported exponents for positive definite matrix powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdExponent {
    Half,
    NegHalf,
    NegOne,
}

impl PdExponent {
    fn apply(self, x: f64) -> f64 {
        match self {
            PdExponent::Half => x.sqrt(),
            PdExponent::NegHalf => 1.0 / x.sqrt(),
            PdExponent::NegOne => 1.0 / x,
        }
    }
}

/// d×d Hermitian positive definite matrix with cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct HermitianPd<K: Scalar> {
    mat: DMatrix<K>,
    eig: HermEig<K>,
}

impl<K: Scalar> HermitianPd<K> {
    /// Validate and decompose. Fails on non-Hermitian input and on matrices
    /// whose smallest eigenvalue is below `PD_RANK_TOL` times the largest.
    pub fn new(mat: DMatrix<K>) -> Result<Self, LinalgError> {
        let eig = herm_eig(&mat)?;
        let d = eig.values.len();
        if d == 0 {
            return Err(LinalgError::NotSquare { rows: 0, cols: 0 });
        }
        let min_eig = eig.values[0];
        let max_eig = eig.values[d - 1];
        if min_eig <= 0.0 || min_eig <= PD_RANK_TOL * max_eig {
            return Err(LinalgError::Singular { min_eig });
        }
        Ok(Self {
            mat: hermitian_part(&mat),
            eig,
        })
    }

    /// Identity scaled by `c > 0`.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let eig = HermEig {
            values: DVector::from_element(dim, c),
            vectors: DMatrix::identity(dim, dim),
        };
        Self {
            mat: DMatrix::identity(dim, dim) * K::from_real(c),
            eig,
        }
    }

    fn from_eig(eig: HermEig<K>) -> Self {
        let mat = eig.map_matrix(|x| x);
        Self { mat, eig }
    }

    pub fn dim(&self) -> usize {
        self.eig.values.len()
    }

    pub fn matrix(&self) -> &DMatrix<K> {
        &self.mat
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<K> {
        &self.eig.vectors
    }

    pub fn trace(&self) -> f64 {
        self.eig.values.sum()
    }

    pub fn cond(&self) -> f64 {
        self.eig.values[self.dim() - 1] / self.eig.values[0]
    }

    /// A^e for e ∈ {1/2, −1/2, −1}.
    pub fn power(&self, e: PdExponent) -> HermitianPd<K> {
        let d = self.dim();
        let mapped = DVector::from_iterator(d, self.eig.values.iter().map(|&x| e.apply(x)));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| mapped[i].partial_cmp(&mapped[j]).unwrap());
        let eig = HermEig {
            values: DVector::from_iterator(d, order.iter().map(|&i| mapped[i])),
            vectors: DMatrix::from_fn(d, d, |i, j| self.eig.vectors[(i, order[j])]),
        };
        HermitianPd::from_eig(eig)
    }

    /// Rescale by `c > 0` without re-decomposing.
    pub fn rescaled(&self, c: f64) -> HermitianPd<K> {
        HermitianPd {
            mat: &self.mat * K::from_real(c),
            eig: HermEig {
                values: &self.eig.values * c,
                vectors: self.eig.vectors.clone(),
            },
        }
    }
}

/// pd_power as a free function mirroring the module operation table.
pub fn pd_power<K: Scalar>(a: &HermitianPd<K>, e: PdExponent) -> HermitianPd<K> {
    a.power(e)
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm<K: Scalar>(t: &DMatrix<K>) -> f64 {
    t.norm()
}

/// trace(Tᴴ G T); strictly positive for T ≠ 0 and G positive definite.
pub fn trace_quadratic<K: Scalar>(t: &DMatrix<K>, g: &HermitianPd<K>) -> Result<f64, LinalgError> {
    if g.dim() != t.nrows() {
        return Err(LinalgError::DimMismatch(format!(
            "G is {dx}x{dx} but T has {rows} rows",
            dx = g.dim(),
            rows = t.nrows()
        )));
    }
    let gt = g.matrix() * t;
    let mut acc = 0.0;
    for j in 0..t.ncols() {
        acc += t.column(j).dotc(&gt.column(j)).real();
    }
    Ok(acc)
}

/// Largest |λ| of a Hermitian matrix (operator 2-norm).
pub fn hermitian_op_norm<K: Scalar>(a: &DMatrix<K>) -> Result<f64, LinalgError> {
    let eig = herm_eig(a)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max(x.abs())))
}

/// ‖A − I‖₂ for Hermitian A.
pub fn hermitian_dev_from_identity<K: Scalar>(a: &DMatrix<K>) -> Result<f64, LinalgError> {
    let eig = herm_eig(a)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max((x - 1.0).abs())))
}

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// Unitary discrete Fourier transform (forward kernel e^{−2πi jk/d}/√d).
pub fn dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let d = x.len();
    if d == 0 {
        return Vec::new();
    }
    let fft = {
        let mut planner = PLANNER.lock().unwrap();
        if inverse {
            planner.plan_fft_inverse(d)
        } else {
            planner.plan_fft_forward(d)
        }
    };
    let mut buf = x.to_vec();
    fft.process(&mut buf);
    let scale = 1.0 / (d as f64).sqrt();
    for z in &mut buf {
        *z *= scale;
    }
    buf
}

/// Lift a field vector to ℂ and transform.
pub fn dft_field<K: Scalar>(x: &DVector<K>, inverse: bool) -> Vec<Complex64> {
    let lifted: Vec<Complex64> = x.iter().map(|&v| v.to_c64()).collect();
    dft(&lifted, inverse)
}

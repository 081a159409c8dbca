//! Structured linear operators with fast apply/adjoint: circulant blocks
//! (FFT), Gabor blocks, orthonormal projector factors, subsamplers, plus a
//! matrix-free solver that applies the tight-frame preconditioner Γ as the
//! inverse of a reweighted frame operator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::frame::GFrame;
use crate::linalg::dft;
use crate::scalar::{Field, Scalar};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("shape mismatch: operator is {d}x{r}, input has length {got}")]
    ShapeMismatch { d: usize, r: usize, got: usize },
    #[error("{0} requires the complex field")]
    ComplexFieldRequired(&'static str),
    #[error("window must be nonzero")]
    ZeroWindow,
    #[error("column count {k} exceeds dimension {d}")]
    BlockTooWide { k: usize, d: usize },
    #[error("subsampler index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("projector factor columns are not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error(
        "iterative solver stalled after {iterations} iterations \
         (relative residual {achieved:.3e}, target {target:.3e})"
    )]
    SolverStall {
        iterations: usize,
        achieved: f64,
        target: f64,
    },
    #[error("weights/frame mismatch: {0}")]
    WeightMismatch(String),
}

/// Left d×k block of a circulant matrix, applied through the FFT.
#[derive(Debug, Clone)]
pub struct CirculantBlock<K: Scalar> {
    generator: DVector<K>,
    k: usize,
    /// Unnormalized DFT of the generator (eigenvalues of the full circulant).
    spectrum: Vec<Complex64>,
}

impl<K: Scalar> CirculantBlock<K> {
    pub fn new(generator: DVector<K>, k: usize) -> Result<Self, OperatorError> {
        let d = generator.len();
        if k == 0 || k > d {
            return Err(OperatorError::BlockTooWide { k, d });
        }
        let scale = (d as f64).sqrt();
        let spectrum: Vec<Complex64> = crate::linalg::dft_field(&generator, false)
            .into_iter()
            .map(|z| z * scale)
            .collect();
        Ok(Self {
            generator,
            k,
            spectrum,
        })
    }

    pub fn generator(&self) -> &DVector<K> {
        &self.generator
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn dim(&self) -> usize {
        self.generator.len()
    }

    fn apply(&self, c: &DVector<K>) -> DVector<K> {
        let d = self.dim();
        let mut padded: Vec<Complex64> = vec![Complex64::default(); d];
        for (i, v) in c.iter().enumerate() {
            padded[i] = v.to_c64();
        }
        let mut hat = dft(&padded, false);
        for (h, s) in hat.iter_mut().zip(&self.spectrum) {
            *h *= s;
        }
        let out = dft(&hat, true);
        DVector::from_iterator(d, out.into_iter().map(K::from_c64))
    }

    fn adjoint_apply(&self, x: &DVector<K>) -> DVector<K> {
        let lifted: Vec<Complex64> = x.iter().map(|&v| v.to_c64()).collect();
        let mut hat = dft(&lifted, false);
        for (h, s) in hat.iter_mut().zip(&self.spectrum) {
            *h *= s.conj();
        }
        let full = dft(&hat, true);
        DVector::from_iterator(self.k, full.into_iter().take(self.k).map(K::from_c64))
    }

    fn to_dense(&self) -> DMatrix<K> {
        let d = self.dim();
        DMatrix::from_fn(d, self.k, |i, j| self.generator[(i + d - j) % d])
    }
}

/// m²×m Gabor block: rows are the conjugated time-frequency shifts
/// (M^ℓ C^k g)ᴴ of a window g, scaled so the columns are orthonormal.
#[derive(Debug, Clone)]
pub struct GaborBlock<K: Scalar> {
    window: DVector<K>,
    /// 1/√(m‖g‖²)
    scale: f64,
}

impl<K: Scalar> GaborBlock<K> {
    pub fn new(window: DVector<K>) -> Result<Self, OperatorError> {
        if K::FIELD != Field::Complex {
            return Err(OperatorError::ComplexFieldRequired("gabor block"));
        }
        let m = window.len();
        let norm_sq = window.norm_squared();
        if m == 0 || norm_sq == 0.0 {
            return Err(OperatorError::ZeroWindow);
        }
        Ok(Self {
            window,
            scale: 1.0 / (m as f64 * norm_sq).sqrt(),
        })
    }

    pub fn window(&self) -> &DVector<K> {
        &self.window
    }

    fn m(&self) -> usize {
        self.window.len()
    }

    /// Row index for the modulation/shift pair (ℓ, k).
    fn row_index(m: usize, l: usize, k: usize) -> usize {
        l * m + k
    }

    /// (Tc)_{(ℓ,k)} = scale · ⟨M^ℓ C^k g, c⟩, computed as one DFT per shift.
    fn apply(&self, c: &DVector<K>) -> DVector<K> {
        let m = self.m();
        let mut out = DVector::zeros(m * m);
        let fscale = (m as f64).sqrt(); // unnormalized DFT
        for k in 0..m {
            let h: Vec<Complex64> = (0..m)
                .map(|t| c[t].to_c64() * self.window[(t + m - k) % m].to_c64().conj())
                .collect();
            let hat = dft(&h, false);
            for l in 0..m {
                out[Self::row_index(m, l, k)] =
                    K::from_c64(hat[l] * fscale * self.scale);
            }
        }
        out
    }

    /// Tᴴx = scale · Σ x_{(ℓ,k)} M^ℓ C^k g, grouped by shift.
    fn adjoint_apply(&self, x: &DVector<K>) -> DVector<K> {
        let m = self.m();
        let mut out: Vec<Complex64> = vec![Complex64::default(); m];
        let fscale = (m as f64).sqrt();
        for k in 0..m {
            let col: Vec<Complex64> = (0..m)
                .map(|l| x[Self::row_index(m, l, k)].to_c64())
                .collect();
            let lifted = dft(&col, true); // e^{+2πi l t/m} kernel
            for t in 0..m {
                out[t] += lifted[t] * fscale * self.window[(t + m - k) % m].to_c64() * self.scale;
            }
        }
        DVector::from_iterator(m, out.into_iter().map(K::from_c64))
    }

    fn to_dense(&self) -> DMatrix<K> {
        let m = self.m();
        let vectors = gabor_system(&self.window);
        DMatrix::from_fn(m * m, m, |i, j| {
            vectors[i][j].conjugate() * K::from_real(self.scale)
        })
    }
}

/// Tagged operator with fast apply/adjoint matching its dense materialization.
#[derive(Debug, Clone)]
pub enum StructuredOperator<K: Scalar> {
    Dense(DMatrix<K>),
    CirculantBlock(CirculantBlock<K>),
    GaborBlock(GaborBlock<K>),
    ProjectorFactor(DMatrix<K>),
    Subsampler { rows: usize, indices: Vec<usize> },
    Scaled { factor: f64, inner: Box<StructuredOperator<K>> },
}

impl<K: Scalar> StructuredOperator<K> {
    pub fn dense(m: DMatrix<K>) -> Self {
        StructuredOperator::Dense(m)
    }

    pub fn circulant(generator: DVector<K>, k: usize) -> Result<Self, OperatorError> {
        Ok(StructuredOperator::CirculantBlock(CirculantBlock::new(
            generator, k,
        )?))
    }

    pub fn gabor(window: DVector<K>) -> Result<Self, OperatorError> {
        Ok(StructuredOperator::GaborBlock(GaborBlock::new(window)?))
    }

    pub fn projector_factor(m: DMatrix<K>) -> Result<Self, OperatorError> {
        let gram = m.adjoint() * &m;
        let residual = (&gram - DMatrix::<K>::identity(m.ncols(), m.ncols())).norm();
        if residual > 1e-10 * (m.ncols() as f64).sqrt().max(1.0) {
            return Err(OperatorError::NotOrthonormal { residual });
        }
        Ok(StructuredOperator::ProjectorFactor(m))
    }

    pub fn subsampler(rows: usize, indices: Vec<usize>) -> Result<Self, OperatorError> {
        for &index in &indices {
            if index >= rows {
                return Err(OperatorError::IndexOutOfRange { index, rows });
            }
        }
        Ok(StructuredOperator::Subsampler { rows, indices })
    }

    pub fn scaled(inner: StructuredOperator<K>, factor: f64) -> Result<Self, OperatorError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(OperatorError::BadScale(factor));
        }
        Ok(StructuredOperator::Scaled {
            factor,
            inner: Box::new(inner),
        })
    }

    /// (rows, cols).
    pub fn shape(&self) -> (usize, usize) {
        match self {
            StructuredOperator::Dense(m) => (m.nrows(), m.ncols()),
            StructuredOperator::CirculantBlock(c) => (c.dim(), c.k),
            StructuredOperator::GaborBlock(g) => (g.m() * g.m(), g.m()),
            StructuredOperator::ProjectorFactor(m) => (m.nrows(), m.ncols()),
            StructuredOperator::Subsampler { rows, indices } => (*rows, indices.len()),
            StructuredOperator::Scaled { inner, .. } => inner.shape(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StructuredOperator::Dense(_) => "dense",
            StructuredOperator::CirculantBlock(_) => "circulant",
            StructuredOperator::GaborBlock(_) => "gabor",
            StructuredOperator::ProjectorFactor(_) => "projector",
            StructuredOperator::Subsampler { .. } => "subsampler",
            StructuredOperator::Scaled { .. } => "scaled",
        }
    }

    /// True when apply/adjoint run without materializing a dense matrix.
    pub fn is_fast(&self) -> bool {
        match self {
            StructuredOperator::Dense(_) => false,
            StructuredOperator::Scaled { inner, .. } => inner.is_fast(),
            _ => true,
        }
    }

    /// T·c.
    pub fn apply(&self, c: &DVector<K>) -> Result<DVector<K>, OperatorError> {
        let (d, r) = self.shape();
        if c.len() != r {
            return Err(OperatorError::ShapeMismatch { d, r, got: c.len() });
        }
        Ok(match self {
            StructuredOperator::Dense(m) => m * c,
            StructuredOperator::CirculantBlock(b) => b.apply(c),
            StructuredOperator::GaborBlock(g) => g.apply(c),
            StructuredOperator::ProjectorFactor(m) => m * c,
            StructuredOperator::Subsampler { rows, indices } => {
                let mut out = DVector::zeros(*rows);
                for (j, &i) in indices.iter().enumerate() {
                    out[i] += c[j];
                }
                out
            }
            StructuredOperator::Scaled { factor, inner } => {
                inner.apply(c)? * K::from_real(*factor)
            }
        })
    }

    /// Tᴴ·x.
    pub fn adjoint_apply(&self, x: &DVector<K>) -> Result<DVector<K>, OperatorError> {
        let (d, r) = self.shape();
        if x.len() != d {
            return Err(OperatorError::ShapeMismatch { d, r, got: x.len() });
        }
        Ok(match self {
            StructuredOperator::Dense(m) => m.adjoint() * x,
            StructuredOperator::CirculantBlock(b) => b.adjoint_apply(x),
            StructuredOperator::GaborBlock(g) => g.adjoint_apply(x),
            StructuredOperator::ProjectorFactor(m) => m.adjoint() * x,
            StructuredOperator::Subsampler { indices, .. } => {
                DVector::from_iterator(indices.len(), indices.iter().map(|&i| x[i]))
            }
            StructuredOperator::Scaled { factor, inner } => {
                inner.adjoint_apply(x)? * K::from_real(*factor)
            }
        })
    }

    /// Exact dense materialization.
    pub fn to_dense(&self) -> DMatrix<K> {
        match self {
            StructuredOperator::Dense(m) => m.clone(),
            StructuredOperator::CirculantBlock(b) => b.to_dense(),
            StructuredOperator::GaborBlock(g) => g.to_dense(),
            StructuredOperator::ProjectorFactor(m) => m.clone(),
            StructuredOperator::Subsampler { rows, indices } => {
                DMatrix::from_fn(*rows, indices.len(), |i, j| {
                    if indices[j] == i {
                        K::one()
                    } else {
                        K::zero()
                    }
                })
            }
            StructuredOperator::Scaled { factor, inner } => {
                inner.to_dense() * K::from_real(*factor)
            }
        }
    }

    /// ‖T‖²_HS without materializing when the structure gives it directly.
    pub fn hs_norm_squared(&self) -> f64 {
        match self {
            StructuredOperator::Dense(m) => m.norm_squared(),
            StructuredOperator::CirculantBlock(b) => {
                b.k as f64 * b.generator.norm_squared()
            }
            StructuredOperator::GaborBlock(g) => g.m() as f64,
            StructuredOperator::ProjectorFactor(m) => m.ncols() as f64,
            StructuredOperator::Subsampler { indices, .. } => indices.len() as f64,
            StructuredOperator::Scaled { factor, inner } => {
                factor * factor * inner.hs_norm_squared()
            }
        }
    }
}

/// The m² time-frequency shifts M^ℓ C^k g (unscaled), ℓ major and k minor,
/// matching the row order of the Gabor block.
pub fn gabor_system<K: Scalar>(window: &DVector<K>) -> Vec<DVector<K>> {
    let m = window.len();
    let mut out = Vec::with_capacity(m * m);
    for l in 0..m {
        for k in 0..m {
            let v = DVector::from_fn(m, |t, _| {
                let phase = std::f64::consts::TAU * (l as f64) * (t as f64) / m as f64;
                let modulation = Complex64::new(phase.cos(), phase.sin());
                K::from_c64(window[(t + m - k) % m].to_c64() * modulation)
            });
            out.push(v);
        }
    }
    out
}

/// Apply Γ = (Σⱼ cⱼ² Tⱼ Tⱼᴴ)⁻¹ to `y` with a conjugate-gradient solve whose
/// matrix-vector products use only the elements' fast apply/adjoint.
pub fn gamma_apply<K: Scalar>(
    weights: &[f64],
    frame: &GFrame<K>,
    y: &DVector<K>,
    tol: f64,
) -> Result<DVector<K>, OperatorError> {
    let d = frame.ambient_dim();
    if weights.len() != frame.n() {
        return Err(OperatorError::WeightMismatch(format!(
            "{} weights for {} elements",
            weights.len(),
            frame.n()
        )));
    }
    if y.len() != d {
        return Err(OperatorError::ShapeMismatch {
            d,
            r: d,
            got: y.len(),
        });
    }
    let apply_inv_gamma = |v: &DVector<K>| -> Result<DVector<K>, OperatorError> {
        let mut acc: DVector<K> = DVector::zeros(d);
        for (op, &c) in frame.elements().iter().zip(weights) {
            let coeff = op.adjoint_apply(v)?;
            acc += op.apply(&coeff)? * K::from_real(c * c);
        }
        Ok(acc)
    };
    cg_solve(apply_inv_gamma, y, tol, 10 * d)
}

/// Conjugate gradients for a Hermitian positive definite operator.
fn cg_solve<K: Scalar>(
    apply: impl Fn(&DVector<K>) -> Result<DVector<K>, OperatorError>,
    b: &DVector<K>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<K>, OperatorError> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(DVector::zeros(b.len()));
    }
    let mut x: DVector<K> = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = r.norm_squared();
    for iterations in 0..max_iter {
        if rs_old.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let pap = p.dotc(&ap).real();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(OperatorError::SolverStall {
                iterations,
                achieved: rs_old.sqrt() / b_norm,
                target: tol,
            });
        }
        let alpha = rs_old / pap;
        x += &p * K::from_real(alpha);
        r -= &ap * K::from_real(alpha);
        let rs_new = r.norm_squared();
        let beta = rs_new / rs_old;
        p = &r + &p * K::from_real(beta);
        rs_old = rs_new;
    }
    if rs_old.sqrt() <= tol * b_norm {
        Ok(x)
    } else {
        Err(OperatorError::SolverStall {
            iterations: max_iter,
            achieved: rs_old.sqrt() / b_norm,
            target: tol,
        })
    }
}

//! Fixed-point construction of unit-norm tight frames: the map M(Γ), the
//! trace-normalized iteration on positive definite matrices, convergence and
//! divergence detection, and assembly of the tight frame and its weights.

use nalgebra::{Cholesky, DMatrix};
use serde_json::{json, Value};
use thiserror::Error;

use crate::frame::{FrameError, GFrame, RANK_TOL};
use crate::linalg::{herm_eig, hermitian_part, HermitianPd, LinalgError, PdExponent};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TylerError {
    #[error("element {index} is zero; unit-norm tight frames need nonzero elements")]
    ZeroElement { index: usize },
    #[error("element {index} produced a degenerate channel weight")]
    DegenerateWeight { index: usize },
    #[error("normalized frame is not tight (defect {defect:.3e}); cannot compare")]
    NotTight { defect: f64 },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Scalar diagnostics of one iteration; the matrices Γ_k and M_k themselves
/// are transient (every logged invariant is a function of these scalars).
#[derive(Debug, Clone, Copy)]
pub struct IterationState {
    pub k: usize,
    pub trace_gamma: f64,
    pub trace_m: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// ‖M(Γ_k) − I‖₂.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TightenStatus {
    Converged,
    MaxIterations,
    Diverged,
    NotAFrame,
}

impl TightenStatus {
    pub fn name(self) -> &'static str {
        match self {
            TightenStatus::Converged => "converged",
            TightenStatus::MaxIterations => "max_iterations",
            TightenStatus::Diverged => "diverged",
            TightenStatus::NotAFrame => "not_a_frame",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TightenResult<K: Scalar> {
    pub status: TightenStatus,
    /// Final trace-1 iterate; the preconditioner when converged.
    pub gamma: HermitianPd<K>,
    /// cⱼ = √(d / (n · trace(Tⱼᴴ Γ Tⱼ))); Γ⁻¹ = Σ (cⱼTⱼ)(cⱼTⱼ)ᴴ at the fixed point.
    pub weights: Vec<f64>,
    /// Rⱼ = Γ^{1/2}Tⱼ / ‖Γ^{1/2}Tⱼ‖; a unit-norm tight frame when converged.
    pub tight_frame: GFrame<K>,
    pub log: Vec<IterationState>,
    /// Number of iteration steps taken.
    pub iterations: usize,
}

impl<K: Scalar> TightenResult<K> {
    pub fn converged(&self) -> bool {
        self.status == TightenStatus::Converged
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.log.iter().map(|s| s.residual).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "status": self.status.name(),
            "iterations": self.iterations,
            "residuals": self.residuals(),
            "gamma": crate::formats::write_matrix(self.gamma.matrix()),
            "weights": self.weights,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TightenOptions {
    /// Convergence threshold on ‖M(Γ_k) − I‖₂.
    pub tol: f64,
    pub max_iter: usize,
    /// Declared diverged when the best residual fails to improve by at least
    /// `divergence_min_decrease` over this many iterations.
    pub divergence_window: usize,
    pub divergence_min_decrease: f64,
}

impl Default for TightenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            divergence_window: 100,
            divergence_min_decrease: 1e-15,
        }
    }
}

/// Precomputed dense views of the frame used by the iteration.
struct FrameCache<K: Scalar> {
    dense: Vec<DMatrix<K>>,
    grams: Vec<DMatrix<K>>,
    d: usize,
    n: usize,
}

impl<K: Scalar> FrameCache<K> {
    fn new(frame: &GFrame<K>) -> Result<Self, TylerError> {
        let dense = frame.dense_elements();
        for (index, t) in dense.iter().enumerate() {
            if t.norm_squared() == 0.0 {
                return Err(TylerError::ZeroElement { index });
            }
        }
        let grams = dense.iter().map(|t| t * t.adjoint()).collect();
        Ok(Self {
            dense,
            grams,
            d: frame.ambient_dim(),
            n: frame.n(),
        })
    }

    /// tⱼ = trace(Tⱼᴴ Γ Tⱼ) = ⟨Γ, TⱼTⱼᴴ⟩ for all j.
    fn channel_traces(&self, gamma: &DMatrix<K>) -> Result<Vec<f64>, TylerError> {
        self.grams
            .iter()
            .enumerate()
            .map(|(index, gram)| {
                let mut acc = 0.0;
                for (g, w) in gamma.iter().zip(gram.iter()) {
                    acc += (g.conjugate() * *w).real();
                }
                if acc > 0.0 && acc.is_finite() {
                    Ok(acc)
                } else {
                    Err(TylerError::DegenerateWeight { index })
                }
            })
            .collect()
    }

    /// A(Γ) = (d/n) Σⱼ TⱼTⱼᴴ / tⱼ, so that M(Γ) = Γ^{1/2} A Γ^{1/2}.
    fn reweighted_operator(&self, traces: &[f64]) -> DMatrix<K> {
        let mut a = DMatrix::<K>::zeros(self.d, self.d);
        for (gram, &t) in self.grams.iter().zip(traces) {
            a += gram * K::from_real(1.0 / t);
        }
        hermitian_part(&(a * K::from_real(self.d as f64 / self.n as f64)))
    }
}

/// M(Γ) = (d/n) Σⱼ Γ^{1/2} Tⱼ Tⱼᴴ Γ^{1/2} / trace(Tⱼᴴ Γ Tⱼ).
///
/// Hermitian, positive semidefinite, trace d; positive definite exactly when
/// the collection is a frame. Invariant under rescaling of Γ.
pub fn m_map<K: Scalar>(frame: &GFrame<K>, g: &HermitianPd<K>) -> Result<DMatrix<K>, TylerError> {
    let cache = FrameCache::new(frame)?;
    if g.dim() != cache.d {
        return Err(TylerError::Frame(FrameError::VectorShape {
            got: g.dim(),
            expected: cache.d,
        }));
    }
    let traces = cache.channel_traces(g.matrix())?;
    let a = cache.reweighted_operator(&traces);
    let sqrt = g.power(PdExponent::Half);
    Ok(hermitian_part(&(sqrt.matrix() * a * sqrt.matrix())))
}

fn step_from_operator<K: Scalar>(a: &DMatrix<K>) -> Option<HermitianPd<K>> {
    let chol = Cholesky::new(a.clone())?;
    let inv = chol.inverse();
    let trace = inv.trace().real();
    if !(trace.is_finite() && trace > 0.0) {
        return None;
    }
    let gamma = hermitian_part(&(inv * K::from_real(1.0 / trace)));
    HermitianPd::new(gamma).ok()
}

/// One step of the iteration: Γ ↦ A(Γ)⁻¹ / trace(A(Γ)⁻¹).
///
/// Algebraically identical to Γ^{1/2}M(Γ)⁻¹Γ^{1/2}/trace(ΓM(Γ)⁻¹); the two
/// routes are cross-checked in debug builds.
pub fn tyler_step<K: Scalar>(
    frame: &GFrame<K>,
    g: &HermitianPd<K>,
) -> Result<HermitianPd<K>, TylerError> {
    let cache = FrameCache::new(frame)?;
    let traces = cache.channel_traces(g.matrix())?;
    let a = cache.reweighted_operator(&traces);
    let next = step_from_operator(&a).ok_or(FrameError::NotAFrame { min_eig: 0.0 })?;
    #[cfg(debug_assertions)]
    {
        let m = m_map(frame, g)?;
        let eig = herm_eig(&m)?;
        if eig.values[0] > RANK_TOL * eig.values[cache.d - 1] {
            cross_check_step(&next, g, &eig, &TightenOptions::default());
        }
    }
    Ok(next)
}

/// Deviation of the trace-normalized frame operator from the identity:
/// ‖(d/Σⱼ‖Tⱼ‖²)·S − I‖₂. Zero exactly for tight frames.
pub fn tightness_defect<K: Scalar>(frame: &GFrame<K>) -> Result<f64, TylerError> {
    let total: f64 = frame.elements().iter().map(|op| op.hs_norm_squared()).sum();
    if total <= 0.0 {
        return Err(TylerError::ZeroElement { index: 0 });
    }
    let s = frame.frame_operator() * K::from_real(frame.ambient_dim() as f64 / total);
    let eig = herm_eig(&s)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0_f64, |acc, &x| acc.max((x - 1.0).abs())))
}

/// Run the iteration from Γ₀ = I/d.
pub fn tighten<K: Scalar>(
    frame: &GFrame<K>,
    opts: &TightenOptions,
) -> Result<TightenResult<K>, TylerError> {
    let d = frame.ambient_dim();
    tighten_from_init(frame, &HermitianPd::scaled_identity(d, 1.0 / d as f64), opts)
}

/// Run the iteration from an arbitrary positive definite start (rescaled to
/// trace 1). Convergence is only guaranteed from I/d; this entry point exists
/// for uniqueness experiments.
pub fn tighten_from_init<K: Scalar>(
    frame: &GFrame<K>,
    gamma0: &HermitianPd<K>,
    opts: &TightenOptions,
) -> Result<TightenResult<K>, TylerError> {
    let cache = FrameCache::new(frame)?;
    let d = cache.d;
    let mut gamma = gamma0.rescaled(1.0 / gamma0.trace());

    // Non-frames cannot converge; detect up front.
    let s_eig = herm_eig(&frame.frame_operator())?;
    let is_frame = s_eig.values[d - 1] > 0.0 && s_eig.values[0] > RANK_TOL * s_eig.values[d - 1];
    if !is_frame {
        let traces = cache.channel_traces(gamma.matrix())?;
        return Ok(finish(
            TightenStatus::NotAFrame,
            gamma,
            &cache,
            &traces,
            Vec::new(),
            0,
        ));
    }

    let mut log: Vec<IterationState> = Vec::new();
    let mut status = TightenStatus::MaxIterations;
    let mut iterations = 0;
    let mut traces = cache.channel_traces(gamma.matrix())?;
    for k in 0..=opts.max_iter {
        traces = cache.channel_traces(gamma.matrix())?;
        let a = cache.reweighted_operator(&traces);
        let sqrt = gamma.power(PdExponent::Half);
        let m = hermitian_part(&(sqrt.matrix() * &a * sqrt.matrix()));
        let m_eig = herm_eig(&m)?;
        let lambda_min = m_eig.values[0];
        let lambda_max = m_eig.values[d - 1];
        let residual = (lambda_max - 1.0).abs().max((1.0 - lambda_min).abs());
        log.push(IterationState {
            k,
            trace_gamma: gamma.trace(),
            trace_m: m_eig.values.sum(),
            lambda_min,
            lambda_max,
            residual,
        });
        iterations = k;
        if residual <= opts.tol {
            status = TightenStatus::Converged;
            break;
        }
        if stalled(&log, opts) {
            status = TightenStatus::Diverged;
            break;
        }
        if k == opts.max_iter {
            status = TightenStatus::MaxIterations;
            break;
        }
        match step_from_operator(&a) {
            Some(next) => {
                #[cfg(debug_assertions)]
                cross_check_step(&next, &gamma, &m_eig, opts);
                gamma = next;
            }
            None => {
                status = TightenStatus::Diverged;
                break;
            }
        }
    }
    Ok(finish(status, gamma, &cache, &traces, log, iterations))
}

#[cfg(debug_assertions)]
fn cross_check_step<K: Scalar>(
    next: &HermitianPd<K>,
    gamma: &HermitianPd<K>,
    m_eig: &crate::linalg::HermEig<K>,
    _opts: &TightenOptions,
) {
    if m_eig.values[0] <= RANK_TOL * m_eig.values[m_eig.values.len() - 1] {
        return;
    }
    let m_inv = m_eig.map_matrix(|x| 1.0 / x);
    let sqrt = gamma.power(PdExponent::Half);
    let raw = sqrt.matrix() * &m_inv * sqrt.matrix();
    let alt = hermitian_part(&(&raw * K::from_real(1.0 / raw.trace().real())));
    // roundoff in either route grows with the conditioning of the iterate
    let tol = 1e-10 * gamma.cond().max(1.0);
    debug_assert!(
        (next.matrix() - &alt).norm() <= tol,
        "iteration routes disagree by {}",
        (next.matrix() - &alt).norm()
    );
}

/// No new best residual by at least `divergence_min_decrease` within the
/// trailing window.
fn stalled(log: &[IterationState], opts: &TightenOptions) -> bool {
    let w = opts.divergence_window;
    if log.len() <= w {
        return false;
    }
    let split = log.len() - w;
    let best_old = log[..split]
        .iter()
        .map(|s| s.residual)
        .fold(f64::INFINITY, f64::min);
    let best_recent = log[split..]
        .iter()
        .map(|s| s.residual)
        .fold(f64::INFINITY, f64::min);
    best_recent > best_old - opts.divergence_min_decrease
}

fn finish<K: Scalar>(
    status: TightenStatus,
    gamma: HermitianPd<K>,
    cache: &FrameCache<K>,
    traces: &[f64],
    log: Vec<IterationState>,
    iterations: usize,
) -> TightenResult<K> {
    let (d, n) = (cache.d, cache.n);
    let weights: Vec<f64> = traces
        .iter()
        .map(|&t| (d as f64 / (n as f64 * t)).sqrt())
        .collect();
    let sqrt = gamma.power(PdExponent::Half);
    let tight_elements: Vec<DMatrix<K>> = cache
        .dense
        .iter()
        .zip(traces)
        .map(|(t, &tr)| sqrt.matrix() * t * K::from_real(1.0 / tr.sqrt()))
        .collect();
    let tight_frame = GFrame::from_dense(tight_elements).expect("same shapes as input frame");
    TightenResult {
        status,
        gamma,
        weights,
        tight_frame,
        log,
        iterations,
    }
}

/// Whether two tight normalizations {G^{1/2}Tⱼ/‖G^{1/2}Tⱼ‖} agree elementwise.
///
/// Both inputs must already produce tight frames (defect ≤ 1e-8); by
/// uniqueness of the tight normalization they then must coincide, and this
/// check confirms it numerically.
pub fn uniqueness_check<K: Scalar>(
    frame: &GFrame<K>,
    g_a: &HermitianPd<K>,
    g_b: &HermitianPd<K>,
) -> Result<bool, TylerError> {
    let tol = 1e-8;
    let normalized = |g: &HermitianPd<K>| -> Result<GFrame<K>, TylerError> {
        let sqrt = g.power(PdExponent::Half);
        let elements: Vec<DMatrix<K>> = frame
            .dense_elements()
            .iter()
            .map(|t| {
                let st = sqrt.matrix() * t;
                let norm = st.norm();
                st * K::from_real(1.0 / norm)
            })
            .collect();
        Ok(GFrame::from_dense(elements)?)
    };
    let fa = normalized(g_a)?;
    let fb = normalized(g_b)?;
    for f in [&fa, &fb] {
        let defect = tightness_defect(f)?;
        if defect > tol {
            return Err(TylerError::NotTight { defect });
        }
    }
    let agree = fa
        .dense_elements()
        .iter()
        .zip(fb.dense_elements())
        .all(|(a, b)| {
            (a - b)
                .iter()
                .map(|z| z.modulus())
                .fold(0.0_f64, f64::max)
                <= 1e-8
        });
    Ok(agree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use nalgebra::DVector;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn unit_vectors_frame(angles: &[f64]) -> GFrame<f64> {
        GFrame::from_vectors(
            angles
                .iter()
                .map(|&a| DVector::from_vec(vec![a.cos(), a.sin()]))
                .collect(),
        )
        .unwrap()
    }

    fn mercedes() -> GFrame<f64> {
        unit_vectors_frame(&[0.0, std::f64::consts::PI / 3.0, 2.0 * std::f64::consts::PI / 3.0])
    }

    fn random_frame(d: usize, r: usize, n: usize, seed: u64) -> GFrame<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        GFrame::from_dense(
            (0..n)
                .map(|_| DMatrix::from_fn(d, r, |_, _| f64::std_normal(&mut rng)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn m_map_tight_frame_gives_identity() {
        let f = mercedes();
        let g = HermitianPd::scaled_identity(2, 0.5);
        let m = m_map(&f, &g).unwrap();
        assert!((m - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn m_map_scale_invariance_and_trace() {
        for seed in 0..5u64 {
            let f = random_frame(3, 2, 7, seed);
            let g = HermitianPd::new(crate::linalg::hermitian_part(
                &(DMatrix::from_fn(3, 3, |_, _| {
                    f64::std_normal(&mut ChaCha12Rng::seed_from_u64(seed + 50))
                })
                .transpose()
                    * DMatrix::from_fn(3, 3, |_, _| {
                        f64::std_normal(&mut ChaCha12Rng::seed_from_u64(seed + 50))
                    })
                    + DMatrix::identity(3, 3)),
            ))
            .unwrap();
            let m1 = m_map(&f, &g).unwrap();
            let m7 = m_map(&f, &g.rescaled(7.0)).unwrap();
            assert!((&m1 - &m7).norm() < 1e-12, "scale invariance");
            assert!((m1.trace() - 3.0).abs() < 1e-10, "trace(M) = d");
        }
    }

    #[test]
    fn m_map_matches_termwise_dense_oracle() {
        let f = random_frame(2, 1, 5, 3);
        let g = HermitianPd::scaled_identity(2, 0.5);
        let m = m_map(&f, &g).unwrap();
        // independent dense evaluation of the defining sum
        let sqrt_g = DMatrix::identity(2, 2) * (0.5_f64).sqrt();
        let mut expected = DMatrix::<f64>::zeros(2, 2);
        for t in f.dense_elements() {
            let gt = g.matrix() * &t;
            let tr: f64 = (0..t.ncols()).map(|j| t.column(j).dot(&gt.column(j))).sum();
            expected += (&sqrt_g * &t * t.transpose() * &sqrt_g) / tr;
        }
        expected *= 2.0 / 5.0;
        assert!((m - expected).norm() < 1e-12);
    }

    #[test]
    fn m_map_rejects_zero_elements() {
        let f = GFrame::from_dense(vec![DMatrix::<f64>::identity(2, 2), DMatrix::zeros(2, 2)]).unwrap();
        let g = HermitianPd::scaled_identity(2, 0.5);
        assert!(matches!(
            m_map(&f, &g),
            Err(TylerError::ZeroElement { index: 1 })
        ));
    }

    #[test]
    fn tyler_step_fixed_point_and_first_step() {
        // fixed point: unit-norm tight frame, Γ = I/d
        let f = mercedes();
        let g = HermitianPd::scaled_identity(2, 0.5);
        let next = tyler_step(&f, &g).unwrap();
        assert!((next.matrix() - g.matrix()).norm() < 1e-12);

        // first step from Γ₀ = I/d equals S⁻¹/trace(S⁻¹) for unit-norm
        // elements (the channel traces are then constant across j)
        let raw = random_frame(3, 1, 6, 8);
        let f = GFrame::from_dense(
            raw.dense_elements()
                .iter()
                .map(|t| t / t.norm())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let g0 = HermitianPd::scaled_identity(3, 1.0 / 3.0);
        let g1 = tyler_step(&f, &g0).unwrap();
        let s_inv = HermitianPd::new(f.frame_operator())
            .unwrap()
            .power(PdExponent::NegOne);
        let expected = s_inv.rescaled(1.0 / s_inv.trace());
        assert!((g1.matrix() - expected.matrix()).norm() < 1e-10);
    }

    #[test]
    fn tyler_step_two_routes_agree() {
        // eq-of-iterates route vs square-root route, in release mode too
        for seed in 0..5u64 {
            let f = random_frame(3, 2, 8, 90 + seed);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let raw = DMatrix::from_fn(3, 3, |_, _| f64::std_normal(&mut rng));
            let g = HermitianPd::new(&raw * raw.transpose() + DMatrix::identity(3, 3)).unwrap();
            let g = g.rescaled(1.0 / g.trace());
            let via_inverse = tyler_step(&f, &g).unwrap();
            // square-root route
            let m = m_map(&f, &g).unwrap();
            let m_pd = HermitianPd::new(m).unwrap();
            let sqrt = g.power(PdExponent::Half);
            let raw = sqrt.matrix() * m_pd.power(PdExponent::NegOne).matrix() * sqrt.matrix();
            let alt = &raw / raw.trace();
            assert!((via_inverse.matrix() - &alt).norm() < 1e-10);
        }
    }

    #[test]
    fn tighten_tight_input_converges_immediately() {
        let f = mercedes();
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert!(res.converged());
        assert!(res.iterations <= 2);
        assert!((res.gamma.matrix() - DMatrix::identity(2, 2) * 0.5).norm() < 1e-10);
        for (r, t) in res.tight_frame.dense_elements().iter().zip(f.dense_elements()) {
            assert!((r - t).norm() < 1e-10);
        }
    }

    #[test]
    fn tighten_single_regular_element() {
        // one regular T: R = (TTᴴ)^{-1/2} T / √d
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let t = DMatrix::from_fn(3, 3, |_, _| f64::std_normal(&mut rng))
            + DMatrix::identity(3, 3) * 2.0;
        let f = GFrame::from_dense(vec![t.clone()]).unwrap();
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert!(res.converged());
        let tt = HermitianPd::new(crate::linalg::hermitian_part(&(&t * t.transpose()))).unwrap();
        let expected = tt.power(PdExponent::NegHalf).matrix() * &t / 3.0_f64.sqrt();
        let got = res.tight_frame.dense_elements()[0].clone();
        assert!((got - expected).norm() < 1e-8);
    }

    #[test]
    fn tighten_random_frames_properties() {
        for seed in 0..8u64 {
            let f = random_frame(3, 1, 12, 200 + seed);
            let res = tighten(&f, &TightenOptions::default()).unwrap();
            assert!(res.converged(), "seed {seed}");
            // Every R_j has unit HS norm
            for r in res.tight_frame.dense_elements() {
                assert!((r.norm() - 1.0).abs() < 1e-10);
            }
            // Σ R_j R_jᴴ = (n/d) I
            let s = res.tight_frame.frame_operator();
            let expected = DMatrix::identity(3, 3) * (12.0 / 3.0);
            assert!((s - expected).norm() < 1e-8);
            // Γ⁻¹ = Σ (c_j T_j)(c_j T_j)ᴴ
            let mut inv = DMatrix::<f64>::zeros(3, 3);
            for (t, &c) in f.dense_elements().iter().zip(&res.weights) {
                inv += (t * t.transpose()) * (c * c);
            }
            let gamma_inv = res.gamma.power(PdExponent::NegOne);
            assert!(
                (inv.clone() - gamma_inv.matrix()).norm() <= 1e-8 * gamma_inv.matrix().norm()
            );
            // defect of the output frame
            assert!(tightness_defect(&res.tight_frame).unwrap() <= 1e-8);
            // monotone extreme eigenvalues along the run
            for w in res.log.windows(2) {
                assert!(w[1].lambda_min >= w[0].lambda_min - 1e-12);
                assert!(w[1].lambda_max <= w[0].lambda_max + 1e-12);
            }
            // trace invariants per state
            for s in &res.log {
                assert!((s.trace_gamma - 1.0).abs() < 1e-12);
                assert!((s.trace_m - 3.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tighten_complex_frame() {
        let mut rng = ChaCha12Rng::seed_from_u64(321);
        let f = GFrame::from_dense(
            (0..8)
                .map(|_| DMatrix::from_fn(2, 1, |_, _| Complex64::std_normal(&mut rng)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert!(res.converged());
        let s = res.tight_frame.frame_operator();
        let expected = DMatrix::<Complex64>::identity(2, 2) * Complex64::new(4.0, 0.0);
        assert!((s - expected).norm() < 1e-8);
    }

    #[test]
    fn tighten_equivariance_under_unitary_maps() {
        let f = random_frame(3, 2, 9, 55);
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert!(res.converged());
        // random rotation via QR of a Gaussian matrix
        let mut rng = ChaCha12Rng::seed_from_u64(56);
        let raw = DMatrix::from_fn(3, 3, |_, _| f64::std_normal(&mut rng));
        let u = raw.qr().q();
        let rotated = GFrame::from_dense(
            f.dense_elements().iter().map(|t| &u * t).collect::<Vec<_>>(),
        )
        .unwrap();
        let res_rot = tighten(&rotated, &TightenOptions::default()).unwrap();
        assert!(res_rot.converged());
        let expected_gamma = &u * res.gamma.matrix() * u.transpose();
        assert!((res_rot.gamma.matrix() - expected_gamma).norm() < 1e-8);
        for (r_rot, r) in res_rot
            .tight_frame
            .dense_elements()
            .iter()
            .zip(res.tight_frame.dense_elements())
        {
            assert!((r_rot - &u * r).norm() < 1e-8);
        }
    }

    #[test]
    fn tighten_failure_family() {
        // ranges of the first two elements coincide at t=0: no convergence
        let family = |t: f64| {
            GFrame::from_dense(vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, t, 0.0]),
                DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            ])
            .unwrap()
        };
        let opts = TightenOptions::default();
        let res0 = tighten(&family(0.0), &opts).unwrap();
        assert!(matches!(
            res0.status,
            TightenStatus::Diverged | TightenStatus::MaxIterations
        ));
        let res1 = tighten(&family(0.1), &opts).unwrap();
        assert!(res1.converged());
        // the monotone diagnostics hold even in the failing run
        for w in res0.log.windows(2) {
            assert!(w[1].lambda_min >= w[0].lambda_min - 1e-12);
            assert!(w[1].lambda_max <= w[0].lambda_max + 1e-12);
        }
    }

    #[test]
    fn tighten_not_a_frame_status() {
        let f = GFrame::from_vectors(vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
        ])
        .unwrap();
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert_eq!(res.status, TightenStatus::NotAFrame);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn tighten_rejects_zero_element() {
        let f = GFrame::from_dense(vec![DMatrix::<f64>::identity(2, 2), DMatrix::zeros(2, 2)]).unwrap();
        assert!(matches!(
            tighten(&f, &TightenOptions::default()),
            Err(TylerError::ZeroElement { index: 1 })
        ));
    }

    #[test]
    fn tightness_defect_cases() {
        assert!(tightness_defect(&mercedes()).unwrap() < 1e-12);
        let f = GFrame::from_vectors(vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ])
        .unwrap();
        assert!((tightness_defect(&f).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let res = tighten(&random_frame(2, 1, 6, 500), &TightenOptions::default()).unwrap();
        assert!(tightness_defect(&res.tight_frame).unwrap() <= 1e-8);
    }

    #[test]
    fn uniqueness_scale_invariance_and_reconvergence() {
        let f = random_frame(2, 1, 5, 81);
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        assert!(res.converged());
        // G_b = 3 G_a gives the identical frame
        assert!(uniqueness_check(&f, &res.gamma, &res.gamma.rescaled(3.0)).unwrap());

        // perturb, reconverge from the perturbed start, compare
        let mut perturbed = res.gamma.matrix().clone();
        perturbed[(0, 1)] += 0.05;
        perturbed[(1, 0)] += 0.05;
        let start = HermitianPd::new(perturbed).unwrap();
        let rerun = tighten_from_init(&f, &start, &TightenOptions::default()).unwrap();
        assert!(rerun.converged());
        assert!(uniqueness_check(&f, &res.gamma, &rerun.gamma).unwrap());
    }

    #[test]
    fn uniqueness_rejects_non_tight_input() {
        let f = random_frame(2, 1, 5, 82);
        let res = tighten(&f, &TightenOptions::default()).unwrap();
        let mut off = res.gamma.matrix().clone();
        off[(0, 1)] += 0.2;
        off[(1, 0)] += 0.2;
        let bad = HermitianPd::new(off).unwrap();
        assert!(matches!(
            uniqueness_check(&f, &res.gamma, &bad),
            Err(TylerError::NotTight { .. })
        ));
    }

    #[test]
    fn converged_gamma_matches_brute_force_minimizer() {
        // independent oracle: grid refinement over trace-1 SPD 2x2 matrices
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..3 {
            let n = rng.random_range(3..6);
            let angles: Vec<f64> = (0..n)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect();
            let f = unit_vectors_frame(&angles);
            let report = f.check_conditions(crate::frame::CheckMode::Exhaustive);
            if !report.all_hold() {
                continue;
            }
            let res = tighten(&f, &TightenOptions::default()).unwrap();
            assert!(res.converged());
            let vectors: Vec<[f64; 2]> = angles.iter().map(|&a| [a.cos(), a.sin()]).collect();
            let oracle = reference::brute_force_tight_gamma_2x2(&vectors);
            let err = (res.gamma.matrix()
                - DMatrix::from_row_slice(2, 2, &[oracle[0], oracle[1], oracle[1], oracle[2]]))
            .norm();
            assert!(err <= 1e-4, "gamma vs brute force differ by {err}");
        }
    }

    #[test]
    fn result_json_shape() {
        let res = tighten(&mercedes(), &TightenOptions::default()).unwrap();
        let v = res.to_json();
        assert_eq!(v["status"], "converged");
        assert!(v["gamma"].as_str().unwrap().starts_with("2 2 real"));
        assert_eq!(v["weights"].as_array().unwrap().len(), 3);
    }
}

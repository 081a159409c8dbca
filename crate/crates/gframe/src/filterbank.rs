//! Perfect-reconstruction analysis–processing–synthesis pipelines built on a
//! frame: the two preconditioned schemes (Γ^{1/2} on both sides, or Γ applied
//! once after synthesis as an inverse frame operator), the canonical dual
//! pair, and the canonical tight scheme, plus a soft-threshold denoising
//! harness with RMSE reporting.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

use crate::formats::Pgm;
use crate::frame::{FrameError, GFrame};
use crate::linalg::{HermitianPd, LinalgError, PdExponent};
use crate::operators::{gamma_apply, OperatorError};
use crate::scalar::Scalar;
use crate::tyler::{TightenResult, TylerError};

#[derive(Debug, Error)]
pub enum FilterbankError {
    #[error("scheme {0:?} needs a converged tighten result for this frame")]
    MissingTighten(&'static str),
    #[error("tighten result does not match the frame ({0})")]
    TightenMismatch(String),
    #[error("threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("input vector has length {got}, expected {expected}")]
    InputShape { got: usize, expected: usize },
    #[error("image size {width}x{height} is not divisible into tiles of {tile}")]
    BadTiling {
        width: usize,
        height: usize,
        tile: usize,
    },
    #[error("snr must be positive (or infinite for noiseless), got {0}")]
    BadSnr(f64),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Tyler(#[from] TylerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Γ^{1/2}-weighted analysis and synthesis around unit-norm channels.
    PreconditionedSymmetric,
    /// Plain analysis, reweighted synthesis, then one application of Γ as
    /// the inverse of the reweighted frame operator (matrix-free when the
    /// elements are structured).
    PreconditionedPost,
    /// Analysis with the frame, synthesis with the canonical dual.
    CanonicalDualSynthesis,
    /// Analysis with the canonical dual, synthesis with the frame.
    CanonicalDualAnalysis,
    /// Both sides use the canonical Parseval frame.
    CanonicalTight,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::PreconditionedSymmetric,
        Scheme::PreconditionedPost,
        Scheme::CanonicalDualSynthesis,
        Scheme::CanonicalDualAnalysis,
        Scheme::CanonicalTight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PreconditionedSymmetric => "preconditioned_symmetric",
            Scheme::PreconditionedPost => "preconditioned_post",
            Scheme::CanonicalDualSynthesis => "canonical_dual_synthesis",
            Scheme::CanonicalDualAnalysis => "canonical_dual_analysis",
            Scheme::CanonicalTight => "canonical_tight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.replace('-', "_");
        Scheme::ALL.into_iter().find(|x| x.name() == norm)
    }

    pub fn needs_tighten(self) -> bool {
        matches!(
            self,
            Scheme::PreconditionedSymmetric | Scheme::PreconditionedPost
        )
    }
}

/// Channel-wise coefficient map applied between analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Processor {
    Identity,
    SoftThreshold(f64),
}

impl Processor {
    fn apply<K: Scalar>(&self, c: &DVector<K>) -> Result<DVector<K>, FilterbankError> {
        match self {
            Processor::Identity => Ok(c.clone()),
            Processor::SoftThreshold(lambda) => soft_threshold(c, *lambda),
        }
    }
}

/// Entrywise shrinkage c ↦ c·max(1 − λ/|c|, 0).
pub fn soft_threshold<K: Scalar>(
    c: &DVector<K>,
    lambda: f64,
) -> Result<DVector<K>, FilterbankError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(FilterbankError::NegativeThreshold(lambda));
    }
    Ok(DVector::from_iterator(
        c.len(),
        c.iter().map(|&z| {
            let mag = z.modulus();
            if mag <= lambda {
                K::zero()
            } else {
                z * K::from_real(1.0 - lambda / mag)
            }
        }),
    ))
}

#[derive(Debug, Clone)]
pub struct PipelineSpec<'a, K: Scalar> {
    pub scheme: Scheme,
    pub frame: &'a GFrame<K>,
    pub tighten: Option<&'a TightenResult<K>>,
    pub processor: Processor,
    /// Relative residual for the matrix-free Γ solve.
    pub gamma_tol: f64,
}

impl<'a, K: Scalar> PipelineSpec<'a, K> {
    pub fn new(scheme: Scheme, frame: &'a GFrame<K>) -> Self {
        Self {
            scheme,
            frame,
            tighten: None,
            processor: Processor::Identity,
            gamma_tol: 1e-10,
        }
    }

    pub fn with_tighten(mut self, t: &'a TightenResult<K>) -> Self {
        self.tighten = Some(t);
        self
    }

    pub fn with_processor(mut self, p: Processor) -> Self {
        self.processor = p;
        self
    }
}

enum Prepared<K: Scalar> {
    /// b = √(d/n)·Γ^{1/2} applied before analysis and after synthesis.
    Symmetric { b: DMatrix<K>, inv_sqrt: Vec<f64> },
    /// Unit-norm channels, then (d/n)·Γ on the synthesis output; Γ applied
    /// matrix-free through the reweighted frame operator when possible.
    Post {
        weights: Vec<f64>,
        inv_sqrt: Vec<f64>,
        dense_gamma: Option<DMatrix<K>>,
    },
    DualSynthesis { s_inv: DMatrix<K> },
    DualAnalysis { s_inv: DMatrix<K> },
    Tight { s_inv_sqrt: DMatrix<K> },
}

/// A scheme prepared for repeated runs over many inputs.
pub struct Pipeline<'a, K: Scalar> {
    frame: &'a GFrame<K>,
    processor: Processor,
    gamma_tol: f64,
    prepared: Prepared<K>,
    dense_gamma_uses: AtomicUsize,
}

/// Instrumentation for one or more pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineRun {
    /// Number of times a dense matrix derived from Γ was applied.
    pub dense_gamma_applications: usize,
}

impl<'a, K: Scalar> Pipeline<'a, K> {
    pub fn new(spec: &PipelineSpec<'a, K>) -> Result<Self, FilterbankError> {
        let frame = spec.frame;
        let (d, n) = (frame.ambient_dim(), frame.n());
        let prepared = match spec.scheme {
            Scheme::PreconditionedSymmetric | Scheme::PreconditionedPost => {
                let res = spec
                    .tighten
                    .ok_or(FilterbankError::MissingTighten(spec.scheme.name()))?;
                if !res.converged() {
                    return Err(FilterbankError::MissingTighten(spec.scheme.name()));
                }
                if res.gamma.dim() != d || res.weights.len() != n {
                    return Err(FilterbankError::TightenMismatch(format!(
                        "gamma is {}x{} with {} weights; frame has d={d}, n={n}",
                        res.gamma.dim(),
                        res.gamma.dim(),
                        res.weights.len()
                    )));
                }
                // 1/‖Γ^{1/2}Tⱼ‖ = cⱼ·√(n/d)
                let inv_sqrt: Vec<f64> = res
                    .weights
                    .iter()
                    .map(|&c| c * (n as f64 / d as f64).sqrt())
                    .collect();
                if spec.scheme == Scheme::PreconditionedSymmetric {
                    let b = res.gamma.power(PdExponent::Half).matrix()
                        * K::from_real((d as f64 / n as f64).sqrt());
                    Prepared::Symmetric { b, inv_sqrt }
                } else {
                    let dense_gamma = if frame.all_fast() {
                        None
                    } else {
                        Some(res.gamma.matrix() * K::from_real(d as f64 / n as f64))
                    };
                    Prepared::Post {
                        weights: res.weights.clone(),
                        inv_sqrt,
                        dense_gamma,
                    }
                }
            }
            Scheme::CanonicalDualSynthesis | Scheme::CanonicalDualAnalysis => {
                let s_inv = HermitianPd::new(frame.frame_operator())
                    .map_err(map_singular)?
                    .power(PdExponent::NegOne)
                    .matrix()
                    .clone();
                if spec.scheme == Scheme::CanonicalDualSynthesis {
                    Prepared::DualSynthesis { s_inv }
                } else {
                    Prepared::DualAnalysis { s_inv }
                }
            }
            Scheme::CanonicalTight => {
                let s_inv_sqrt = HermitianPd::new(frame.frame_operator())
                    .map_err(map_singular)?
                    .power(PdExponent::NegHalf)
                    .matrix()
                    .clone();
                Prepared::Tight { s_inv_sqrt }
            }
        };
        Ok(Pipeline {
            frame,
            processor: spec.processor,
            gamma_tol: spec.gamma_tol,
            prepared,
            dense_gamma_uses: AtomicUsize::new(0),
        })
    }

    pub fn dense_gamma_applications(&self) -> usize {
        self.dense_gamma_uses.load(Ordering::Relaxed)
    }

    /// Filter one signal: analysis, channel-wise processing, synthesis.
    pub fn run(&self, x: &DVector<K>) -> Result<DVector<K>, FilterbankError> {
        self.run_with_processor(self.processor, x)
    }

    /// Same prepared scheme, different coefficient processor (threshold
    /// sweeps reuse the factorizations).
    pub fn run_with_processor(
        &self,
        processor: Processor,
        x: &DVector<K>,
    ) -> Result<DVector<K>, FilterbankError> {
        let d = self.frame.ambient_dim();
        if x.len() != d {
            return Err(FilterbankError::InputShape {
                got: x.len(),
                expected: d,
            });
        }
        // weighted analysis/process/synthesis pass shared by all schemes
        let pass =
            |input: &DVector<K>, scale: Option<&[f64]>| -> Result<DVector<K>, FilterbankError> {
                let mut acc = DVector::<K>::zeros(d);
                for (j, op) in self.frame.elements().iter().enumerate() {
                    let w = scale.map_or(1.0, |s| s[j]);
                    let mut c = op.adjoint_apply(input)?;
                    if w != 1.0 {
                        c *= K::from_real(w);
                    }
                    let processed = processor.apply(&c)?;
                    let mut out = op.apply(&processed)?;
                    if w != 1.0 {
                        out *= K::from_real(w);
                    }
                    acc += out;
                }
                Ok(acc)
            };
        match &self.prepared {
            Prepared::Symmetric { b, inv_sqrt } => {
                self.dense_gamma_uses.fetch_add(2, Ordering::Relaxed);
                let y = b * x;
                let acc = pass(&y, Some(inv_sqrt))?;
                Ok(b * acc)
            }
            Prepared::Post {
                weights,
                inv_sqrt,
                dense_gamma,
            } => {
                let acc = pass(x, Some(inv_sqrt))?;
                match dense_gamma {
                    None => {
                        let z = gamma_apply(weights, self.frame, &acc, self.gamma_tol)?;
                        Ok(z * K::from_real(d as f64 / self.frame.n() as f64))
                    }
                    Some(g) => {
                        self.dense_gamma_uses.fetch_add(1, Ordering::Relaxed);
                        Ok(g * acc)
                    }
                }
            }
            Prepared::DualSynthesis { s_inv } => {
                let acc = pass(x, None)?;
                Ok(s_inv * acc)
            }
            Prepared::DualAnalysis { s_inv } => {
                let y = s_inv * x;
                pass(&y, None)
            }
            Prepared::Tight { s_inv_sqrt } => {
                let y = s_inv_sqrt * x;
                let acc = pass(&y, None)?;
                Ok(s_inv_sqrt * acc)
            }
        }
    }
}

fn map_singular(e: LinalgError) -> FilterbankError {
    match e {
        LinalgError::Singular { min_eig } => {
            FilterbankError::Frame(FrameError::NotAFrame { min_eig })
        }
        other => FilterbankError::Linalg(other),
    }
}

/// One-shot convenience wrapper around [`Pipeline`].
pub fn run_pipeline<K: Scalar>(
    spec: &PipelineSpec<'_, K>,
    x: &DVector<K>,
) -> Result<(DVector<K>, PipelineRun), FilterbankError> {
    let pipeline = Pipeline::new(spec)?;
    let out = pipeline.run(x)?;
    Ok((
        out,
        PipelineRun {
            dense_gamma_applications: pipeline.dense_gamma_applications(),
        },
    ))
}

// ---------------------------------------------------------------------------
// Denoising harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DenoiseReport {
    pub scheme: Scheme,
    pub snr: f64,
    pub best_threshold: f64,
    pub rmse: f64,
    pub threshold_sweep: Vec<(f64, f64)>,
}

#[derive(Debug)]
pub struct DenoiseRun {
    pub reports: Vec<DenoiseReport>,
    /// Schemes that could not run (e.g. tighten failed), with the reason.
    pub failures: Vec<(Scheme, String)>,
}

/// Noise standard deviation for the convention snr = ‖clean‖₂/(σ·√dim).
fn noise_sigma(clean_norm: f64, dim: usize, snr: f64) -> Result<f64, FilterbankError> {
    if snr.is_infinite() && snr > 0.0 {
        return Ok(0.0);
    }
    if !(snr.is_finite() && snr > 0.0) {
        return Err(FilterbankError::BadSnr(snr));
    }
    Ok(clean_norm / (snr * (dim as f64).sqrt()))
}

/// Sweep soft thresholds per scheme and SNR; the best threshold minimizes
/// RMSE against the clean signal.
pub fn denoise_experiment<K: Scalar>(
    frame: &GFrame<K>,
    clean: &DVector<K>,
    snr_list: &[f64],
    lambda_grid: &[f64],
    schemes: &[Scheme],
    seed: u64,
) -> Result<DenoiseRun, FilterbankError> {
    if clean.len() != frame.ambient_dim() {
        return Err(FilterbankError::InputShape {
            got: clean.len(),
            expected: frame.ambient_dim(),
        });
    }
    denoise_tiles(frame, std::slice::from_ref(clean), snr_list, lambda_grid, schemes, seed)
}

/// Shared driver: the signal is a list of tiles processed independently;
/// RMSE is taken over the concatenation.
fn denoise_tiles<K: Scalar>(
    frame: &GFrame<K>,
    clean_tiles: &[DVector<K>],
    snr_list: &[f64],
    lambda_grid: &[f64],
    schemes: &[Scheme],
    seed: u64,
) -> Result<DenoiseRun, FilterbankError> {
    let dim: usize = clean_tiles.iter().map(|t| t.len()).sum();
    let clean_norm: f64 = clean_tiles
        .iter()
        .map(|t| t.norm_squared())
        .sum::<f64>()
        .sqrt();
    let mut failures = Vec::new();
    let tighten_result = if schemes.iter().any(|s| s.needs_tighten()) {
        match crate::tyler::tighten(frame, &crate::tyler::TightenOptions::default()) {
            Ok(res) if res.converged() => Some(res),
            Ok(res) => {
                let reason = format!("tighten ended with status {}", res.status.name());
                for &s in schemes.iter().filter(|s| s.needs_tighten()) {
                    failures.push((s, reason.clone()));
                }
                None
            }
            Err(e) => {
                for &s in schemes.iter().filter(|s| s.needs_tighten()) {
                    failures.push((s, e.to_string()));
                }
                None
            }
        }
    } else {
        None
    };

    let mut reports = Vec::new();
    for (snr_index, &snr) in snr_list.iter().enumerate() {
        let sigma = noise_sigma(clean_norm, dim, snr)?;
        // seeded noise, one stream per SNR level
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(snr_index as u64);
        let noisy_tiles: Vec<DVector<K>> = clean_tiles
            .iter()
            .map(|t| {
                DVector::from_iterator(
                    t.len(),
                    t.iter()
                        .map(|&v| v + K::std_normal(&mut rng) * K::from_real(sigma)),
                )
            })
            .collect();
        for &scheme in schemes {
            if scheme.needs_tighten() && tighten_result.is_none() {
                continue;
            }
            let mut spec = PipelineSpec::new(scheme, frame);
            if let Some(res) = &tighten_result {
                spec = spec.with_tighten(res);
            }
            let pipeline = Pipeline::new(&spec)?;
            let mut sweep = Vec::with_capacity(lambda_grid.len());
            let mut best = (f64::NAN, f64::INFINITY);
            for &lambda in lambda_grid {
                let mut err_sq = 0.0;
                for (clean_t, noisy_t) in clean_tiles.iter().zip(&noisy_tiles) {
                    let out =
                        pipeline.run_with_processor(Processor::SoftThreshold(lambda), noisy_t)?;
                    err_sq += (out - clean_t).norm_squared();
                }
                let rmse_val = (err_sq / dim as f64).sqrt();
                sweep.push((lambda, rmse_val));
                if rmse_val < best.1 {
                    best = (lambda, rmse_val);
                }
            }
            reports.push(DenoiseReport {
                scheme,
                snr,
                best_threshold: best.0,
                rmse: best.1,
                threshold_sweep: sweep,
            });
        }
    }
    Ok(DenoiseRun { reports, failures })
}

/// Grayscale image variant: the image is chopped into row-major tiles of
/// `tile` pixels, each processed as a vector.
pub fn denoise_image(
    frame: &GFrame<f64>,
    image: &Pgm,
    tile: usize,
    snr_list: &[f64],
    lambda_grid: &[f64],
    schemes: &[Scheme],
    seed: u64,
) -> Result<DenoiseRun, FilterbankError> {
    if tile == 0 || !(image.width * image.height).is_multiple_of(tile) || frame.ambient_dim() != tile {
        return Err(FilterbankError::BadTiling {
            width: image.width,
            height: image.height,
            tile,
        });
    }
    let values = image.to_f64();
    let tiles: Vec<DVector<f64>> = values
        .chunks(tile)
        .map(DVector::from_column_slice)
        .collect();
    denoise_tiles(frame, &tiles, snr_list, lambda_grid, schemes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample, EnsembleKind, EnsembleSpec};
    use crate::scalar::Scalar;
    use crate::tyler::{tighten, TightenOptions};
    use rand::Rng;

    fn random_dense_frame(d: usize, n: usize, seed: u64) -> GFrame<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        GFrame::from_dense(
            (0..n)
                .map(|_| DMatrix::from_fn(d, 1, |_, _| f64::std_normal(&mut rng)))
                .collect(),
        )
        .unwrap()
    }

    fn circulant_frame(d: usize, n: usize, seed: u64) -> GFrame<f64> {
        sample(&EnsembleSpec::<f64>::new(
            EnsembleKind::CirculantBlockRandom,
            d,
            d,
            n,
            seed,
        ))
        .unwrap()
    }

    fn random_vec(d: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
        DVector::from_fn(d, |_, _| f64::std_normal(rng))
    }

    #[test]
    fn soft_threshold_cases() {
        let c = DVector::from_vec(vec![3.0, -1.0]);
        let out = soft_threshold(&c, 2.0).unwrap();
        assert_eq!(out, DVector::from_vec(vec![1.0, 0.0]));
        let out = soft_threshold(&c, 0.0).unwrap();
        assert_eq!(out, c);
        let out = soft_threshold(&c, 100.0).unwrap();
        assert_eq!(out.norm(), 0.0);
        assert!(matches!(
            soft_threshold(&c, -0.5),
            Err(FilterbankError::NegativeThreshold(_))
        ));
        // complex shrinkage keeps the phase
        let z = DVector::from_vec(vec![num_complex::Complex64::new(3.0, 4.0)]);
        let out = soft_threshold(&z, 1.0).unwrap();
        assert!((out[0].norm() - 4.0).abs() < 1e-12);
        assert!((out[0].arg() - z[0].arg()).abs() < 1e-12);
    }

    #[test]
    fn all_schemes_reconstruct_identity_processor() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for seed in 0..5u64 {
            let dense = random_dense_frame(3, 9, 100 + seed);
            let circ = circulant_frame(8, 4, 200 + seed);
            for frame in [&dense, &circ] {
                let res = tighten(frame, &TightenOptions::default()).unwrap();
                assert!(res.converged());
                let x = random_vec(frame.ambient_dim(), &mut rng);
                for scheme in Scheme::ALL {
                    let spec = PipelineSpec::new(scheme, frame).with_tighten(&res);
                    let (out, _) = run_pipeline(&spec, &x).unwrap();
                    assert!(
                        (&out - &x).norm() <= 1e-8 * x.norm(),
                        "{} reconstruction error {}",
                        scheme.name(),
                        (&out - &x).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn zero_input_zero_output_and_soft_zero_is_identity() {
        let frame = random_dense_frame(3, 7, 4);
        let res = tighten(&frame, &TightenOptions::default()).unwrap();
        let zero = DVector::zeros(3);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let x = random_vec(3, &mut rng);
        for scheme in Scheme::ALL {
            let spec = PipelineSpec::new(scheme, &frame).with_tighten(&res);
            let (out, _) = run_pipeline(&spec, &zero).unwrap();
            assert!(out.norm() < 1e-14);
            let (a, _) = run_pipeline(&spec, &x).unwrap();
            let (b, _) = run_pipeline(
                &spec.clone().with_processor(Processor::SoftThreshold(0.0)),
                &x,
            )
            .unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn preconditioned_schemes_require_converged_tighten() {
        let frame = random_dense_frame(2, 5, 6);
        let spec = PipelineSpec::new(Scheme::PreconditionedPost, &frame);
        let x = DVector::zeros(2);
        assert!(matches!(
            run_pipeline(&spec, &x),
            Err(FilterbankError::MissingTighten(_))
        ));
        // mismatched tighten result
        let other = random_dense_frame(3, 5, 7);
        let res = tighten(&other, &TightenOptions::default()).unwrap();
        let spec = PipelineSpec::new(Scheme::PreconditionedPost, &frame).with_tighten(&res);
        assert!(matches!(
            run_pipeline(&spec, &x),
            Err(FilterbankError::TightenMismatch(_))
        ));
    }

    #[test]
    fn post_scheme_is_matrix_free_on_structured_frames() {
        let frame = circulant_frame(16, 5, 3);
        assert!(frame.all_fast());
        let res = tighten(&frame, &TightenOptions::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = random_vec(16, &mut rng);
        let spec = PipelineSpec::new(Scheme::PreconditionedPost, &frame).with_tighten(&res);
        let (out, run) = run_pipeline(&spec, &x).unwrap();
        assert_eq!(run.dense_gamma_applications, 0);
        assert!((&out - &x).norm() <= 1e-8 * x.norm());
        // the symmetric scheme does use dense Γ^{1/2}
        let spec = PipelineSpec::new(Scheme::PreconditionedSymmetric, &frame).with_tighten(&res);
        let (_, run) = run_pipeline(&spec, &x).unwrap();
        assert!(run.dense_gamma_applications > 0);
        // and the post scheme falls back to dense Γ on dense frames
        let dense = random_dense_frame(3, 9, 8);
        let res_d = tighten(&dense, &TightenOptions::default()).unwrap();
        let spec = PipelineSpec::new(Scheme::PreconditionedPost, &dense).with_tighten(&res_d);
        let (_, run) = run_pipeline(&spec, &random_vec(3, &mut rng)).unwrap();
        assert_eq!(run.dense_gamma_applications, 1);
    }

    #[test]
    fn preconditioned_channels_have_unit_norm() {
        // Tⱼᴴ·Γ^{1/2}/‖Γ^{1/2}Tⱼ‖ has HS norm 1
        let frame = random_dense_frame(3, 8, 11);
        let res = tighten(&frame, &TightenOptions::default()).unwrap();
        let sqrt = res.gamma.power(PdExponent::Half);
        for (t, &c) in frame.dense_elements().iter().zip(&res.weights) {
            let inv_norm = c * (frame.n() as f64 / frame.ambient_dim() as f64).sqrt();
            let block = (sqrt.matrix() * t) * inv_norm;
            assert!((block.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn denoise_noiseless_is_exact_and_thresholding_helps() {
        let d = 256;
        let frame = circulant_frame(d, 8, 5);
        // smooth multiscale test signal
        let clean = DVector::from_fn(d, |i, _| {
            let t = i as f64 / d as f64;
            (2.0 * std::f64::consts::TAU * t).sin()
                + 0.5 * (5.0 * std::f64::consts::TAU * t).cos()
                + 2.0 * (-((t - 0.3) / 0.05).powi(2)).exp()
        });
        // noiseless: rmse at λ=0 is essentially zero
        let run = denoise_experiment(
            &frame,
            &clean,
            &[f64::INFINITY],
            &[0.0],
            &[Scheme::PreconditionedPost],
            1,
        )
        .unwrap();
        assert!(run.failures.is_empty());
        assert!(run.reports[0].rmse <= 1e-8);

        // snr = 10: sweep includes λ = 0, so the best can never lose to it;
        // on the unit-norm preconditioned scheme it strictly wins
        let lambdas: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let run = denoise_experiment(
            &frame,
            &clean,
            &[10.0],
            &lambdas,
            &[Scheme::PreconditionedPost, Scheme::CanonicalTight],
            1,
        )
        .unwrap();
        for report in &run.reports {
            let at_zero = report.threshold_sweep[0].1;
            assert!(report.rmse <= at_zero, "{}", report.scheme.name());
            let min = report
                .threshold_sweep
                .iter()
                .map(|&(_, r)| r)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(min, report.rmse);
            if report.scheme == Scheme::PreconditionedPost {
                assert!(
                    report.rmse < at_zero,
                    "thresholding should strictly improve: best {} vs λ=0 {}",
                    report.rmse,
                    at_zero
                );
                assert!(report.best_threshold > 0.0);
            }
        }
    }

    #[test]
    fn denoise_large_lambda_kills_everything() {
        let frame = circulant_frame(32, 4, 6);
        let clean = DVector::from_fn(32, |i, _| (i as f64 / 5.0).sin() + 2.0);
        let run = denoise_experiment(
            &frame,
            &clean,
            &[20.0],
            &[1e6],
            &[Scheme::CanonicalTight],
            3,
        )
        .unwrap();
        // output is zero, so rmse is the rms of the clean signal
        let expected = clean.norm() / (32.0_f64).sqrt();
        assert!((run.reports[0].rmse - expected).abs() < 0.05 * expected);
    }

    #[test]
    fn denoise_reports_tighten_failures_per_scheme() {
        // ranges of the first two elements coincide: tighten diverges
        let frame = GFrame::from_dense(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let clean = DVector::from_vec(vec![1.0, 2.0]);
        let run = denoise_experiment(
            &frame,
            &clean,
            &[10.0],
            &[0.0, 0.1],
            &[Scheme::PreconditionedPost, Scheme::CanonicalDualSynthesis],
            4,
        )
        .unwrap();
        assert_eq!(run.failures.len(), 1);
        assert_eq!(run.failures[0].0, Scheme::PreconditionedPost);
        // the non-preconditioned scheme still produced a report
        assert_eq!(run.reports.len(), 1);
        assert_eq!(run.reports[0].scheme, Scheme::CanonicalDualSynthesis);
    }

    #[test]
    fn image_tiling_roundtrip() {
        let frame = circulant_frame(16, 4, 9);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let img = Pgm::new(8, 8, (0..64).map(|_| rng.random_range(0u8..=255)).collect()).unwrap();
        let run = denoise_image(
            &frame,
            &img,
            16,
            &[f64::INFINITY],
            &[0.0],
            &[Scheme::CanonicalTight],
            2,
        )
        .unwrap();
        assert!(run.reports[0].rmse <= 1e-8);
        // tile mismatch rejected
        assert!(matches!(
            denoise_image(&frame, &img, 10, &[10.0], &[0.0], &[Scheme::CanonicalTight], 2),
            Err(FilterbankError::BadTiling { .. })
        ));
    }

    #[test]
    fn bad_snr_rejected() {
        let frame = random_dense_frame(2, 5, 6);
        let clean = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            denoise_experiment(&frame, &clean, &[0.0], &[0.0], &[Scheme::CanonicalTight], 1),
            Err(FilterbankError::BadSnr(_))
        ));
        assert!(matches!(
            denoise_experiment(&frame, &clean, &[-3.0], &[0.0], &[Scheme::CanonicalTight], 1),
            Err(FilterbankError::BadSnr(_))
        ));
    }
}

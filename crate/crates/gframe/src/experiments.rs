//! Scripted numerical experiments: closeness of the computed tight frame to
//! the closest ideal one, the parametric two-element-size family, random
//! unit-HS-norm statistics, the non-convergent family, and large-sample
//! consistency of the preconditioner. Each experiment emits a serializable
//! report with named scalars and series.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

use crate::ensembles::{self, EnsembleError, EnsembleKind, EnsembleSpec};
use crate::formats;
use crate::frame::{CheckMode, CondStatus, FrameError, GFrame};
use crate::linalg::{HermitianPd, LinalgError, PdExponent};
use crate::tyler::{tighten, TightenOptions, TightenStatus, TylerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("empty grid")]
    EmptyGrid,
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Tyler(#[from] TylerError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ReportMeta {
    pub seed: Option<u64>,
    pub runtime_seconds: f64,
    pub config: BTreeMap<String, String>,
}

/// Named outputs of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub metadata: ReportMeta,
}

impl ExperimentReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            metadata: ReportMeta::default(),
        }
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    pub fn to_json(&self) -> Value {
        let series: BTreeMap<&String, Vec<[f64; 2]>> = self
            .series
            .iter()
            .map(|(k, v)| (k, v.iter().map(|&(x, y)| [x, y]).collect()))
            .collect();
        json!({
            "name": self.name,
            "scalars": self.scalars,
            "series": series,
            "metadata": {
                "seed": self.metadata.seed,
                "runtime_seconds": self.metadata.runtime_seconds,
                "config": self.metadata.config,
            },
        })
    }

    /// Write `report.json` plus one `<series>.csv` per series.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let json_text = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        std::fs::write(dir.join("report.json"), json_text + "\n")?;
        for (name, points) in &self.series {
            let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
            let csv = formats::csv_table(&["x", name], &rows);
            std::fs::write(dir.join(format!("{name}.csv")), csv)?;
        }
        Ok(())
    }
}

/// SplitMix64 round; used to derive independent sub-seeds.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Closest-tight-frame experiment (d=2, r=1, n=3)
// ---------------------------------------------------------------------------

/// Map three angles to canonical form: each reduced mod π (sign flip), then
/// rotated so the smallest is 0.
pub fn canonical_angles(alpha: &[f64; 3]) -> [f64; 3] {
    let pi = std::f64::consts::PI;
    let mut b = alpha.map(|a| a.rem_euclid(pi));
    let min = b.iter().cloned().fold(f64::INFINITY, f64::min);
    for v in &mut b {
        *v -= min;
    }
    b
}

/// Closest unit-norm tight frame to three unit vectors at the given angles:
/// vectors at (0, π/3, 2π/3) matched in sorted-angle order, all 8 per-vector
/// sign patterns, closed-form optimal rotation per pattern. Returns the
/// fitted angles (element order preserved) and the attained objective.
pub fn fit_closest_tight_frame(angles: &[f64; 3]) -> ([f64; 3], f64) {
    let pi = std::f64::consts::PI;
    let betas = [0.0, pi / 3.0, 2.0 * pi / 3.0];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| angles[i].partial_cmp(&angles[j]).unwrap());
    let mut best: Option<([f64; 3], f64)> = None;
    for pattern in 0..8u32 {
        // assign sorted target angles, optionally flipped by π
        let mut assigned = [0.0_f64; 3];
        for (rank, &element) in order.iter().enumerate() {
            let flip = if pattern & (1 << rank) != 0 { pi } else { 0.0 };
            assigned[element] = betas[rank] + flip;
        }
        // θ̂ = atan2(Σ sin(αⱼ−βⱼ), Σ cos(αⱼ−βⱼ))
        let (mut s, mut c) = (0.0, 0.0);
        for j in 0..3 {
            s += (angles[j] - assigned[j]).sin();
            c += (angles[j] - assigned[j]).cos();
        }
        let theta = s.atan2(c);
        let objective: f64 = (0..3)
            .map(|j| 2.0 - 2.0 * (assigned[j] + theta - angles[j]).cos())
            .sum();
        let fitted = [
            assigned[0] + theta,
            assigned[1] + theta,
            assigned[2] + theta,
        ];
        if best.as_ref().is_none_or(|(_, obj)| objective < *obj) {
            best = Some((fitted, objective));
        }
    }
    best.expect("nonempty pattern search")
}

fn unit_vector(angle: f64) -> DVector<f64> {
    DVector::from_vec(vec![angle.cos(), angle.sin()])
}

struct ClosestTightTrial {
    error: f64,
    resampled: usize,
    converged: bool,
}

fn closest_tight_trial(seed: u64, stream: u64, opts: &TightenOptions) -> ClosestTightTrial {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let pi = std::f64::consts::PI;
    let mut resampled = 0;
    let angles = loop {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>() * std::f64::consts::TAU);
        // reject nearly-coincident lines (distance mod π)
        let degenerate = (0..3).any(|i| {
            (i + 1..3).any(|j| {
                let diff = (a[i] - a[j]).rem_euclid(pi);
                diff.min(pi - diff) < 1e-9
            })
        });
        if !degenerate {
            break a;
        }
        resampled += 1;
    };
    let canon = canonical_angles(&angles);
    let frame = GFrame::from_vectors(canon.iter().map(|&b| unit_vector(b)).collect())
        .expect("three unit vectors");
    let res = match tighten(&frame, opts) {
        Ok(res) if res.converged() => res,
        _ => {
            return ClosestTightTrial {
                error: f64::NAN,
                resampled,
                converged: false,
            }
        }
    };
    let (fitted, _) = fit_closest_tight_frame(&canon);
    let error: f64 = res
        .tight_frame
        .dense_elements()
        .iter()
        .zip(fitted)
        .map(|(r, angle)| {
            let z = unit_vector(angle);
            (z - DVector::from_column_slice(r.as_slice())).norm_squared()
        })
        .sum();
    ClosestTightTrial {
        error,
        resampled,
        converged: true,
    }
}

/// Average Σⱼ‖Zⱼ − Rⱼ‖² between the computed tight frame R and the closest
/// ideal tight frame Z over random three-vector frames in ℝ².
pub fn ex_some(trials: usize, seed: u64) -> ExperimentReport {
    let start = std::time::Instant::now();
    let opts = TightenOptions::default();
    let results: Vec<ClosestTightTrial> = (0..trials)
        .into_par_iter()
        .map(|t| closest_tight_trial(seed, t as u64, &opts))
        .collect();
    let mut included: Vec<f64> = results
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.error)
        .collect();
    let avg = included.iter().sum::<f64>() / included.len().max(1) as f64;
    included.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = included
        .get(included.len() / 2)
        .copied()
        .unwrap_or(f64::NAN);
    let mut report = ExperimentReport::new("ex-some");
    report.scalars.insert("avg_error".into(), avg);
    // robust companions: the distribution is heavy-tailed (nearly parallel
    // input pairs give an exactly tight but visibly rotated result)
    report.scalars.insert("median_error".into(), median);
    report
        .scalars
        .insert("avg_error_per_element".into(), avg / 3.0);
    report
        .scalars
        .insert("median_error_per_element".into(), median / 3.0);
    report
        .scalars
        .insert("trials_requested".into(), trials as f64);
    report
        .scalars
        .insert("trials_included".into(), included.len() as f64);
    report.scalars.insert(
        "resampled_degenerate".into(),
        results.iter().map(|r| r.resampled).sum::<usize>() as f64,
    );
    report.scalars.insert(
        "excluded_nonconverged".into(),
        results.iter().filter(|r| !r.converged).count() as f64,
    );
    report.metadata.seed = Some(seed);
    report.metadata.runtime_seconds = start.elapsed().as_secs_f64();
    report
        .metadata
        .config
        .insert("trials".into(), trials.to_string());
    report
}

// ---------------------------------------------------------------------------
// Parametric family with exact tight start
// ---------------------------------------------------------------------------

/// The three-element family T₁(t), T₂(t), T₃(t) on 0 ≤ t ≤ 1/2; tight with
/// unit norms at t = 0.
pub fn theta_family(t: f64) -> Result<GFrame<f64>, ExperimentError> {
    if !(0.0..=0.5).contains(&t) {
        return Err(ExperimentError::BadParameter(format!(
            "t must lie in [0, 1/2], got {t}"
        )));
    }
    let t1 = DMatrix::from_row_slice(2, 2, &[(1.0 - t).sqrt(), 0.0, 0.0, t.sqrt()]);
    let t2 = DMatrix::from_row_slice(2, 2, &[t.sqrt(), t.sqrt(), 0.0, (1.0 - 2.0 * t).sqrt()]);
    let t3 = DMatrix::from_row_slice(
        2,
        2,
        &[((1.0 - t) / 2.0).sqrt(), 0.0, 0.0, ((1.0 + t) / 2.0).sqrt()],
    );
    Ok(GFrame::from_dense(vec![t1, t2, t3])?)
}

fn theta_distances(t: f64) -> Result<(f64, f64), ExperimentError> {
    let frame = theta_family(t)?;
    let res = tighten(&frame, &TightenOptions::default())?;
    if !res.converged() {
        return Err(ExperimentError::BadParameter(format!(
            "tighten did not converge at t={t} (status {})",
            res.status.name()
        )));
    }
    let scale = (2.0_f64 / 3.0).sqrt();
    let dist_tight: f64 = frame
        .dense_elements()
        .iter()
        .zip(res.tight_frame.dense_elements())
        .map(|(t_el, r_el)| (t_el - r_el * scale).norm_squared())
        .sum();
    let parseval = frame.canonical_parseval()?;
    let dist_parseval: f64 = frame
        .dense_elements()
        .iter()
        .zip(parseval.dense_elements())
        .map(|(t_el, p_el)| (t_el - p_el).norm_squared())
        .sum();
    Ok((dist_tight, dist_parseval))
}

/// Distances to the rescaled tight frame and to the canonical Parseval frame
/// along the parameter grid.
pub fn ex_theta(t_grid: &[f64]) -> Result<ExperimentReport, ExperimentError> {
    if t_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    let start = std::time::Instant::now();
    let mut dist_tight = Vec::with_capacity(t_grid.len());
    let mut dist_parseval = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (dt, dp) = theta_distances(t)?;
        dist_tight.push((t, dt));
        dist_parseval.push((t, dp));
    }
    let (at_zero, parseval_zero) = theta_distances(0.0)?;
    let mut report = ExperimentReport::new("ex-theta");
    report.series.insert("dist_tight".into(), dist_tight);
    report.series.insert("dist_parseval".into(), dist_parseval);
    report.scalars.insert("at_zero".into(), at_zero);
    report
        .scalars
        .insert("parseval_at_zero".into(), parseval_zero);
    report.metadata.runtime_seconds = start.elapsed().as_secs_f64();
    report
        .metadata
        .config
        .insert("t_grid_len".into(), t_grid.len().to_string());
    Ok(report)
}

// ---------------------------------------------------------------------------
// Random unit-HS-norm statistics
// ---------------------------------------------------------------------------

struct HsTrial {
    parseval_dist: f64,
    equal_norm_dist: f64,
    converged: bool,
}

fn random_hs_trial(seed: u64, stream: u64, opts: &TightenOptions) -> HsTrial {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mats: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            let m = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>());
            let norm = m.norm();
            m / norm
        })
        .collect();
    let frame = GFrame::from_dense(mats).expect("three 2x2 elements");
    let res = match tighten(&frame, opts) {
        Ok(res) if res.converged() => res,
        _ => {
            return HsTrial {
                parseval_dist: f64::NAN,
                equal_norm_dist: f64::NAN,
                converged: false,
            }
        }
    };
    let parseval = frame.canonical_parseval().expect("frame");
    let parseval_dist: f64 = frame
        .dense_elements()
        .iter()
        .zip(parseval.dense_elements())
        .map(|(t, p)| (t - p).norm_squared())
        .sum();
    let scale = (2.0_f64 / 3.0).sqrt();
    let equal_norm_dist: f64 = frame
        .dense_elements()
        .iter()
        .zip(res.tight_frame.dense_elements())
        .map(|(t, r)| (t - r * scale).norm_squared())
        .sum();
    HsTrial {
        parseval_dist,
        equal_norm_dist,
        converged: true,
    }
}

/// Mean distance of random unit-HS-norm frames (3 elements in ℝ^{2×2}) to
/// their canonical Parseval frame and to the equal-norm Parseval frame
/// √(2/3)·Rⱼ.
pub fn random_hs_unit(trials: usize, seed: u64) -> ExperimentReport {
    let start = std::time::Instant::now();
    let opts = TightenOptions::default();
    let results: Vec<HsTrial> = (0..trials)
        .into_par_iter()
        .map(|t| random_hs_trial(seed, t as u64, &opts))
        .collect();
    let included: Vec<&HsTrial> = results.iter().filter(|r| r.converged).collect();
    let m = included.len().max(1) as f64;
    let mean_parseval = included.iter().map(|r| r.parseval_dist).sum::<f64>() / m;
    let mean_equal = included.iter().map(|r| r.equal_norm_dist).sum::<f64>() / m;
    let mut report = ExperimentReport::new("random-hs");
    report
        .scalars
        .insert("mean_parseval_dist".into(), mean_parseval);
    report
        .scalars
        .insert("mean_equal_norm_dist".into(), mean_equal);
    report
        .scalars
        .insert("mean_difference".into(), mean_equal - mean_parseval);
    report
        .scalars
        .insert("trials_included".into(), included.len() as f64);
    report.scalars.insert(
        "excluded_nonconverged".into(),
        (results.len() - included.len()) as f64,
    );
    report.metadata.seed = Some(seed);
    report.metadata.runtime_seconds = start.elapsed().as_secs_f64();
    report
        .metadata
        .config
        .insert("trials".into(), trials.to_string());
    report
}

// ---------------------------------------------------------------------------
// Non-convergent family
// ---------------------------------------------------------------------------

/// Three elements whose first two ranges coincide at t = 0 (the iteration
/// cannot converge there); the second range rotates away for t > 0.
pub fn failure_family(t: f64) -> GFrame<f64> {
    GFrame::from_dense(vec![
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, t, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
    ])
    .expect("fixed 2x2 family")
}

/// Convergence status of the iteration across the failure family, plus the
/// condition report at t = 0.
pub fn failure_case(t_grid: &[f64]) -> Result<ExperimentReport, ExperimentError> {
    if t_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    let start = std::time::Instant::now();
    let opts = TightenOptions::default();
    let mut converged_series = Vec::with_capacity(t_grid.len());
    let mut residual_series = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let res = tighten(&failure_family(t), &opts)?;
        let flag = if res.converged() { 1.0 } else { 0.0 };
        converged_series.push((t, flag));
        let final_residual = res.log.last().map(|s| s.residual).unwrap_or(f64::NAN);
        residual_series.push((t, final_residual));
    }
    let res0 = tighten(&failure_family(0.0), &opts)?;
    let report0 = failure_family(0.0).check_conditions(CheckMode::Exhaustive);
    let mut report = ExperimentReport::new("failure");
    report.series.insert("converged".into(), converged_series);
    report
        .series
        .insert("final_residual".into(), residual_series);
    report
        .scalars
        .insert("t0_converged".into(), if res0.converged() { 1.0 } else { 0.0 });
    report.scalars.insert(
        "t0_status_diverged_or_maxiter".into(),
        match res0.status {
            TightenStatus::Diverged | TightenStatus::MaxIterations => 1.0,
            _ => 0.0,
        },
    );
    report.scalars.insert(
        "t0_cond_iii_violated".into(),
        if report0.cond_iii == CondStatus::Violated {
            1.0
        } else {
            0.0
        },
    );
    report.metadata.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Consistency of the preconditioner for elliptical samples
// ---------------------------------------------------------------------------

/// Median ‖Γ^{(n)} − Σ⁻¹/trace(Σ⁻¹)‖_F over elliptical Gaussian samples,
/// along the sample-size grid, plus a plug-in residual of the population
/// fixed-point equation at the largest n.
pub fn consistency(
    sigma: &DMatrix<f64>,
    r: usize,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport, ExperimentError> {
    if n_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    let start = std::time::Instant::now();
    let d = sigma.nrows();
    let sigma_pd = HermitianPd::new(sigma.clone())?;
    let sigma_inv = sigma_pd.power(PdExponent::NegOne);
    let target = sigma_inv.rescaled(1.0 / sigma_inv.trace());
    let opts = TightenOptions::default();

    let mut err_series = Vec::with_capacity(n_grid.len());
    let mut excluded_total = 0usize;
    for (n_index, &n) in n_grid.iter().enumerate() {
        let errs: Vec<Option<f64>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let spec = EnsembleSpec::<f64>::new(
                    EnsembleKind::EllipticalGaussian,
                    d,
                    r,
                    n,
                    mix_seed(seed, (n_index as u64) << 32 | trial as u64),
                )
                .with_sigma(sigma.clone());
                let frame = ensembles::sample(&spec).ok()?;
                let res = tighten(&frame, &opts).ok()?;
                if !res.converged() {
                    return None;
                }
                Some((res.gamma.matrix() - target.matrix()).norm())
            })
            .collect();
        let mut included: Vec<f64> = errs.iter().filter_map(|e| *e).collect();
        excluded_total += errs.len() - included.len();
        included.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if included.is_empty() {
            f64::NAN
        } else if included.len() % 2 == 1 {
            included[included.len() / 2]
        } else {
            0.5 * (included[included.len() / 2 - 1] + included[included.len() / 2])
        };
        err_series.push((n as f64, median));
    }

    // plug-in check of Σ = d·E[TTᴴ/trace(TᴴΣ⁻¹T)] on a fresh sample at n_max
    let n_max = *n_grid.iter().max().unwrap();
    let plug_spec = EnsembleSpec::<f64>::new(
        EnsembleKind::EllipticalGaussian,
        d,
        r,
        n_max,
        mix_seed(seed, u64::MAX),
    )
    .with_sigma(sigma.clone());
    let plug_frame = ensembles::sample(&plug_spec)?;
    let mut rhs = DMatrix::<f64>::zeros(d, d);
    for t in plug_frame.dense_elements() {
        let tr = crate::linalg::trace_quadratic(&t, &sigma_inv)?;
        rhs += (&t * t.transpose()) / tr;
    }
    rhs *= d as f64 / n_max as f64;
    let plug_residual = (sigma - &rhs).norm() / sigma.norm();

    let mut report = ExperimentReport::new("consistency");
    report.series.insert("err".into(), err_series.clone());
    report
        .scalars
        .insert("err_first".into(), err_series.first().unwrap().1);
    report
        .scalars
        .insert("err_last".into(), err_series.last().unwrap().1);
    report
        .scalars
        .insert("plug_in_residual".into(), plug_residual);
    report
        .scalars
        .insert("excluded_nonconverged".into(), excluded_total as f64);
    report.metadata.seed = Some(seed);
    report.metadata.runtime_seconds = start.elapsed().as_secs_f64();
    report
        .metadata
        .config
        .insert("sigma".into(), formats::write_matrix(sigma));
    report.metadata.config.insert("r".into(), r.to_string());
    report
        .metadata
        .config
        .insert("trials".into(), trials.to_string());
    Ok(report)
}

//! Command-line front end: tighten frames, verify convergence conditions,
//! sample random ensembles, run filter bank pipelines and denoising, and
//! reproduce the numerical experiments.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gframe::ensembles::{self, EnsembleKind, EnsembleSpec, WindowDist};
use gframe::experiments::{self, ExperimentReport};
use gframe::filterbank::{self, Processor, Scheme};
use gframe::formats::{self, Pgm};
use gframe::frame::{self, CheckMode, GFrame};
use gframe::scalar::{Field, Scalar};
use gframe::tyler::{self, TightenOptions, TightenStatus};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_NOT_A_FRAME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gframe",
    version,
    about = "Unit-norm tight frame construction and structure-preserving filter banks"
)]
struct Cli {
    /// Worker thread cap (falls back to FRAME_TIGHTEN_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Machine-readable JSON on stdout instead of a human summary
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the tight-frame preconditioner for a frame file
    Tighten(TightenArgs),
    /// Check the convergence conditions of a frame file
    Verify(VerifyArgs),
    /// Draw a random frame from a named ensemble
    Sample(SampleArgs),
    /// Run one filter bank pipeline over a vector
    Pipeline(PipelineArgs),
    /// Soft-threshold denoising sweep over schemes and noise levels
    Denoise(DenoiseArgs),
    /// Reproduction experiments
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Args)]
struct TightenArgs {
    /// Input frame (gframe-json)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Output directory (tighten_result.json, tight_frame.json, iteration_log.csv)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// exhaustive | heuristic
    #[arg(long, default_value = "exhaustive")]
    mode: String,
    /// Work budget in subspace tests
    #[arg(long, default_value_t = frame::DEFAULT_WORK_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct SampleArgs {
    /// gaussian-iid | uniform-sphere | haar-subspace | gabor-random-window |
    /// circulant-block-random | subsampler-random | elliptical-gaussian
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// real | complex
    #[arg(long, default_value = "real")]
    field: String,
    /// rademacher | steinhaus
    #[arg(long)]
    window_dist: Option<String>,
    /// Covariance for elliptical ensembles (mtx-simple file)
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// JSON ensemble config (overrides the flags above)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output frame file (gframe-json)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Frame file (gframe-json)
    #[arg(long)]
    frame: PathBuf,
    /// preconditioned-symmetric | preconditioned-post | canonical-dual-synthesis |
    /// canonical-dual-analysis | canonical-tight
    #[arg(long)]
    scheme: String,
    /// Input vector (mtx-simple, one column)
    #[arg(long)]
    input: PathBuf,
    /// Soft threshold applied to every channel (0 = identity)
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Output vector file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Frame file (gframe-json, real field)
    #[arg(long)]
    frame: PathBuf,
    /// Grayscale image (binary PGM); omit to use a synthetic signal
    #[arg(long)]
    image: Option<PathBuf>,
    /// Tile length for image processing (must equal the frame dimension)
    #[arg(long, default_value_t = 64)]
    tile: usize,
    /// Comma-separated SNR levels; "inf" for noiseless
    #[arg(long, default_value = "10,25,40")]
    snr: String,
    /// Threshold grid start:stop:step
    #[arg(long, default_value = "0:0.5:0.02")]
    lambdas: String,
    /// Comma-separated scheme names or "all"
    #[arg(long, default_value = "all")]
    schemes: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Distance of the computed tight frame to the closest one (d=2, n=3)
    ExSome {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances along the parametric family, grid start:stop:step
    ExTheta {
        #[arg(long, default_value = "0:0.5:0.01")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random unit-HS-norm frame statistics
    RandomHs {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence statuses across the non-convergent family
    Failure {
        #[arg(long, default_value = "0:0.5:0.05")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical concentration of the scaled frame operator vs the tail bound
    Concentration {
        #[arg(long, default_value = "haar-subspace")]
        kind: String,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value = "80,160,400")]
        n_grid: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        window_dist: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence of the preconditioner to the population limit
    Consistency {
        /// Covariance matrix (mtx-simple file); default diag(4,1)
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long, default_value = "50,200,800,2000")]
        n_grid: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("FRAME_TIGHTEN_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Tighten(args) => cmd_tighten(cli, args),
        Command::Verify(args) => cmd_verify(cli, args),
        Command::Sample(args) => cmd_sample(cli, args),
        Command::Pipeline(args) => cmd_pipeline(cli, args),
        Command::Denoise(args) => cmd_denoise(cli, args),
        Command::Experiment(which) => cmd_experiment(cli, which),
    }
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

enum AnyFrame {
    Real(GFrame<f64>),
    Complex(GFrame<Complex64>),
}

fn load_frame(path: &Path) -> Result<AnyFrame> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))?;
    let field = frame::json_field(&value)?;
    Ok(match field {
        Field::Real => AnyFrame::Real(frame::gframe_from_json::<f64>(&value)?),
        Field::Complex => AnyFrame::Complex(frame::gframe_from_json::<Complex64>(&value)?),
    })
}

/// Inclusive numeric grid `start:stop:step`.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be start:stop:step, got {text:?}");
    }
    let start: f64 = parts[0].parse().context("bad grid start")?;
    let stop: f64 = parts[1].parse().context("bad grid stop")?;
    let step: f64 = parts[2].parse().context("bad grid step")?;
    if step <= 0.0 || step.is_nan() || stop < start {
        bail!("grid needs step > 0 and stop >= start");
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let v = start + step * k as f64;
        if v > stop + step * 1e-9 {
            break;
        }
        out.push(v.min(stop));
        k += 1;
    }
    Ok(out)
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| anyhow!("bad integer {t:?}")))
        .collect()
}

fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>().map_err(|_| anyhow!("bad snr {t:?}"))
            }
        })
        .collect()
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    if text == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    text.split(',')
        .map(|t| Scheme::parse(t.trim()).ok_or_else(|| anyhow!("unknown scheme {t:?}")))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn resolved_config(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

// ---------------------------------------------------------------------------
// tighten
// ---------------------------------------------------------------------------

fn cmd_tighten(cli: &Cli, args: &TightenArgs) -> Result<u8> {
    let opts = TightenOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..TightenOptions::default()
    };
    let config = resolved_config(&[
        ("input", args.input.display().to_string()),
        ("tol", args.tol.to_string()),
        ("max_iter", args.max_iter.to_string()),
    ]);
    let (status, result_json, frame_json, log_csv) = match load_frame(&args.input)? {
        AnyFrame::Real(f) => tighten_impl(&f, &opts)?,
        AnyFrame::Complex(f) => tighten_impl(&f, &opts)?,
    };
    std::fs::create_dir_all(&args.out)?;
    let mut result_json = result_json;
    result_json["config"] = json!(config);
    write_text(
        &args.out.join("tighten_result.json"),
        &(serde_json::to_string_pretty(&result_json)? + "\n"),
    )?;
    write_text(
        &args.out.join("tight_frame.json"),
        &(serde_json::to_string_pretty(&frame_json)? + "\n"),
    )?;
    write_text(&args.out.join("iteration_log.csv"), &log_csv)?;
    if cli.json {
        println!("{}", serde_json::to_string(&result_json)?);
    } else {
        println!(
            "tighten: {} after {} iterations (outputs in {})",
            status.name(),
            result_json["iterations"],
            args.out.display()
        );
    }
    Ok(match status {
        TightenStatus::Converged => EXIT_OK,
        TightenStatus::NotAFrame => EXIT_NOT_A_FRAME,
        _ => EXIT_NOT_CONVERGED,
    })
}

fn tighten_impl<K: Scalar>(
    f: &GFrame<K>,
    opts: &TightenOptions,
) -> Result<(TightenStatus, Value, Value, String)> {
    let res = tyler::tighten(f, opts)?;
    let rows: Vec<Vec<f64>> = res
        .log
        .iter()
        .map(|s| vec![s.k as f64, s.lambda_min, s.lambda_max, s.residual])
        .collect();
    let log_csv = formats::csv_table(&["k", "lambda_min", "lambda_max", "residual"], &rows);
    Ok((
        res.status,
        res.to_json(),
        frame::gframe_to_json(&res.tight_frame),
        log_csv,
    ))
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<u8> {
    let mode = match args.mode.as_str() {
        "exhaustive" => CheckMode::Exhaustive,
        "heuristic" => CheckMode::Heuristic,
        other => bail!("unknown mode {other:?} (use exhaustive or heuristic)"),
    };
    let (mut report_json, violated) = match load_frame(&args.input)? {
        AnyFrame::Real(f) => {
            let report = f.check_conditions_with_budget(mode, args.budget);
            let mut v = report.to_json();
            v["tightness_defect"] = defect_json(tyler::tightness_defect(&f));
            (v, report.any_violated())
        }
        AnyFrame::Complex(f) => {
            let report = f.check_conditions_with_budget(mode, args.budget);
            let mut v = report.to_json();
            v["tightness_defect"] = defect_json(tyler::tightness_defect(&f));
            (v, report.any_violated())
        }
    };
    report_json["config"] = json!(resolved_config(&[
        ("input", args.input.display().to_string()),
        ("mode", args.mode.clone()),
        ("budget", args.budget.to_string()),
    ]));
    if cli.json {
        println!("{}", serde_json::to_string(&report_json)?);
    } else {
        println!(
            "is_frame={} cond_ii={} cond_iii={} cond_iv={} alpha={} tightness_defect={}",
            report_json["is_frame"],
            report_json["cond_ii"],
            report_json["cond_iii"],
            report_json["cond_iv"],
            report_json["alpha"],
            report_json["tightness_defect"]
        );
    }
    Ok(if violated { EXIT_NOT_CONVERGED } else { EXIT_OK })
}

fn defect_json(defect: Result<f64, tyler::TylerError>) -> Value {
    match defect {
        Ok(v) => json!(v),
        Err(_) => Value::Null,
    }
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn cmd_sample(cli: &Cli, args: &SampleArgs) -> Result<u8> {
    let field = Field::parse(&args.field).ok_or_else(|| anyhow!("unknown field {:?}", args.field))?;
    let frame_json = match field {
        Field::Real => frame::gframe_to_json(&sample_impl::<f64>(args)?),
        Field::Complex => frame::gframe_to_json(&sample_impl::<Complex64>(args)?),
    };
    write_text(
        &args.out,
        &(serde_json::to_string_pretty(&frame_json)? + "\n"),
    )?;
    if cli.json {
        println!("{}", serde_json::to_string(&json!({"written": args.out.display().to_string()}))?);
    } else {
        println!("sample: wrote {}", args.out.display());
    }
    Ok(EXIT_OK)
}

fn sample_impl<K: Scalar>(args: &SampleArgs) -> Result<GFrame<K>> {
    let spec: EnsembleSpec<K> = if let Some(config_path) = &args.config {
        let text = std::fs::read_to_string(config_path)
            .with_context(|| format!("cannot read {}", config_path.display()))?;
        let value: Value = serde_json::from_str(&text)?;
        EnsembleSpec::from_json(&value)?
    } else {
        let kind_name = args
            .kind
            .as_deref()
            .ok_or_else(|| anyhow!("--kind (or --config) is required"))?;
        let kind = EnsembleKind::parse(kind_name)
            .ok_or_else(|| anyhow!("unknown ensemble kind {kind_name:?}"))?;
        let (d, r, n) = match (args.d, args.r, args.n) {
            (Some(d), Some(r), Some(n)) => (d, r, n),
            _ => bail!("--d, --r and --n are required without --config"),
        };
        let mut spec = EnsembleSpec::<K>::new(kind, d, r, n, args.seed);
        if let Some(w) = &args.window_dist {
            spec.window_dist =
                WindowDist::parse(w).ok_or_else(|| anyhow!("unknown window dist {w:?}"))?;
        }
        if let Some(sigma_path) = &args.sigma {
            let text = std::fs::read_to_string(sigma_path)
                .with_context(|| format!("cannot read {}", sigma_path.display()))?;
            spec.sigma = Some(formats::parse_matrix::<K>(&text)?);
        }
        spec
    };
    Ok(ensembles::sample(&spec)?)
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

fn cmd_pipeline(cli: &Cli, args: &PipelineArgs) -> Result<u8> {
    let scheme =
        Scheme::parse(&args.scheme).ok_or_else(|| anyhow!("unknown scheme {:?}", args.scheme))?;
    let input_text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let (out_text, run_info) = match load_frame(&args.frame)? {
        AnyFrame::Real(f) => pipeline_impl::<f64>(&f, scheme, &input_text, args.threshold)?,
        AnyFrame::Complex(f) => {
            pipeline_impl::<Complex64>(&f, scheme, &input_text, args.threshold)?
        }
    };
    write_text(&args.out, &out_text)?;
    if cli.json {
        println!("{}", serde_json::to_string(&run_info)?);
    } else {
        println!(
            "pipeline {}: wrote {} (dense gamma applications: {})",
            scheme.name(),
            args.out.display(),
            run_info["dense_gamma_applications"]
        );
    }
    Ok(EXIT_OK)
}

fn pipeline_impl<K: Scalar>(
    f: &GFrame<K>,
    scheme: Scheme,
    input_text: &str,
    threshold: f64,
) -> Result<(String, Value)> {
    let x = formats::parse_vector::<K>(input_text)?;
    let tighten_result = if scheme.needs_tighten() {
        let res = tyler::tighten(f, &TightenOptions::default())?;
        if !res.converged() {
            bail!(
                "tighten did not converge (status {}); preconditioned schemes unavailable",
                res.status.name()
            );
        }
        Some(res)
    } else {
        None
    };
    let mut spec = filterbank::PipelineSpec::new(scheme, f)
        .with_processor(Processor::SoftThreshold(threshold));
    if let Some(res) = &tighten_result {
        spec = spec.with_tighten(res);
    }
    let (y, run) = filterbank::run_pipeline(&spec, &x)?;
    Ok((
        formats::write_vector(&y),
        json!({"dense_gamma_applications": run.dense_gamma_applications}),
    ))
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

fn cmd_denoise(cli: &Cli, args: &DenoiseArgs) -> Result<u8> {
    let frame = match load_frame(&args.frame)? {
        AnyFrame::Real(f) => f,
        AnyFrame::Complex(_) => bail!("denoising runs on real frames"),
    };
    let snr_list = parse_snr_list(&args.snr)?;
    let lambda_grid = parse_grid(&args.lambdas)?;
    let schemes = parse_schemes(&args.schemes)?;
    let run = if let Some(image_path) = &args.image {
        let bytes = std::fs::read(image_path)
            .with_context(|| format!("cannot read {}", image_path.display()))?;
        let image = Pgm::decode(&bytes)?;
        filterbank::denoise_image(
            &frame,
            &image,
            args.tile,
            &snr_list,
            &lambda_grid,
            &schemes,
            args.seed,
        )?
    } else {
        // synthetic smooth signal at the frame dimension
        let d = frame.ambient_dim();
        let clean = nalgebra::DVector::from_fn(d, |i, _| {
            let t = i as f64 / d as f64;
            (2.0 * std::f64::consts::TAU * t).sin()
                + 0.5 * (5.0 * std::f64::consts::TAU * t).cos()
                + 2.0 * (-((t - 0.3) / 0.05).powi(2)).exp()
        });
        filterbank::denoise_experiment(&frame, &clean, &snr_list, &lambda_grid, &schemes, args.seed)?
    };

    std::fs::create_dir_all(&args.out)?;
    let mut report_rows = Vec::new();
    for (index, report) in run.reports.iter().enumerate() {
        let rows: Vec<Vec<f64>> = report
            .threshold_sweep
            .iter()
            .map(|&(l, r)| vec![l, r])
            .collect();
        let csv = formats::csv_table(&["lambda", "rmse"], &rows);
        let file = format!("sweep_{:02}_{}_snr{}.csv", index, report.scheme.name(), report.snr);
        write_text(&args.out.join(&file), &csv)?;
        report_rows.push(json!({
            "scheme": report.scheme.name(),
            "snr": report.snr,
            "best_threshold": report.best_threshold,
            "rmse": report.rmse,
            "sweep_csv": file,
        }));
    }
    let summary = json!({
        "reports": report_rows,
        "failures": run
            .failures
            .iter()
            .map(|(s, why)| json!({"scheme": s.name(), "reason": why}))
            .collect::<Vec<_>>(),
        "config": resolved_config(&[
            ("frame", args.frame.display().to_string()),
            ("image", args.image.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("tile", args.tile.to_string()),
            ("snr", args.snr.clone()),
            ("lambdas", args.lambdas.clone()),
            ("schemes", args.schemes.clone()),
            ("seed", args.seed.to_string()),
        ]),
    });
    write_text(
        &args.out.join("denoise_report.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    if cli.json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        for report in &run.reports {
            println!(
                "{} snr={}: best rmse {:.4} at lambda {:.4}",
                report.scheme.name(),
                report.snr,
                report.rmse,
                report.best_threshold
            );
        }
        for (scheme, why) in &run.failures {
            println!("{}: failed ({why})", scheme.name());
        }
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

fn cmd_experiment(cli: &Cli, which: &ExperimentCmd) -> Result<u8> {
    let (mut report, out, extra_config): (ExperimentReport, PathBuf, Vec<(&str, String)>) =
        match which {
            ExperimentCmd::ExSome { trials, seed, out } => (
                experiments::ex_some(*trials, *seed),
                out.clone(),
                vec![("seed", seed.to_string())],
            ),
            ExperimentCmd::ExTheta { grid, out } => (
                experiments::ex_theta(&parse_grid(grid)?)?,
                out.clone(),
                vec![("grid", grid.clone())],
            ),
            ExperimentCmd::RandomHs { trials, seed, out } => (
                experiments::random_hs_unit(*trials, *seed),
                out.clone(),
                vec![("seed", seed.to_string())],
            ),
            ExperimentCmd::Failure { grid, out } => (
                experiments::failure_case(&parse_grid(grid)?)?,
                out.clone(),
                vec![("grid", grid.clone())],
            ),
            ExperimentCmd::Concentration {
                kind,
                d,
                r,
                eps,
                n_grid,
                trials,
                seed,
                window_dist,
                out,
            } => {
                let kind_parsed = EnsembleKind::parse(kind)
                    .ok_or_else(|| anyhow!("unknown ensemble kind {kind:?}"))?;
                let mut spec = EnsembleSpec::<f64>::new(kind_parsed, *d, *r, 1, *seed);
                if let Some(w) = window_dist {
                    spec.window_dist =
                        WindowDist::parse(w).ok_or_else(|| anyhow!("unknown window dist {w:?}"))?;
                }
                let grid = parse_usize_list(n_grid)?;
                let rows = ensembles::concentration_experiment(&spec, &grid, *eps, *trials)?;
                // combined table alongside the per-series files
                let table: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| vec![r.n as f64, r.failure_rate, r.bound, r.std_err])
                    .collect();
                std::fs::create_dir_all(out)?;
                write_text(
                    &out.join("concentration.csv"),
                    &formats::csv_table(
                        &["n", "empirical_failure_rate", "chernoff_bound", "std_err"],
                        &table,
                    ),
                )?;
                let mut report = concentration_report(&rows);
                report.metadata.seed = Some(*seed);
                (
                    report,
                    out.clone(),
                    vec![
                        ("kind", kind.clone()),
                        ("d", d.to_string()),
                        ("r", r.to_string()),
                        ("eps", eps.to_string()),
                        ("n_grid", n_grid.clone()),
                        ("trials", trials.to_string()),
                        ("seed", seed.to_string()),
                    ],
                )
            }
            ExperimentCmd::Consistency {
                sigma,
                r,
                n_grid,
                trials,
                seed,
                out,
            } => {
                let sigma_mat: DMatrix<f64> = match sigma {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)
                            .with_context(|| format!("cannot read {}", path.display()))?;
                        formats::parse_matrix(&text)?
                    }
                    None => DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
                };
                let grid = parse_usize_list(n_grid)?;
                (
                    experiments::consistency(&sigma_mat, *r, &grid, *trials, *seed)?,
                    out.clone(),
                    vec![
                        ("r", r.to_string()),
                        ("n_grid", n_grid.clone()),
                        ("trials", trials.to_string()),
                        ("seed", seed.to_string()),
                    ],
                )
            }
        };
    for (k, v) in extra_config {
        report.metadata.config.insert(k.to_string(), v);
    }
    report.write_to_dir(&out)?;
    if cli.json {
        println!("{}", serde_json::to_string(&report.to_json())?);
    } else {
        println!("experiment {}: wrote {}", report.name, out.display());
        for (k, v) in &report.scalars {
            println!("  {k} = {v}");
        }
    }
    Ok(EXIT_OK)
}

fn concentration_report(rows: &[ensembles::ConcentrationRow]) -> ExperimentReport {
    let mut report = experiments::ExperimentReport {
        name: "concentration".into(),
        scalars: BTreeMap::new(),
        series: BTreeMap::new(),
        metadata: experiments::ReportMeta::default(),
    };
    report.series.insert(
        "empirical_failure_rate".into(),
        rows.iter().map(|r| (r.n as f64, r.failure_rate)).collect(),
    );
    report.series.insert(
        "chernoff_bound".into(),
        rows.iter().map(|r| (r.n as f64, r.bound)).collect(),
    );
    report.series.insert(
        "std_err".into(),
        rows.iter().map(|r| (r.n as f64, r.std_err)).collect(),
    );
    let within = rows
        .iter()
        .all(|r| r.failure_rate <= r.bound + 3.0 * r.std_err);
    report
        .scalars
        .insert("all_within_bound".into(), if within { 1.0 } else { 0.0 });
    report
}

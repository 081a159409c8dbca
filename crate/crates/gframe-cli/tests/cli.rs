//! End-to-end tests of the command-line interface: exit codes, file outputs,
//! and reproducibility of outputs across repeat runs.

use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn gframe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gframe"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// d=2 unit-norm tight frame (three vectors at 0°, 60°, 120°).
fn tight_frame_json() -> String {
    let c = 0.5_f64;
    let s = 3.0_f64.sqrt() / 2.0;
    format!(
        r#"{{"d": 2, "field": "real", "elements": [
            {{"kind": "dense", "rows": ["1", "0"]}},
            {{"kind": "dense", "rows": ["{c}", "{s}"]}},
            {{"kind": "dense", "rows": ["-{c}", "{s}"]}}
        ]}}"#
    )
}

/// The t=0 member of the non-convergent family.
fn failure_frame_json() -> String {
    r#"{"d": 2, "field": "real", "elements": [
        {"kind": "dense", "rows": ["1 0", "0 0"]},
        {"kind": "dense", "rows": ["1 0", "0 0"]},
        {"kind": "dense", "rows": ["0 0", "0 1"]}
    ]}"#
    .to_string()
}

/// {e1, e1, e2}: a frame that violates the subspace counting condition.
fn repeated_vector_frame_json() -> String {
    r#"{"d": 2, "field": "real", "elements": [
        {"kind": "dense", "rows": ["1", "0"]},
        {"kind": "dense", "rows": ["1", "0"]},
        {"kind": "dense", "rows": ["0", "1"]}
    ]}"#
    .to_string()
}

#[test]
fn tighten_tight_frame_exits_zero_with_identity_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frame.json");
    write(&input, &tight_frame_json());
    let out = dir.path().join("out");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("tighten_result.json")).unwrap())
            .unwrap();
    assert_eq!(result["status"], "converged");
    // Γ = I/2
    let gamma = result["gamma"].as_str().unwrap();
    assert!(gamma.starts_with("2 2 real"));
    let rows: Vec<&str> = gamma.lines().skip(1).collect();
    let entries: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.split_whitespace())
        .map(|t| t.parse().unwrap())
        .collect();
    assert!((entries[0] - 0.5).abs() < 1e-10);
    assert!(entries[1].abs() < 1e-12);
    assert!((entries[3] - 0.5).abs() < 1e-10);
    // iteration log exists with a header
    let log = std::fs::read_to_string(out.join("iteration_log.csv")).unwrap();
    assert!(log.starts_with("k,lambda_min,lambda_max,residual\n"));
    // tight frame file round-trips as valid json
    let tight: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("tight_frame.json")).unwrap())
            .unwrap();
    assert_eq!(tight["d"], 2);
}

#[test]
fn tighten_failure_frame_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frame.json");
    write(&input, &failure_frame_json());
    let out = dir.path().join("out");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn tighten_not_a_frame_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frame.json");
    write(
        &input,
        r#"{"d": 2, "field": "real", "elements": [
            {"kind": "dense", "rows": ["1", "0"]},
            {"kind": "dense", "rows": ["2", "0"]}
        ]}"#,
    );
    let out = dir.path().join("out");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "{output:?}");
}

#[test]
fn malformed_json_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("frame.json");
    write(&input, "{not json");
    let out = dir.path().join("out");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(!output.stderr.is_empty());
    // empty file too
    write(&input, "");
    let output = gframe()
        .args(["verify", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_rejected() {
    let output = gframe()
        .args(["tighten", "--definitely-not-a-flag", "x"])
        .output()
        .unwrap();
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn verify_good_and_bad_frames() {
    let dir = tempfile::tempdir().unwrap();
    // random-looking spanning frame: tight Mercedes frame plus extras
    let input = dir.path().join("good.json");
    write(&input, &tight_frame_json());
    let output = gframe()
        .args(["verify", "--input"])
        .arg(&input)
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["is_frame"], true);
    assert_eq!(report["cond_iii"], "holds");

    let input = dir.path().join("bad.json");
    write(&input, &repeated_vector_frame_json());
    let output = gframe()
        .args(["verify", "--input"])
        .arg(&input)
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["cond_iii"], "violated");
    assert!(report["witness_iii"]["members"].as_array().unwrap().len() == 2);
}

#[test]
fn sample_then_tighten_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let frame_path = dir.path().join("frame.json");
    let output = gframe()
        .args([
            "sample",
            "--kind",
            "gaussian-iid",
            "--d",
            "3",
            "--r",
            "1",
            "--n",
            "12",
            "--seed",
            "5",
        ])
        .arg("--out")
        .arg(&frame_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    // deterministic: sampling again gives identical bytes
    let first = std::fs::read(&frame_path).unwrap();
    let output = gframe()
        .args([
            "sample", "--kind", "gaussian-iid", "--d", "3", "--r", "1", "--n", "12", "--seed",
            "5",
        ])
        .arg("--out")
        .arg(&frame_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(first, std::fs::read(&frame_path).unwrap());

    let out = dir.path().join("tighten");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&frame_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
}

#[test]
fn pipeline_identity_reconstructs_vector() {
    let dir = tempfile::tempdir().unwrap();
    let frame_path = dir.path().join("frame.json");
    // circulant frame so the preconditioned-post path is matrix-free
    let output = gframe()
        .args([
            "sample",
            "--kind",
            "circulant-block-random",
            "--d",
            "8",
            "--r",
            "8",
            "--n",
            "4",
            "--seed",
            "4",
        ])
        .arg("--out")
        .arg(&frame_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let x_path = dir.path().join("x.mtx");
    write(
        &x_path,
        "8 1 real\n1\n-0.5\n2\n0\n0.25\n-1\n0.75\n3\n",
    );
    let y_path = dir.path().join("y.mtx");
    let output = gframe()
        .args(["pipeline", "--scheme", "preconditioned-post", "--frame"])
        .arg(&frame_path)
        .arg("--input")
        .arg(&x_path)
        .arg("--out")
        .arg(&y_path)
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let info: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(info["dense_gamma_applications"], 0);
    let y_text = std::fs::read_to_string(&y_path).unwrap();
    let x: Vec<f64> = vec![1.0, -0.5, 2.0, 0.0, 0.25, -1.0, 0.75, 3.0];
    let y: Vec<f64> = y_text
        .lines()
        .skip(1)
        .map(|l| l.trim().parse().unwrap())
        .collect();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn experiment_ex_theta_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theta");
    let output = gframe()
        .args(["experiment", "ex-theta", "--grid", "0:0.5:0.05"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let csv = std::fs::read_to_string(out.join("dist_tight.csv")).unwrap();
    // header plus 11 grid rows
    assert_eq!(csv.lines().count(), 12);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let at_zero = report["scalars"]["at_zero"].as_f64().unwrap();
    assert!((at_zero - 0.1010).abs() < 1e-3);
}

#[test]
fn experiment_unknown_name_fails() {
    let output = gframe()
        .args(["experiment", "nonsense", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn experiment_concentration_emits_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conc");
    let output = gframe()
        .args([
            "experiment",
            "concentration",
            "--d",
            "4",
            "--r",
            "1",
            "--eps",
            "0.6",
            "--n-grid",
            "40,120",
            "--trials",
            "40",
        ])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let csv = std::fs::read_to_string(out.join("concentration.csv")).unwrap();
    assert!(csv.starts_with("n,empirical_failure_rate,chernoff_bound,std_err\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn repeat_runs_are_byte_identical_up_to_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = gframe()
            .args(["experiment", "ex-some", "--trials", "40", "--seed", "9"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{output:?}");
    }
    // CSVs (none here) and report bytes identical except the runtime field
    let mut a: Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("report.json")).unwrap())
            .unwrap();
    let mut b: Value =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("report.json")).unwrap())
            .unwrap();
    a["metadata"]["runtime_seconds"] = Value::Null;
    b["metadata"]["runtime_seconds"] = Value::Null;
    assert_eq!(a, b);

    // a series-producing experiment gives byte-identical CSVs
    let out_c = dir.path().join("c");
    let out_d = dir.path().join("d");
    for out in [&out_c, &out_d] {
        let output = gframe()
            .args(["experiment", "failure", "--grid", "0:0.2:0.1"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{output:?}");
    }
    assert_eq!(
        std::fs::read(out_c.join("converged.csv")).unwrap(),
        std::fs::read(out_d.join("converged.csv")).unwrap()
    );
}

#[test]
fn tighten_output_frame_verifies_tight() {
    // round trip: tighten, re-read the output frame, check the defect via verify
    let dir = tempfile::tempdir().unwrap();
    let frame_path = dir.path().join("frame.json");
    let output = gframe()
        .args([
            "sample", "--kind", "gaussian-iid", "--d", "2", "--r", "1", "--n", "8", "--seed",
            "21",
        ])
        .arg("--out")
        .arg(&frame_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let out = dir.path().join("tighten");
    let output = gframe()
        .args(["tighten", "--input"])
        .arg(&frame_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    // the tight frame file loads, passes verification, and is tight
    let output = gframe()
        .args(["verify", "--input"])
        .arg(out.join("tight_frame.json"))
        .arg("--json")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["is_frame"], true);
    let defect = report["tightness_defect"].as_f64().unwrap();
    assert!(defect <= 1e-8, "round-trip defect {defect}");
}

#[test]
fn threads_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theta");
    let output = gframe()
        .env("FRAME_TIGHTEN_THREADS", "1")
        .args(["experiment", "ex-some", "--trials", "20", "--seed", "1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    // same result as the flag form
    let out2 = dir.path().join("theta2");
    let output = gframe()
        .args([
            "--threads",
            "2",
            "experiment",
            "ex-some",
            "--trials",
            "20",
            "--seed",
            "1",
        ])
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let a: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let b: Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(a["scalars"], b["scalars"]);
}

#[test]
fn denoise_synthetic_signal_runs() {
    let dir = tempfile::tempdir().unwrap();
    let frame_path = dir.path().join("frame.json");
    let output = gframe()
        .args([
            "sample",
            "--kind",
            "circulant-block-random",
            "--d",
            "32",
            "--r",
            "32",
            "--n",
            "4",
            "--seed",
            "2",
        ])
        .arg("--out")
        .arg(&frame_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let out = dir.path().join("denoise");
    let output = gframe()
        .args([
            "denoise",
            "--snr",
            "10",
            "--lambdas",
            "0:0.2:0.05",
            "--schemes",
            "preconditioned-post,canonical-tight",
            "--frame",
        ])
        .arg(&frame_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("denoise_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);
}

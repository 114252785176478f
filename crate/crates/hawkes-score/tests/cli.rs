//! End-to-end tests of the command-line interface: exit codes, error JSON,
//! artifact round-trips, and flag/config-file precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hawkes_score::cli::{ScoreTestOutput, SimSummary};
use hawkes_score::fit::FitResult;
use hawkes_score::io::{read_artifact, RunArtifact};
use hawkes_score::mc::McReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hawkes-score"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hawkes-score")
}

#[test]
fn simulate_is_deterministic_and_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--eta",
        "2",
        "--branch",
        "0",
        "--alpha",
        "1",
        "--T",
        "10",
        "--seed",
        "7",
        "--out",
        "events.csv",
    ];
    let out1 = run(&args, dir.path());
    assert!(
        out1.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out1.stderr)
    );
    let first = fs::read(dir.path().join("events.csv")).unwrap();
    let meta1 = fs::read(dir.path().join("events.meta.json")).unwrap();

    let out2 = run(&args, dir.path());
    assert!(out2.status.success());
    let second = fs::read(dir.path().join("events.csv")).unwrap();
    let meta2 = fs::read(dir.path().join("events.meta.json")).unwrap();
    assert_eq!(first, second, "identical runs must write identical CSV");
    assert_eq!(
        meta1, meta2,
        "identical runs must write identical provenance"
    );

    let artifact: RunArtifact<SimSummary> =
        read_artifact(&dir.path().join("events.meta.json")).unwrap();
    assert_eq!(artifact.payload.horizon, 10.0);
    assert_eq!(artifact.provenance.seed, Some(7));
    assert_eq!(
        artifact.provenance.config.get("eta").map(String::as_str),
        Some("2.0000000000000000e0")
    );
}

#[test]
fn fit_runs_on_simulated_output() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run(
        &[
            "simulate",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "2000",
            "--seed",
            "3",
            "--out",
            "events.csv",
        ],
        dir.path(),
    );
    assert!(sim.status.success());
    let fit = run(
        &["fit", "--events", "events.csv", "--out", "fit.json"],
        dir.path(),
    );
    assert!(
        fit.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let artifact: RunArtifact<FitResult> = read_artifact(&dir.path().join("fit.json")).unwrap();
    assert!(artifact.payload.converged);
    assert!(artifact.payload.params.theta_branch > 0.2);
    assert!(artifact.payload.std_errors.is_some());
}

#[test]
fn score_test_reports_singular_information_on_constant_marks() {
    let dir = tempfile::tempdir().unwrap();
    // realistic Hawkes event times, but every mark overwritten with the same
    // constant: centered features are identically zero
    let sim = run(
        &[
            "simulate",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "800",
            "--seed",
            "21",
            "--out",
            "events.csv",
        ],
        dir.path(),
    );
    assert!(sim.status.success());
    let csv = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    let flat: String = csv
        .lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("time") {
                line.to_string()
            } else {
                let time = line.split(',').next().unwrap();
                format!("{time},1.0")
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("flat.csv"), flat + "\n").unwrap();
    let out = run(
        &[
            "score-test",
            "--events",
            "flat.csv",
            "--boost",
            "linear",
            "--out",
            "st.json",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("machine-readable error JSON on stderr");
    assert_eq!(err["error"]["kind"], "singular_information");
}

#[test]
fn score_test_emits_result_and_qq_data() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run(
        &[
            "simulate",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "1500",
            "--seed",
            "9",
            "--out",
            "events.csv",
        ],
        dir.path(),
    );
    assert!(sim.status.success());
    let out = run(
        &[
            "score-test",
            "--events",
            "events.csv",
            "--boost",
            "linear",
            "--out",
            "st.json",
            "--qq-out",
            "qq.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let artifact: RunArtifact<ScoreTestOutput> =
        read_artifact(&dir.path().join("st.json")).unwrap();
    assert_eq!(artifact.payload.test.df, 1);
    assert!(artifact.payload.test.p_value > 0.0 && artifact.payload.test.p_value <= 1.0);
    let qq = fs::read_to_string(dir.path().join("qq.csv")).unwrap();
    assert!(qq.starts_with("empirical_quantile,chi2_quantile"));
    assert!(qq.lines().count() > 100);
}

#[test]
fn missing_horizon_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("nohorizon.csv"),
        "time,mark_1\n0.5,1.0\n10.5,2.0\n",
    )
    .unwrap();
    let out = run(&["fit", "--events", "nohorizon.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "eta=9.0\nbranch=0.5\nalpha=1.0\nT=50\nseed=4\n",
    )
    .unwrap();
    // flag --eta 2 must win over eta=9.0 from the file
    let out = run(
        &[
            "simulate",
            "--config",
            "run.cfg",
            "--eta",
            "2",
            "--out",
            "events.csv",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let artifact: RunArtifact<SimSummary> =
        read_artifact(&dir.path().join("events.meta.json")).unwrap();
    assert_eq!(
        artifact.provenance.config.get("eta").map(String::as_str),
        Some("2.0000000000000000e0")
    );
    assert_eq!(artifact.provenance.seed, Some(4));
    // rate ~ eta/(1-theta) = 4, nowhere near the config-file eta of 9
    assert!(artifact.payload.mean_rate < 7.0);
}

#[test]
fn mc_null_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "mc-null",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "300",
            "--replicates",
            "20",
            "--seed",
            "5",
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let artifact: RunArtifact<McReport> = read_artifact(&dir.path().join("report.json")).unwrap();
    assert_eq!(artifact.payload.replicates, 20);
    assert!(artifact.payload.valid);
    let hist = fs::read_to_string(dir.path().join("report.pvalues.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count"));
    assert_eq!(hist.lines().count(), 21);
}

#[test]
fn mc_power_consumes_omega_from_null_report() {
    let dir = tempfile::tempdir().unwrap();
    let null = run(
        &[
            "mc-null",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "400",
            "--replicates",
            "30",
            "--seed",
            "6",
            "--out",
            "null.json",
        ],
        dir.path(),
    );
    assert!(
        null.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&null.stderr)
    );
    fs::write(dir.path().join("power.cfg"), "omega-from=null.json\n").unwrap();
    let power = run(
        &[
            "mc-power",
            "--eta",
            "0.5",
            "--branch",
            "0.5",
            "--alpha",
            "1",
            "--T",
            "400",
            "--replicates",
            "30",
            "--seed",
            "6",
            "--gamma",
            "4.0",
            "--config",
            "power.cfg",
            "--out",
            "power.json",
        ],
        dir.path(),
    );
    assert!(
        power.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&power.stderr)
    );
    let artifact: RunArtifact<McReport> = read_artifact(&dir.path().join("power.json")).unwrap();
    assert!(artifact.payload.ncp.unwrap() > 0.0);
    assert!(artifact.payload.predicted_power.is_some());
    let curve = fs::read_to_string(dir.path().join("power.power_curve.csv")).unwrap();
    assert!(curve.starts_with("gamma_scale,ncp,level,predicted_power"));
}

use std::path::Path;
use std::process::{Command, Output};

use lef_core::harness::{parse_results_csv, summary_from_rows, ExperimentConfig};
use lef_core::oracle::exact_general;
use lef_core::{SamplingStrategy, ScriptedEnv};

fn lef(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lef"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn missing_horizon_is_a_usage_error() {
    let out = lef(&[
        "simulate",
        "--env",
        "threshold",
        "--kappa",
        "2",
        "--experts",
        "3",
        "--strategy",
        "full",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn kappa_with_gap_env_is_rejected() {
    let out = lef(&[
        "simulate",
        "--env",
        "gap",
        "--kappa",
        "2",
        "--delta",
        "0.2",
        "--n",
        "10",
        "--experts",
        "3",
        "--strategy",
        "full",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_strategy_is_a_usage_error() {
    let out = lef(&[
        "simulate",
        "--env",
        "threshold",
        "--kappa",
        "2",
        "--n",
        "10",
        "--experts",
        "3",
        "--strategy",
        "best",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn majority_strategy_with_finite_eta_is_rejected() {
    let out = lef(&[
        "simulate",
        "--env",
        "gap",
        "--delta",
        "0.2",
        "--n",
        "10",
        "--experts",
        "3",
        "--strategy",
        "majority",
        "--eta",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qstar_grid_of_one_is_rejected() {
    assert_eq!(
        lef(&["qstar", "--etas", "1", "--grid", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        lef(&["qstar", "--etas", "0,1", "--grid", "5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn qstar_large_eta_is_all_zero() {
    let out = lef(&["qstar", "--etas", "9", "--grid", "11"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,eta,q_star"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.ends_with(",9,0")));
}

#[test]
fn qstar_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig1.csv");
    let out = lef(&[
        "qstar",
        "--etas",
        "0.5,1,2,4",
        "--grid",
        "33",
        "--out",
        path_str(&path),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 33);
}

#[test]
fn verify_suites_pass() {
    let out = lef(&[
        "verify",
        "--suite",
        "perfect",
        "--max-n",
        "5",
        "--max-experts",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("perfect: PASS"));
    // The tight case has zero margin and is reported at the largest size.
    assert!(text.contains("perfect worst margin 0.000e0 at strategy=majority N=4 n=5"));

    let out = lef(&[
        "verify",
        "--suite",
        "boosted",
        "--max-n",
        "5",
        "--max-experts",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("boosted: PASS"));

    let out = lef(&[
        "verify",
        "--suite",
        "general",
        "--max-n",
        "4",
        "--max-experts",
        "2",
        "--etas",
        "0.5,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("general: PASS"));
}

#[test]
fn verify_rejects_sizes_beyond_oracle_limits() {
    assert_eq!(
        lef(&["verify", "--suite", "perfect", "--max-n", "7"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lef(&["verify", "--suite", "general", "--max-experts", "5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lef(&["verify", "--suite", "general", "--etas", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn enumerate_counts() {
    let count = |args: &[&str]| stdout(&lef(args)).trim().parse::<u64>().unwrap();
    assert_eq!(
        count(&["enumerate", "--experts", "2", "--n", "1", "--count"]),
        8
    );
    assert_eq!(
        count(&[
            "enumerate",
            "--experts",
            "2",
            "--n",
            "1",
            "--perfect",
            "--count"
        ]),
        6
    );
    assert_eq!(
        count(&["enumerate", "--experts", "3", "--n", "2", "--count"]),
        256
    );
    let listed = stdout(&lef(&[
        "enumerate",
        "--experts",
        "2",
        "--n",
        "1",
        "--perfect",
    ]));
    let scripts: Vec<ScriptedEnv> = listed.split("\n\n").map(|s| s.parse().unwrap()).collect();
    assert_eq!(scripts.len(), 6);
    assert!(scripts.iter().all(ScriptedEnv::has_perfect_expert));
}

#[test]
fn simulate_writes_csv_metadata_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gap.csv");
    let out = lef(&[
        "simulate",
        "--env",
        "gap",
        "--delta",
        "0.2",
        "--n",
        "2000",
        "--experts",
        "10",
        "--eta",
        "auto",
        "--strategy",
        "qstar-upper",
        "--runs",
        "5",
        "--seed",
        "3",
        "--stride",
        "100",
        "--out",
        path_str(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed = stdout(&out);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gap.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["degenerate_ci"], false);
    assert!(meta["ci_method"].as_str().unwrap().contains("1.96"));
    assert!(meta["version"].is_string());
    assert!(meta["wall_clock_seconds"].is_number());
    let config: ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(config.horizon, 2000);

    let rows = parse_results_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.runs == 5));
    let recomputed = summary_from_rows(&rows, &config).unwrap().to_string();
    assert_eq!(printed.trim(), recomputed);
}

#[test]
fn single_run_flags_degenerate_intervals() {
    let out = lef(&[
        "simulate",
        "--env",
        "threshold",
        "--kappa",
        "2",
        "--n",
        "200",
        "--experts",
        "5",
        "--strategy",
        "qstar",
        "--runs",
        "1",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero width"));
    let rows = parse_results_csv(&stdout(&out)).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.summary.ci_lo == r.summary.mean && r.summary.ci_hi == r.summary.mean));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"env": {"kind": "threshold", "tau0": 0.5, "kappa": 2.0}, "horizon": 300, "num_experts": 5,
            "eta": "auto", "strategy": {"kind": "full-information"}, "runs": 2, "base_seed": 1, "record_stride": 50}"#,
    )
    .unwrap();
    let out = lef(&["simulate", "--config", path_str(&cfg), "--n", "400"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = parse_results_csv(&stdout(&out)).unwrap();
    assert_eq!(rows.iter().map(|r| r.t).max(), Some(400));
    assert!(rows.iter().all(|r| r.runs == 2));
}

#[test]
fn scripted_monte_carlo_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("env.txt");
    let text = "4 3\n1 110\n0 011\n1 101\n0 100\n";
    std::fs::write(&file, text).unwrap();
    let runs = 100_000;
    let out = lef(&[
        "simulate",
        "--env",
        "scripted",
        "--file",
        path_str(&file),
        "--runs",
        &runs.to_string(),
        "--strategy",
        "full",
        "--eta",
        "1",
        "--seed",
        "17",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = parse_results_csv(&stdout(&out)).unwrap();
    let regret = rows
        .iter()
        .find(|r| r.t == 4 && r.metric.as_str() == "regret_best")
        .unwrap()
        .summary;

    let env: ScriptedEnv = text.parse().unwrap();
    let exact = exact_general(&env, 1.0, SamplingStrategy::FullInformation).unwrap();
    // Per-round losses are independent Bernoulli draws on a fixed script.
    let mut p = Vec::new();
    let mut lw = [-(3f64).ln(); 3];
    for t in 0..4 {
        let adv = env.advice(t);
        let total: f64 = lw.iter().map(|w| w.exp()).sum();
        let a: f64 = lw
            .iter()
            .zip(adv)
            .filter(|(_, &f)| f)
            .map(|(w, _)| w.exp())
            .sum::<f64>()
            / total;
        p.push(if env.label(t) { 1.0 - a } else { a });
        for (w, &f) in lw.iter_mut().zip(adv) {
            if f != env.label(t) {
                *w -= 1.0;
            }
        }
    }
    let expected_loss: f64 = p.iter().sum();
    assert!(
        (expected_loss - f64::from(env.best_expert_loss()) - exact.expected_regret).abs() < 1e-12
    );
    let sd = p.iter().map(|x| x * (1.0 - x)).sum::<f64>().sqrt() / f64::from(runs).sqrt();
    assert!(
        (regret.mean - exact.expected_regret).abs() <= 4.0 * sd,
        "mean {} vs exact {} (sd {sd})",
        regret.mean,
        exact.expected_regret
    );
}

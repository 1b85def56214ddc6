//! End-to-end tests of the command-line interface: artifacts, exit codes,
//! config merging, and bit-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};

use multistop::tree::ScenarioTree;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_multistop")
}

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let id = DIR_COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("multistop-cli-{}-{tag}-{id}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exited with a signal")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap_or_else(|e| panic!("bad JSON {name}: {e}"))
}

fn binary_tree_json(depth: usize, p: f64) -> String {
    ScenarioTree::uniform(&vec![vec![p, 1.0 - p]; depth])
        .unwrap()
        .to_json()
}

#[test]
fn snell_constant_reward_fixture() {
    let dir = scratch_dir("snell-const");
    fs::write(dir.join("tree.json"), binary_tree_json(2, 0.5)).unwrap();
    let entries: Vec<String> = (0..7)
        .map(|id| format!("{{\"node\": {id}, \"value\": 0.75}}"))
        .collect();
    fs::write(
        dir.join("reward.json"),
        format!("{{\"reward\": [{}]}}", entries.join(", ")),
    )
    .unwrap();
    let out = run(&[
        "snell",
        "--tree",
        dir.join("tree.json").to_str().unwrap(),
        "--reward",
        dir.join("reward.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(&dir, "summary.json");
    assert_eq!(summary["v_root"].as_f64().unwrap(), 0.75);
    assert_eq!(
        summary["max_supermartingale_violation"].as_f64().unwrap(),
        0.0
    );
    let rule = json(&dir, "rule.json");
    assert_eq!(rule["stops"], serde_json::json!([0]));
    let values = read(&dir, "values.csv");
    assert!(values.starts_with("node_id,t,phi,v\n"));
    assert_eq!(values.lines().count(), 8);
}

#[test]
fn snell_depth_one_fixture_continues_at_the_root() {
    let dir = scratch_dir("snell-depth1");
    fs::write(dir.join("tree.json"), binary_tree_json(1, 0.5)).unwrap();
    fs::write(
        dir.join("reward.json"),
        "{\"reward\": [{\"node\": 0, \"value\": 0.0}, {\"node\": 1, \"value\": 2.0}, {\"node\": 2, \"value\": 0.0}]}",
    )
    .unwrap();
    let out = run(&[
        "snell",
        "--tree",
        dir.join("tree.json").to_str().unwrap(),
        "--reward",
        dir.join("reward.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(&dir, "summary.json");
    assert_eq!(summary["v_root"].as_f64().unwrap(), 1.0);
    let rule = json(&dir, "rule.json");
    assert_eq!(rule["stops"], serde_json::json!([1, 2]));
}

#[test]
fn malformed_tree_json_is_an_input_error() {
    let dir = scratch_dir("snell-bad");
    fs::write(dir.join("tree.json"), "{ not json").unwrap();
    let out = run(&[
        "snell",
        "--tree",
        dir.join("tree.json").to_str().unwrap(),
        "--gen-reward",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("parse"), "{}", stderr(&out));
}

#[test]
fn ambiguous_or_missing_sources_are_input_errors() {
    let dir = scratch_dir("snell-src");
    let out = run(&["snell", "--gen-tree", "2", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("reward source"));
}

#[test]
fn double_constant_psi_fixture() {
    let dir = scratch_dir("double-const");
    fs::write(dir.join("tree.json"), binary_tree_json(1, 0.5)).unwrap();
    // All comparable ordered pairs of the depth-1 tree, constant value.
    let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (0, 2), (2, 0)];
    let entries: Vec<String> = pairs
        .iter()
        .map(|(a, b)| format!("{{\"a\": {a}, \"b\": {b}, \"value\": 0.6}}"))
        .collect();
    fs::write(
        dir.join("psi.json"),
        format!("{{\"psi\": [{}]}}", entries.join(", ")),
    )
    .unwrap();
    let out = run(&[
        "double",
        "--tree",
        dir.join("tree.json").to_str().unwrap(),
        "--psi",
        dir.join("psi.json").to_str().unwrap(),
        "--verify",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(&dir, "summary.json");
    assert_eq!(summary["u_root"].as_f64().unwrap(), 0.6);
    assert_eq!(summary["oracle_gap"].as_f64().unwrap(), 0.0);
    let pair = json(&dir, "pair.json");
    assert_eq!(pair["tau1_stops"], serde_json::json!([0]));
    assert_eq!(pair["tau2_stops"], serde_json::json!([0]));
    let csv = read(&dir, "u1u2phi.csv");
    assert!(csv.starts_with("node_id,t,u1,u2,phi\n"));
}

#[test]
fn double_randomized_verify_reports_zero_gap() {
    let dir = scratch_dir("double-rand");
    let out = run(&[
        "double",
        "--gen-tree",
        "3",
        "--gen-seed",
        "11",
        "--psi-gen",
        "uniform",
        "--verify",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = json(&dir, "summary.json");
    assert!(summary["oracle_gap"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn double_budget_refusal_is_exit_four() {
    let dir = scratch_dir("double-budget");
    let out = run(&[
        "double",
        "--gen-tree",
        "5",
        "--psi-gen",
        "uniform",
        "--verify",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("budget"));
}

#[test]
fn verify_small_matrix_passes() {
    let dir = scratch_dir("verify-ok");
    let out = run(&[
        "verify",
        "--seeds",
        "5",
        "--depth",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&dir, "verify.json");
    assert_eq!(report["seeds"].as_u64().unwrap(), 5);
    assert!(report["max_abs_gap_theorem3"].as_f64().unwrap() <= 1e-12);
    assert!(report["max_abs_gap_snell"].as_f64().unwrap() <= 1e-12);
    assert!(report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_default_scale_passes() {
    // Defaults: 100 seeds at depth 3.
    let dir = scratch_dir("verify-default");
    let out = run(&["verify", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&dir, "verify.json");
    assert_eq!(report["seeds"].as_u64().unwrap(), 100);
    assert_eq!(report["depths"], serde_json::json!([3]));
    assert!(report["max_abs_gap_theorem3"].as_f64().unwrap() <= 1e-12);
    assert!(report["max_abs_gap_snell"].as_f64().unwrap() <= 1e-12);
    assert!(report["max_supermartingale_violation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn verify_injected_fault_is_exit_three_and_names_the_property() {
    let dir = scratch_dir("verify-fault");
    let out = run(&[
        "verify",
        "--seeds",
        "1",
        "--depth",
        "2",
        "--inject-fault",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("theorem3"), "{}", stderr(&out));
    let report = json(&dir, "verify.json");
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_depth_five_is_a_budget_refusal() {
    let dir = scratch_dir("verify-deep");
    let out = run(&[
        "verify",
        "--seeds",
        "1",
        "--depth",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn exchange_writes_consistent_artifacts() {
    let dir = scratch_dir("exchange");
    let out = run(&[
        "exchange",
        "--x1",
        "1.0",
        "--x2",
        "1.0",
        "--sigma1",
        "0.2",
        "--sigma2",
        "0.2",
        "--maturity",
        "1.0",
        "--steps",
        "40",
        "--paths",
        "4000",
        "--seed",
        "9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let price = json(&dir, "price.json");
    let v0 = price["v0"].as_f64().unwrap();
    let phi0 = price["phi0"].as_f64().unwrap();
    assert!(v0 >= phi0 && v0 <= 1.0);
    assert_eq!(price["n"].as_u64().unwrap(), 40);
    assert!(price["mc_se"].as_f64().unwrap() > 0.0);
    assert!(price["margrabe"].as_f64().unwrap() > phi0);
    let surface = read(&dir, "surface.csv");
    assert!(surface.starts_with("k,t,j1,j2,x1,x2,phi,v,exercise,B\n"));
    // One row per state of every slice, plus the header.
    let states: usize = (0..=40usize).map(|k| (k + 1) * (k + 1)).sum();
    assert_eq!(surface.lines().count(), states + 1);
    let boundary = read(&dir, "boundary.csv");
    assert!(boundary.starts_with("k,axis,index,frontier\n"));
}

#[test]
fn exchange_zero_steps_is_an_input_error() {
    let dir = scratch_dir("exchange-zero");
    let out = run(&["exchange", "--steps", "0", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn exchange_outputs_are_bit_identical_across_runs_and_threads() {
    let args = |dir: &Path, threads: &str| {
        vec![
            "exchange".to_string(),
            "--steps".into(),
            "30".into(),
            "--paths".into(),
            "3000".into(),
            "--seed".into(),
            "5".into(),
            "--threads".into(),
            threads.to_string(),
            "--out".into(),
            dir.to_str().unwrap().to_string(),
        ]
    };
    let d1 = scratch_dir("exchange-t1");
    let d2 = scratch_dir("exchange-t4");
    let o1 = Command::new(bin()).args(args(&d1, "1")).output().unwrap();
    let o2 = Command::new(bin()).args(args(&d2, "4")).output().unwrap();
    assert_eq!(code(&o1), 0, "{}", stderr(&o1));
    assert_eq!(code(&o2), 0, "{}", stderr(&o2));
    assert_eq!(read(&d1, "price.json"), read(&d2, "price.json"));
    assert_eq!(read(&d1, "surface.csv"), read(&d2, "surface.csv"));
    assert_eq!(read(&d1, "boundary.csv"), read(&d2, "boundary.csv"));
}

#[test]
fn threads_env_var_is_honored() {
    let dir = scratch_dir("env-threads");
    let out = Command::new(bin())
        .env("MULTISTOP_THREADS", "2")
        .args([
            "verify",
            "--seeds",
            "1",
            "--depth",
            "2",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bad = Command::new(bin())
        .env("MULTISTOP_THREADS", "zero")
        .args([
            "verify",
            "--seeds",
            "1",
            "--depth",
            "2",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn flags_win_over_the_config_file() {
    let dir = scratch_dir("config-merge");
    let config_out = dir.join("from-config");
    let flag_out = dir.join("from-flag");
    fs::write(
        dir.join("cfg.json"),
        format!(
            "{{\"gen_tree\": 2, \"gen_seed\": 7, \"gen_reward\": true, \"out\": \"{}\"}}",
            config_out.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(&[
        "snell",
        "--config",
        dir.join("cfg.json").to_str().unwrap(),
        "--out",
        flag_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(flag_out.join("summary.json").exists());
    assert!(!config_out.exists());
    // Unknown config keys are rejected.
    fs::write(dir.join("bad.json"), "{\"no_such_key\": 1}").unwrap();
    let bad = run(&[
        "snell",
        "--config",
        dir.join("bad.json").to_str().unwrap(),
        "--out",
        flag_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn identical_invocations_give_identical_artifacts() {
    let d1 = scratch_dir("repro-1");
    let d2 = scratch_dir("repro-2");
    for d in [&d1, &d2] {
        let out = run(&[
            "double",
            "--gen-tree",
            "3",
            "--gen-seed",
            "21",
            "--psi-gen",
            "sum",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in ["summary.json", "pair.json", "u1u2phi.csv"] {
        assert_eq!(read(&d1, name), read(&d2, name), "{name} differs");
    }
}

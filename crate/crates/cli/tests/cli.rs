use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rwnet"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rwnet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn small_graph(dir: &Path, edges: &str, mode: &str) -> PathBuf {
    let g = dir.join("g.el");
    run(&["generate", "--model", "rw-u", "--alpha", "0.5", "--lambda", "2", "--edges", edges, "--mode", mode, "--seed", "3", "-o", p(&g)]);
    g
}

#[test]
fn generate_is_deterministic_and_headed() {
    let dir = scratch("gen");
    let args = |o: &Path| {
        vec!["generate", "--model", "rw-u", "--alpha", "0.5", "--lambda", "4", "--edges", "250", "--seed", "7", "-o"]
            .into_iter()
            .map(String::from)
            .chain([p(o).to_string()])
            .collect::<Vec<_>>()
    };
    let a = dir.join("a.el");
    let a_args = args(&a);
    run(&a_args.iter().map(String::as_str).collect::<Vec<_>>());
    let first = std::fs::read(&a).unwrap();
    run(&a_args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(first, std::fs::read(&a).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# rwnet "));
    assert!(text.contains("# seed: 7"));
    assert!(text.contains("# input-sha256: "));
    assert!(text.contains("# config lambda = 4"));
    assert_eq!(data_lines(&text).len(), 250);

    let other = run(&["generate", "--edges", "250", "--seed", "8"]);
    assert_ne!(data_lines(&text), data_lines(std::str::from_utf8(&other.stdout).unwrap()));
}

#[test]
fn stats_reports_metrics_json() {
    let dir = scratch("stats");
    let g = dir.join("tri.el");
    std::fs::write(&g, "a b\nb c\nc a\nc d\n").unwrap();
    let out = run(&["stats", "-i", p(&g), "--fit-stats"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 4);
    assert_eq!(v["m"], 4);
    assert_eq!(v["diameter"], 2);
    assert!((v["clustering_global"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!(v["clustering_mean_local"].is_number());
    assert!(v["fit_statistics"].is_object());
    assert!(v["meta"]["input_sha256"].is_string());
}

#[test]
fn pg_writes_retained_rows_with_header() {
    let dir = scratch("pg");
    let g = small_graph(&dir, "10", "simple");
    let chain = dir.join("chain.csv");
    let summary = dir.join("summary.json");
    run(&[
        "pg", "-i", p(&g), "--particles", "100", "--iters", "1500", "--burn", "500", "--seed", "1", "-o", p(&chain),
        "--summary", p(&summary),
    ]);
    let text = std::fs::read_to_string(&chain).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], "iteration,alpha,lambda,loglik_estimate,accepted");
    assert_eq!(rows.len() - 1, 1500);
    assert!(rows[1].starts_with("501,"));
    assert!(text.contains("# config burn = 500"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["n"], 1500);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("cfg");
    let g = small_graph(&dir, "8", "simple");
    let cfg = dir.join("run.conf");
    std::fs::write(&cfg, "# sampler\niters = 30\nthin = 2\nparticles = 5\nstep_alpha = 0.5\n").unwrap();
    let out = run(&["pmmh", "-i", p(&g), "--config", p(&cfg), "--iters", "12"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(data_lines(&text).len() - 1, 12);
    assert!(text.contains("# config thin = 2"));
    assert!(text.contains("# config step-alpha = 0.5"));
    assert!(text.contains("# config iters = 12"));
}

#[test]
fn preset_sets_thinning() {
    let dir = scratch("preset");
    let g = small_graph(&dir, "6", "simple");
    let out = run(&["pg", "-i", p(&g), "--preset", "thorough", "--iters", "5", "--burn", "10", "--particles", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows.len() - 1, 5);
    assert!(rows[2].starts_with("51,"));
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = scratch("threads");
    let g = small_graph(&dir, "12", "simple");
    let a = run(&["bridge", "-i", p(&g), "--particles", "64", "--seed", "5", "--threads", "1"]);
    let b = run(&["bridge", "-i", p(&g), "--particles", "64", "--seed", "5", "--threads", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["loglik_estimate"].as_f64().unwrap() < 0.0);
}

#[test]
fn mle_rejects_simple_mode_and_fits_multigraphs() {
    let dir = scratch("mle");
    let g = small_graph(&dir, "200", "multigraph");
    let bad = bin().args(["mle", "-i", p(&g), "--mode", "simple"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("multigraph"));
    let out = run(&["mle", "-i", p(&g)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let n = std::fs::read_to_string(&g).unwrap();
    let mut labels = std::collections::HashSet::new();
    for l in data_lines(&n) {
        labels.extend(l.split_whitespace().map(String::from));
    }
    let want = (labels.len() as f64 - 2.0) / 199.0;
    assert!((v["alpha_hat"].as_f64().unwrap() - want).abs() < 1e-12);
    assert!(v["lambda_hat"].as_f64().unwrap() >= 0.0);
}

#[test]
fn mixing_time_and_oracle() {
    let dir = scratch("oracle");
    let k4 = dir.join("k4.el");
    std::fs::write(&k4, "0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n").unwrap();
    let v: Value = serde_json::from_slice(&run(&["mixing-time", "-i", p(&k4)]).stdout).unwrap();
    assert!(v["per_vertex"].as_array().unwrap().iter().all(|x| x == 2));

    let star = dir.join("star.el");
    std::fs::write(&star, "0 1\n0 2\n0 3\n").unwrap();
    let v: Value = serde_json::from_slice(&run(&["oracle", "-i", p(&star)]).stdout).unwrap();
    // every order of a 3-star is feasible and equally likely by symmetry
    assert_eq!(v["n_orders"], 6);
    for x in v["first_edge"].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn ppd_reads_saved_chain() {
    let dir = scratch("ppd");
    let g = small_graph(&dir, "30", "simple");
    let chain = dir.join("chain.csv");
    run(&["pg", "-i", p(&g), "--particles", "8", "--iters", "20", "-o", p(&chain)]);
    let out = run(&["ppd", "-i", p(&g), "--chain", p(&chain), "--models", "rw_u,er", "--samples", "20"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows[0], "model,statistic,mean,sd");
    assert_eq!(rows.len(), 1 + 2 * 3);
}

#[test]
fn errors_exit_nonzero() {
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["stats", "-i", "/nonexistent/graph.el"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = bin().args(["generate", "--model", "er", "--edges", "5"]).output().unwrap();
    assert!(!out.status.success());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use detsum::commands::expsum_csv;
use detsum::RunConfig;
use detsum_core::greens::build_expsum;
use detsum_core::solver::{solve, NoClock};
use detsum_core::space::Model;
use detsum_core::wave::{from_wf_text, norm_a, to_wf_text};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn sample_text() -> String {
    fs::read_to_string(fixture("sample.conf")).unwrap()
}

fn oracle_energy() -> f64 {
    fs::read_to_string(fixture("sample.energy")).unwrap().trim().parse().unwrap()
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detsum")).args(args).current_dir(dir).output().unwrap()
}

/// Writes `config` into a fresh directory and runs `sub` on it.
fn run_config(config: &str, sub: &str, extra: &[&str]) -> (tempfile::TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.conf"), config).unwrap();
    let mut args = vec![sub, "--config", "run.conf"];
    args.extend_from_slice(extra);
    let out = run(dir.path(), &args);
    (dir, out)
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("out/summary")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{} = ", key)).map(str::to_string))
        .unwrap_or_else(|| panic!("{} missing from summary", key))
}

fn without_seconds(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn sample_converges_to_the_oracle_energy() {
    let (dir, out) = run_config(&sample_text(), "solve", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mu: f64 = summary_value(dir.path(), "mu").parse().unwrap();
    assert!((mu - oracle_energy()).abs() <= 1e-6, "{} vs {}", mu, oracle_energy());
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,mu,rayleigh,psiTildeNorm,maxCgResidual,seconds\n"));
    let wf = fs::read_to_string(dir.path().join("out/wavefunction.wf")).unwrap();
    assert!(wf.starts_with("detsum-wf v1 N=2 r=4 M=32\n"));
    let cfg = RunConfig::parse(&sample_text()).unwrap();
    let model = Model::build(&cfg.model).unwrap();
    let psi = from_wf_text(&wf).unwrap();
    assert!((norm_a(&model.space, &psi).unwrap() - 1.0).abs() <= 1e-10);
}

#[test]
fn written_wavefunction_reloads_with_the_same_norm() {
    let mut cfg = RunConfig::parse(&sample_text()).unwrap();
    cfg.solve.rank = 2;
    cfg.solve.iterations = 3;
    let model = Model::build(&cfg.model).unwrap();
    let out = solve(&model, &cfg.solve, &NoClock).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.wf");
    fs::write(&path, to_wf_text(&out.psi)).unwrap();
    let before = norm_a(&model.space, &out.psi).unwrap();
    let after = detsum::commands::reloaded_norm(&cfg.model, &path).unwrap();
    assert!((after - before).abs() <= 1e-15 * before);
}

#[test]
fn same_seed_gives_the_same_trace() {
    let text = sample_text().replace("solve.rank = 4", "solve.rank = 2").replace("solve.iterations = 50", "solve.iterations = 5");
    let (d1, o1) = run_config(&text, "solve", &["--seed", "7"]);
    let (d2, o2) = run_config(&text, "solve", &["--seed", "7"]);
    assert_eq!(o1.status.code(), o2.status.code());
    let t1 = fs::read_to_string(d1.path().join("out/trace.csv")).unwrap();
    let t2 = fs::read_to_string(d2.path().join("out/trace.csv")).unwrap();
    assert_eq!(without_seconds(&t1), without_seconds(&t2));
    let (d3, _) = run_config(&text, "solve", &["--seed", "8"]);
    let t3 = fs::read_to_string(d3.path().join("out/trace.csv")).unwrap();
    assert_ne!(without_seconds(&t1), without_seconds(&t3));
}

#[test]
fn iteration_cap_exits_with_two() {
    let text = sample_text().replace("solve.iterations = 50", "solve.iterations = 1");
    let (dir, out) = run_config(&text, "solve", &[]);
    assert_eq!(out.status.code(), Some(2));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert_eq!(summary_value(dir.path(), "status"), "iteration cap");
}

#[test]
fn malformed_config_names_the_key() {
    let (_, out) = run_config(&format!("{}solve.rnak = 3\n", sample_text()), "solve", &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = format!("line {}", sample_text().lines().count() + 1);
    assert!(err.contains("solve.rnak") && err.contains(&line), "{}", err);
    let (_, out) = run_config(&sample_text().replace("model.spacing = 1.2", "model.spacing = wide"), "solve", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.spacing"));
}

#[test]
fn unbound_start_fails_with_its_trace() {
    // Three electrons on a weak nucleus start with a positive energy.
    let text = sample_text().replace("model.nucleus = 0.0 2.0", "model.nucleus = 0.0 0.05").replace("solve.n = 2", "solve.n = 3");
    let (dir, out) = run_config(&text, "solve", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("must be negative"));
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,"));
}

#[test]
fn fast_path_flag_reaches_the_solver() {
    let text = sample_text().replace("solve.rank = 4", "solve.rank = 2").replace("solve.iterations = 50", "solve.iterations = 2");
    let (dir, out) = run_config(&text, "solve", &["--fast-path", "--threads", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let updates: usize = summary_value(dir.path(), "fast_path_updates").parse().unwrap();
    assert!(updates > 0);
}

#[test]
fn verify_passes_and_is_deterministic() {
    let text = format!("{}verify.cases = 4\n", sample_text());
    let (_, o1) = run_config(&text, "verify", &[]);
    let (_, o2) = run_config(&text, "verify", &[]);
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stdout));
    assert_eq!(o1.stdout, o2.stdout);
    let report = String::from_utf8_lossy(&o1.stdout);
    assert!(report.contains("oracle ground energy = -4.37195314719429"));
    assert!(report.trim_end().ends_with("PASS"));
}

#[test]
fn verify_fails_on_a_corrupted_tolerance() {
    let text = format!("{}verify.cases = 2\nverify.tolerance = 1e-30\n", sample_text());
    let (_, out) = run_config(&text, "verify", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().ends_with("FAIL"));
}

#[test]
fn verify_refuses_models_beyond_the_oracle() {
    let text = sample_text().replace("model.points = 16", "model.points = 64");
    let (_, out) = run_config(&text, "verify", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the limit"));
}

#[test]
fn expsum_prints_table_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["expsum", "--eps", "1e-4"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&out.stdout);
    let es = build_expsum(1e-4, 1e8).unwrap();
    assert_eq!(csv, expsum_csv(&es));
    assert_eq!(csv.lines().count(), es.len() + 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("certificate") && err.contains("PASS"), "{}", err);

    let coarse = run(dir.path(), &["expsum", "--eps", "0.5"]);
    assert_eq!(coarse.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&coarse.stdout).lines().count() - 1 <= 10);

    let bad = run(dir.path(), &["expsum", "--eps", "2"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn expsum_values_round_trip() {
    let es = build_expsum(1e-3, 1e6).unwrap();
    for (line, &(w, tau)) in expsum_csv(&es).lines().skip(1).zip(&es.terms) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), w);
        assert_eq!(f[2].parse::<f64>().unwrap(), tau);
    }
}

#[test]
fn bench_covers_the_grid() {
    let start = std::time::Instant::now();
    let (_, out) = run_config(&sample_text(), "bench", &[]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("r,N,Mtot,L,S,iterations,seconds,seconds_per_iteration\n"));
    assert_eq!(table.lines().count(), 1 + 3);
    assert!(start.elapsed().as_secs() < 120);
}

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use detsum_core::greens::{build_expsum, ExpSum, CERTIFICATE_POINTS};
use detsum_core::oracle;
use detsum_core::solver::{solve, Outcome, SolveConfig, WallClock};
use detsum_core::space::{Model, ModelConfig};
use detsum_core::wave::{from_wf_text, norm_a, to_wf_text};

use crate::config::RunConfig;
use crate::verify::run_verify;

pub const EXIT_CONVERGED: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_ITERATION_CAP: u8 = 2;

fn summary(cfg: &RunConfig, out: &Outcome, seconds: f64) -> String {
    let last = out.trace.records.last();
    let mut s = String::new();
    let _ = writeln!(s, "status = {}", if out.converged { "converged" } else { "iteration cap" });
    let _ = writeln!(s, "mu = {:.17e}", out.mu);
    let _ = writeln!(s, "rayleigh = {:.17e}", last.map_or(f64::NAN, |r| r.rayleigh));
    let _ = writeln!(s, "r = {}", cfg.solve.rank);
    let _ = writeln!(s, "N = {}", cfg.solve.n);
    let _ = writeln!(s, "Mtot = {}", out.psi.mtot());
    let _ = writeln!(s, "iterations = {}", out.trace.len());
    let _ = writeln!(s, "expsum_terms = {}", out.expsum_terms);
    if cfg.solve.fast_path {
        let f = &out.fast_path;
        let _ = writeln!(s, "fast_path_updates = {}", f.updates);
        let _ = writeln!(s, "fast_path_fallbacks = {}", f.fallbacks);
        if cfg.solve.verify_fast_path {
            let _ = writeln!(s, "fast_path_max_deviation = {:.3e}", f.worst());
        }
    }
    let _ = writeln!(s, "seconds = {:.3}", seconds);
    s
}

/// Runs the Green's-function iteration and writes `trace.csv`,
/// `wavefunction.wf` and `summary` into the output directory.
pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    let model = Model::build(&cfg.model).map_err(|e| anyhow!("{}", e))?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let start = Instant::now();
    let clock = WallClock::default();
    match solve(&model, &cfg.solve, &clock) {
        Ok(out) => {
            let secs = start.elapsed().as_secs_f64();
            fs::write(cfg.output.join("trace.csv"), out.trace.to_csv())?;
            fs::write(cfg.output.join("wavefunction.wf"), to_wf_text(&out.psi))?;
            let text = summary(cfg, &out, secs);
            fs::write(cfg.output.join("summary"), &text)?;
            print!("{}", text);
            Ok(if out.converged { EXIT_CONVERGED } else { EXIT_ITERATION_CAP })
        }
        Err(f) => {
            fs::write(cfg.output.join("trace.csv"), f.trace.to_csv())?;
            eprintln!("solve failed after {} iterations: {}", f.trace.len(), f.error);
            eprint!("{}", f.trace.to_csv());
            Ok(EXIT_ERROR)
        }
    }
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8> {
    let report = run_verify(cfg)?;
    print!("{}", report.render());
    Ok(if report.passed() { 0 } else { 1 })
}

pub fn expsum_csv(es: &ExpSum) -> String {
    let mut s = String::from("p,w,tau\n");
    for (p, (w, tau)) in es.terms.iter().enumerate() {
        let _ = writeln!(s, "{},{:.16e},{:.16e}", p, w, tau);
    }
    s
}

/// Prints the table to stdout and the certificate to stderr.
pub fn cmd_expsum(eps: f64, upper: f64) -> Result<u8> {
    let es = build_expsum(eps, upper).map_err(|e| anyhow!("{}", e))?;
    print!("{}", expsum_csv(&es));
    let cert = es.certificate();
    eprintln!(
        "L = {}; certificate max |1 - t S(t)| = {:.6e} over {} points on [1, {:e}]",
        es.len(),
        cert,
        CERTIFICATE_POINTS,
        upper
    );
    let pass = cert <= eps;
    eprintln!("{} (eps = {:e})", if pass { "PASS" } else { "FAIL" }, eps);
    Ok(if pass { 0 } else { 1 })
}

/// Times `bench.iterations` Green's-function iterations for every grid cell.
pub fn cmd_bench(cfg: &RunConfig) -> Result<u8> {
    println!("r,N,Mtot,L,S,iterations,seconds,seconds_per_iteration");
    let b = &cfg.bench;
    for &points in &b.points {
        let model_cfg = ModelConfig { points_per_dim: points, ..cfg.model.clone() };
        let model = Model::build(&model_cfg).map_err(|e| anyhow!("{}", e))?;
        for &n in &b.particles {
            for &rank in &b.ranks {
                for &eps in &b.eps {
                    for &steps in &b.cg_steps {
                        let solve_cfg = SolveConfig {
                            n,
                            rank,
                            eps_expsum: eps,
                            cg_steps: steps,
                            iterations: b.iterations,
                            mu_tol: 0.0,
                            ..cfg.solve.clone()
                        };
                        let l = build_expsum(eps, solve_cfg.expsum_upper).map_err(|e| anyhow!("{}", e))?.len();
                        let start = Instant::now();
                        let res = solve(&model, &solve_cfg, &WallClock::default());
                        let secs = start.elapsed().as_secs_f64();
                        let iters = match &res {
                            Ok(o) => o.trace.len(),
                            Err(f) => f.trace.len(),
                        };
                        if let Err(f) = &res {
                            eprintln!("r={} N={} M={}: {}", rank, n, model.mtot(), f.error);
                        }
                        println!(
                            "{},{},{},{},{},{},{:.4},{:.4}",
                            rank,
                            n,
                            model.mtot(),
                            l,
                            steps,
                            iters,
                            secs,
                            secs / iters.max(1) as f64
                        );
                    }
                }
            }
        }
    }
    Ok(0)
}

/// `‖ψ‖_A` of a written wavefunction, reloaded from disk.
pub fn reloaded_norm(model_cfg: &ModelConfig, path: &std::path::Path) -> Result<f64> {
    let model = Model::build(model_cfg).map_err(|e| anyhow!("{}", e))?;
    let psi = from_wf_text(&fs::read_to_string(path)?).map_err(|e| anyhow!("{}", e))?;
    norm_a(&model.space, &psi).map_err(|e| anyhow!("{}", e))
}

/// Exact ground energy of the configured model.
pub fn oracle_energy(cfg: &RunConfig) -> Result<f64> {
    let model = Model::build(&cfg.model).map_err(|e| anyhow!("{}", e))?;
    oracle::exact_ground(&model, cfg.solve.n).map(|(e, _)| e).map_err(|e| anyhow!("{}", e))
}

//! Line-oriented `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. `model.nucleus` may
//! repeat; every other key may appear once.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use detsum_core::solver::{InitMode, MuRule, SolveConfig};
use detsum_core::space::{Boundary, ModelConfig, Nucleus};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Random cases per (N, Q) cell of every suite.
    pub cases: usize,
    /// Relative tolerance of every comparison.
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { cases: 20, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub ranks: Vec<usize>,
    pub particles: Vec<usize>,
    /// Spatial points per dimension.
    pub points: Vec<usize>,
    pub eps: Vec<f64>,
    pub cg_steps: Vec<usize>,
    /// Green's-function iterations timed per cell.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub solve: SolveConfig,
    pub output: PathBuf,
    pub verify: VerifyOptions,
    pub bench: BenchOptions,
}

const KEYS: &[&str] = &[
    "model.dim",
    "model.points",
    "model.spacing",
    "model.softening",
    "model.boundary",
    "model.nucleus",
    "solve.n",
    "solve.rank",
    "solve.iterations",
    "solve.cg_steps",
    "solve.cg_tol",
    "solve.eps",
    "solve.expsum_upper",
    "solve.eta_rel",
    "solve.mu_rule",
    "solve.mu_tol",
    "solve.seed",
    "solve.fast_path",
    "solve.verify_fast_path",
    "solve.dense_solve",
    "solve.init",
    "output.dir",
    "verify.cases",
    "verify.tolerance",
    "bench.ranks",
    "bench.particles",
    "bench.points",
    "bench.eps",
    "bench.cg_steps",
    "bench.iterations",
];

const REQUIRED: &[&str] = &["model.points", "model.spacing", "model.softening", "model.nucleus", "solve.n", "solve.rank"];

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn num<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| anyhow!("line {}: {} = '{}' is not a valid number", e.line, e.key, e.value))
}

fn list<T: std::str::FromStr>(e: &Entry) -> Result<Vec<T>> {
    let out = e
        .value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| anyhow!("line {}: {}: '{}' is not a valid number", e.line, e.key, t)))
        .collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        bail!("line {}: {} needs at least one value", e.line, e.key);
    }
    Ok(out)
}

fn flag(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => bail!("line {}: {} = '{}' is not true or false", e.line, e.key, v),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("line {}: expected 'section.key = value', got '{}'", line, s))?;
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key '{}'", line, key);
            }
            if key != "model.nucleus" {
                if let Some(prev) = entries.iter().find(|e| e.key == key) {
                    bail!("line {}: key '{}' already set on line {}", line, key, prev.line);
                }
            }
            entries.push(Entry { line, key, value: v.trim().to_string() });
        }
        for req in REQUIRED {
            if !entries.iter().any(|e| e.key == *req) {
                bail!("missing required key '{}'", req);
            }
        }

        let mut dim = 1;
        let mut model = ModelConfig {
            dim: 1,
            points_per_dim: 0,
            spacing: 0.0,
            nuclei: Vec::new(),
            softening: 0.0,
            boundary: Boundary::Dirichlet,
        };
        let mut solve = SolveConfig::default();
        let mut output = PathBuf::from("out");
        let mut verify = VerifyOptions::default();
        let mut bench = BenchOptions { ranks: vec![1, 2], particles: vec![2], points: vec![], eps: vec![], cg_steps: vec![], iterations: 1 };

        if let Some(e) = entries.iter().find(|e| e.key == "model.dim") {
            dim = num(e)?;
        }
        for e in &entries {
            match e.key.as_str() {
                "model.dim" => model.dim = dim,
                "model.points" => model.points_per_dim = num(e)?,
                "model.spacing" => model.spacing = num(e)?,
                "model.softening" => model.softening = num(e)?,
                "model.boundary" => {
                    model.boundary = match e.value.as_str() {
                        "dirichlet" => Boundary::Dirichlet,
                        v => bail!("line {}: model.boundary = '{}'; only 'dirichlet' is supported", e.line, v),
                    }
                }
                "model.nucleus" => {
                    let vals: Vec<f64> = list(e)?;
                    if vals.len() != dim + 1 {
                        bail!("line {}: model.nucleus needs {} coordinates and a charge, got {} values", e.line, dim, vals.len());
                    }
                    model.nuclei.push(Nucleus { position: vals[..dim].to_vec(), charge: vals[dim] });
                }
                "solve.n" => solve.n = num(e)?,
                "solve.rank" => solve.rank = num(e)?,
                "solve.iterations" => solve.iterations = num(e)?,
                "solve.cg_steps" => solve.cg_steps = num(e)?,
                "solve.cg_tol" => solve.cg_tol = num(e)?,
                "solve.eps" => solve.eps_expsum = num(e)?,
                "solve.expsum_upper" => solve.expsum_upper = num(e)?,
                "solve.eta_rel" => solve.eta_rel = num(e)?,
                "solve.mu_rule" => {
                    solve.mu_rule = match e.value.as_str() {
                        "rayleigh" => MuRule::Rayleigh,
                        "newton" => MuRule::Newton,
                        v => bail!("line {}: solve.mu_rule = '{}'; expected rayleigh or newton", e.line, v),
                    }
                }
                "solve.mu_tol" => solve.mu_tol = num(e)?,
                "solve.seed" => solve.seed = num(e)?,
                "solve.fast_path" => solve.fast_path = flag(e)?,
                "solve.verify_fast_path" => solve.verify_fast_path = flag(e)?,
                "solve.dense_solve" => solve.dense_solve = flag(e)?,
                "solve.init" => {
                    solve.init_mode = match e.value.as_str() {
                        "aufbau" => InitMode::Aufbau,
                        v => bail!("line {}: solve.init = '{}'; only 'aufbau' is supported", e.line, v),
                    }
                }
                "output.dir" => output = PathBuf::from(&e.value),
                "verify.cases" => verify.cases = num(e)?,
                "verify.tolerance" => verify.tolerance = num(e)?,
                "bench.ranks" => bench.ranks = list(e)?,
                "bench.particles" => bench.particles = list(e)?,
                "bench.points" => bench.points = list(e)?,
                "bench.eps" => bench.eps = list(e)?,
                "bench.cg_steps" => bench.cg_steps = list(e)?,
                "bench.iterations" => bench.iterations = num(e)?,
                _ => unreachable!("keys are checked against KEYS"),
            }
        }
        if bench.points.is_empty() {
            bench.points = vec![model.points_per_dim];
        }
        if bench.eps.is_empty() {
            bench.eps = vec![solve.eps_expsum];
        }
        if bench.cg_steps.is_empty() {
            bench.cg_steps = vec![solve.cg_steps];
        }
        solve.validate().map_err(|e| anyhow!("{}", e))?;
        if !(verify.tolerance > 0.0) || verify.cases == 0 || bench.iterations == 0 {
            bail!("verify.tolerance must be positive; verify.cases and bench.iterations at least 1");
        }
        Ok(RunConfig { model, solve, output, verify, bench })
    }
}

//! The Green's-function iteration: one ALS sweep per iteration, then
//! normalization and a shift update.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asym::Asym;
use crate::error::{Error, Result};
use crate::greens::{build_expsum, build_greens, GreensRep};
use crate::linalg::{Mat, Vector};
use crate::math::sqrt;
use crate::space::{weighted_dot, Model};
use crate::wave::{norm_a, SeparatedWavefunction, SlaterTerm};

use super::cg::{cg_solve, dense_solve};
use super::energy::{mu_newton, rayleigh};
use super::fast::{bundle_diff, rel_diff, rel_diff_vec, update_d, update_rhs_entry, FastPathReport};
use super::normal::{assemble, fresh_d_entry, rest, DEntry};
use super::rhs::{build_rhs_cached, empty_cache, RhsCache};
use super::{Clock, InitMode, MuRule, SolveConfig, Trace, TraceRecord};

/// Run result when the iteration ends normally.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub psi: SeparatedWavefunction,
    pub mu: f64,
    pub trace: Trace,
    /// `|Δμ|` fell below the tolerance before the iteration cap.
    pub converged: bool,
    pub fast_path: FastPathReport,
    pub expsum_terms: usize,
}

/// An error together with the trace recorded up to it.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct Failure {
    pub error: Error,
    pub trace: Trace,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, trace: Trace::default() }
    }
}

/// Lowest eigenvectors of `T + V`, filled two per level (spin up, then down),
/// each term perturbed by seeded noise of relative size 0.01 in the orbital's
/// own spin channel. Coefficients start at `1/r`; the result has unit norm.
pub fn initial_guess(model: &Model, n: usize, r: usize, seed: u64) -> Result<SeparatedWavefunction> {
    if n == 0 || r == 0 {
        return Err(Error::Config(format!("need N ≥ 1 and r ≥ 1, got N = {}, r = {}", n, r)));
    }
    let sp = &model.space;
    let ms = sp.spatial_len();
    let levels = n.div_ceil(2);
    if levels > ms {
        return Err(Error::Config(format!("{} particles need {} spatial levels but the grid has {}", n, levels, ms)));
    }
    let mut h = model.one_body.tmat.clone();
    for j in 0..ms {
        h[(j, j)] += model.one_body.vdiag[j];
    }
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..ms).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(r);
    for _ in 0..r {
        let mut orbs = Mat::zeros(sp.len(), n);
        for i in 0..n {
            let level = order[i / 2];
            let spin = i % 2;
            let q = eig.eigenvectors.column(level);
            let mut f = Vector::zeros(sp.len());
            for j in 0..ms {
                f[spin * ms + j] = q[j];
            }
            let qn = sqrt(weighted_dot(sp, &f, &f));
            f /= qn;
            let mut noise = Vector::zeros(sp.len());
            for j in 0..ms {
                noise[spin * ms + j] = rng.random_range(-1.0..1.0);
            }
            let nn = sqrt(weighted_dot(sp, &noise, &noise));
            if nn > 0.0 {
                f += noise * (0.01 / nn);
            }
            let fn_ = sqrt(weighted_dot(sp, &f, &f));
            orbs.set_column(i, &(f / fn_));
        }
        terms.push(SlaterTerm::new(1.0 / r as f64, orbs));
    }
    let mut psi = SeparatedWavefunction::new(terms)?;
    let nrm = norm_a(sp, &psi)?;
    if !(nrm > 0.0) {
        return Err(Error::DegenerateWavefunction);
    }
    psi.scale(1.0 / nrm);
    Ok(psi)
}

/// Builds the starting state for `cfg`.
pub fn init(model: &Model, cfg: &SolveConfig) -> Result<SeparatedWavefunction> {
    match cfg.init_mode {
        InitMode::Aufbau => initial_guess(model, cfg.n, cfg.rank, cfg.seed),
    }
}

/// State carried across the directions of one sweep.
pub(crate) struct Sweep<'a> {
    pub model: &'a Model,
    pub rep: &'a GreensRep,
    pub cfg: &'a SolveConfig,
    pub rng: &'a mut ChaCha8Rng,
    pub report: &'a mut FastPathReport,
    pub d_prev: Option<Vec<Option<DEntry>>>,
    pub cache: RhsCache,
}

impl<'a> Sweep<'a> {
    fn asym(&self) -> Asym<'a> {
        let model: &'a Model = self.model;
        Asym::new(&model.space, &model.poisson, self.cfg.eta_rel)
    }

    fn d_entries(&mut self, k: usize, pt: &SeparatedWavefunction) -> Result<Vec<Option<DEntry>>> {
        let sp = &self.model.space;
        let r = pt.rank();
        let n = pt.n();
        if n == 1 {
            return Ok(alloc::vec![None; r * r]);
        }
        let eta = self.cfg.eta_rel;
        let prev = if self.cfg.fast_path && k > 0 { self.d_prev.take() } else { None };
        let mut out = Vec::with_capacity(r * r);
        for l in 0..r {
            for lp in 0..r {
                let idx = l * r + lp;
                let updated = prev.as_ref().and_then(|p| p[idx].as_ref()).map(|old| update_d(sp, pt, k - 1, l, lp, old));
                let entry = match updated {
                    Some(Ok(e)) => {
                        self.report.updates += 1;
                        if self.cfg.verify_fast_path {
                            let fresh = fresh_d_entry(sp, pt, k, l, lp, eta)?;
                            self.report.max_d = self.report.max_d.max(bundle_diff(&e.bundle, &fresh.bundle));
                        }
                        e
                    }
                    Some(Err(_)) => {
                        self.report.fallbacks += 1;
                        fresh_d_entry(sp, pt, k, l, lp, eta)?
                    }
                    None => fresh_d_entry(sp, pt, k, l, lp, eta)?,
                };
                out.push(Some(entry));
            }
        }
        Ok(out)
    }

    fn advance_cache(&mut self, k: usize, pt: &SeparatedWavefunction, psi: &SeparatedWavefunction) -> Result<()> {
        let r = psi.rank();
        let mut cache = core::mem::take(&mut self.cache);
        let asym = self.asym();
        for (l, slots) in cache.iter_mut().enumerate() {
            for p in 0..self.rep.len() {
                for (m, term) in psi.terms.iter().enumerate() {
                    let idx = p * r + m;
                    let Some(old) = slots[idx].take() else { continue };
                    match update_rhs_entry(&asym, self.rep, p, &pt.terms[l].orbitals, &term.orbitals, k - 1, &old) {
                        Ok(new) => {
                            self.report.updates += 1;
                            if self.cfg.verify_fast_path {
                                let frest = self.rep.apply_all(p, &rest(&pt.terms[l].orbitals, k));
                                let fresh = asym.prepare_delta(&frest, k, &term.orbitals)?;
                                let rep = &mut *self.report;
                                rep.max_e = rep.max_e.max(bundle_diff(&new.prep.e.bundle, &fresh.e.bundle));
                                rep.max_theta = rep.max_theta.max(rel_diff(&new.prep.theta, &fresh.theta));
                                if let Some(parts) = &new.parts {
                                    let fp = asym.delta_w_parts(&fresh, &term.orbitals);
                                    rep.max_combined = rep
                                        .max_combined
                                        .max(rel_diff(&parts.combined, &fp.combined))
                                        .max(rel_diff_vec(&parts.rho_w, &fp.rho_w));
                                }
                            }
                            slots[idx] = Some(new);
                        }
                        Err(_) => self.report.fallbacks += 1,
                    }
                }
            }
        }
        self.cache = cache;
        Ok(())
    }

    /// Fits direction `k` of `pt`; returns the relative solver residual.
    pub fn direction(&mut self, k: usize, pt: &mut SeparatedWavefunction, psi: &SeparatedWavefunction) -> Result<f64> {
        let r = pt.rank();
        let d_entries = self.d_entries(k, pt)?;
        let kernel = assemble(&self.model.space, pt, k, d_entries)?;
        if self.cfg.fast_path && k > 0 && pt.n() > 1 {
            self.advance_cache(k, pt, psi)?;
        } else {
            self.cache = empty_cache(r, self.rep.len());
        }
        let asym = self.asym();
        let b = build_rhs_cached(&asym, &self.model.one_body, pt, psi, self.rep, k, &mut self.cache, self.cfg.fast_path)?;
        let mut x0 = Mat::zeros(pt.mtot(), r);
        for (l, t) in pt.terms.iter().enumerate() {
            x0.set_column(l, &t.orbitals.column(k));
        }
        let sol = if self.cfg.dense_solve {
            dense_solve(&self.model.space, &kernel, &b, &x0)?
        } else {
            cg_solve(&self.model.space, &kernel, &b, &x0, self.cfg.cg_steps, self.cfg.cg_tol)?
        };
        let sp = &self.model.space;
        for (l, term) in pt.terms.iter_mut().enumerate() {
            let x = sol.x.column(l).into_owned();
            let nrm = sqrt(weighted_dot(sp, &x, &x));
            if nrm > 0.0 && nrm.is_finite() {
                term.orbitals.set_column(k, &(x / nrm));
                term.coef *= nrm;
            } else {
                let old = term.orbitals.column(k).into_owned();
                let mut f = Vector::from_fn(old.len(), |i, _| if old[i] != 0.0 { self.rng.random_range(-1.0..1.0) } else { 0.0 });
                let fnrm = sqrt(weighted_dot(sp, &f, &f));
                if fnrm > 0.0 {
                    f /= fnrm;
                }
                term.orbitals.set_column(k, &f);
                term.coef = 0.0;
            }
        }
        if self.cfg.fast_path {
            self.d_prev = Some(kernel.d_entries);
        }
        Ok(sol.residual)
    }
}

/// One full ALS sweep fitting `−G_μ(V + W)ψ`, starting from `start`.
pub fn als_sweep(model: &Model, cfg: &SolveConfig, rep: &GreensRep, start: &SeparatedWavefunction, psi: &SeparatedWavefunction, rng: &mut ChaCha8Rng, report: &mut FastPathReport) -> Result<(SeparatedWavefunction, f64)> {
    let mut pt = start.clone();
    let mut sweep = Sweep { model, rep, cfg, rng, report, d_prev: None, cache: empty_cache(pt.rank(), rep.len()) };
    let mut worst: f64 = 0.0;
    for k in 0..pt.n() {
        worst = worst.max(sweep.direction(k, &mut pt, psi)?);
    }
    Ok((pt, worst))
}

/// Fits direction `k` alone.
pub fn als_direction_solve(model: &Model, cfg: &SolveConfig, rep: &GreensRep, psi_tilde: &SeparatedWavefunction, psi: &SeparatedWavefunction, k: usize) -> Result<SeparatedWavefunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = FastPathReport::default();
    let mut quiet = cfg.clone();
    quiet.fast_path = false;
    let mut pt = psi_tilde.clone();
    let mut sweep = Sweep { model, rep, cfg: &quiet, rng: &mut rng, report: &mut report, d_prev: None, cache: empty_cache(pt.rank(), rep.len()) };
    sweep.direction(k, &mut pt, psi)?;
    Ok(pt)
}

/// Terms switched off in the previous sweep restart from a small coefficient.
fn revive(psi: &SeparatedWavefunction) -> SeparatedWavefunction {
    let mut out = psi.clone();
    let big = psi.terms.iter().map(|t| t.coef.abs()).fold(0.0f64, f64::max);
    for t in &mut out.terms {
        if t.coef == 0.0 {
            t.coef = 1e-3 * big;
        }
    }
    out
}

pub fn greens_iterate(psi0: &SeparatedWavefunction, cfg: &SolveConfig, model: &Model, clock: &dyn Clock) -> core::result::Result<Outcome, Failure> {
    cfg.validate()?;
    psi0.validate()?;
    if psi0.mtot() != model.mtot() {
        return Err(Error::Dimension(format!("wavefunction on {} points for a model of {}", psi0.mtot(), model.mtot())).into());
    }
    let t0 = clock.seconds();
    let es = build_expsum(cfg.eps_expsum, cfg.expsum_upper)?;
    let sp = &model.space;
    let mut psi = psi0.clone();
    let nrm = norm_a(sp, &psi)?;
    if !(nrm > 0.0) {
        return Err(Error::DegenerateWavefunction.into());
    }
    psi.scale(1.0 / nrm);
    let mut mu = rayleigh(model, &psi, cfg.eta_rel)?;
    let mut trace = Trace::default();
    if mu >= 0.0 {
        return Err(Failure { error: Error::NonNegativeMu(mu), trace });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut report = FastPathReport::default();
    let mut converged = false;
    for it in 1..=cfg.iterations {
        let step = (|| -> Result<(SeparatedWavefunction, f64, f64, f64, f64)> {
            let rep = build_greens(&es, mu, &model.one_body, psi.n())?;
            let (fit, res) = als_sweep(model, cfg, &rep, &revive(&psi), &psi, &mut rng, &mut report)?;
            let nt = norm_a(sp, &fit)?;
            if !(nt > 0.0) {
                return Err(Error::DegenerateWavefunction);
            }
            let mut next = fit.clone();
            next.scale(1.0 / nt);
            let ray = rayleigh(model, &next, cfg.eta_rel)?;
            let new_mu = match cfg.mu_rule {
                MuRule::Rayleigh => ray,
                MuRule::Newton => mu_newton(model, &psi, &fit, mu, cfg.eta_rel)?,
            };
            Ok((next, new_mu, ray, nt, res))
        })();
        let (next, new_mu, ray, nt, res) = match step {
            Ok(v) => v,
            Err(error) => return Err(Failure { error, trace }),
        };
        trace.records.push(TraceRecord { iter: it, mu: new_mu, rayleigh: ray, psi_tilde_norm: nt, max_cg_residual: res, seconds: clock.seconds() - t0 });
        if new_mu >= 0.0 {
            return Err(Failure { error: Error::NonNegativeMu(new_mu), trace });
        }
        let delta = (new_mu - mu).abs();
        psi = next;
        mu = new_mu;
        if delta <= cfg.mu_tol {
            converged = true;
            break;
        }
    }
    Ok(Outcome { psi, mu, trace, converged, fast_path: report, expsum_terms: es.len() })
}

/// Initial guess plus iteration.
pub fn solve(model: &Model, cfg: &SolveConfig, clock: &dyn Clock) -> core::result::Result<Outcome, Failure> {
    let psi0 = init(model, cfg)?;
    greens_iterate(&psi0, cfg, model, clock)
}

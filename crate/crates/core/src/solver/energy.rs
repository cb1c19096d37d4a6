//! Energies of separated wavefunctions: Rayleigh quotient and the Newton-type
//! shift update.

use alloc::vec::Vec;

use crate::asym::{sum_terms, Asym};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::space::{Full, Model, OneBodyOp, PotentialOnly, SingleParticleOp};
use crate::wave::{norm_a_squared, SeparatedWavefunction, SlaterTerm};

/// `⟨bra, (op + W) ket⟩_A` for single Slater products.
pub fn op_pair(asym: &Asym, bra: &Mat, ket: &Mat, op: &dyn SingleParticleOp) -> Result<f64> {
    let mut v = asym.tv(bra, ket, op)?;
    if ket.ncols() >= 2 {
        v += asym.w(bra, ket)?;
    }
    Ok(v)
}

/// `⟨ψ, H χ⟩_A`.
pub fn ip_h(asym: &Asym, one_body: &OneBodyOp, psi: &SeparatedWavefunction, chi: &SeparatedWavefunction) -> Result<f64> {
    sum_terms(psi, chi, |b, k| op_pair(asym, b, k, &Full(one_body)))
}

pub fn rayleigh(model: &Model, psi: &SeparatedWavefunction, eta_rel: f64) -> Result<f64> {
    let asym = Asym::new(&model.space, &model.poisson, eta_rel);
    let nrm2 = norm_a_squared(&model.space, psi)?;
    if !(nrm2 > 0.0) {
        return Err(Error::DegenerateWavefunction);
    }
    Ok(ip_h(&asym, &model.one_body, psi, psi)? / nrm2)
}

/// `μ_n − ⟨(V + W)ψ_n, ψ_n − ψ̃_n⟩_A / ‖ψ̃_n‖²_A`, with `ψ̃_n` the raw fit.
pub fn mu_newton(model: &Model, psi_n: &SeparatedWavefunction, psi_tilde: &SeparatedWavefunction, mu_n: f64, eta_rel: f64) -> Result<f64> {
    let asym = Asym::new(&model.space, &model.poisson, eta_rel);
    let nt2 = norm_a_squared(&model.space, psi_tilde)?;
    if !(nt2 > 0.0) {
        return Err(Error::DegenerateWavefunction);
    }
    let mut diff: Vec<SlaterTerm> = psi_n.terms.clone();
    diff.extend(psi_tilde.terms.iter().map(|t| SlaterTerm::new(-t.coef, t.orbitals.clone())));
    let diff = SeparatedWavefunction { terms: diff };
    let vw = sum_terms(&diff, psi_n, |b, k| op_pair(&asym, b, k, &PotentialOnly(&model.one_body)))?;
    Ok(mu_n - vw / nt2)
}

//! Brute-force dense reference: full tensors over `Mtot^N` indices, literal
//! permutation sums and an exact eigensolve in the antisymmetric sector.
//! Only for verification at N ≤ 3.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::math::sqrt;
use crate::space::{Model, ParticleSpace, PoissonOp, SingleParticleOp};
use crate::wave::SeparatedWavefunction;

/// Largest tensor the oracle will build.
pub const MAX_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n: usize,
    pub mtot: usize,
    /// Index `Σ γ_i Mtot^(N−1−i)`.
    pub data: Vec<f64>,
}

fn check_size(mtot: usize, n: usize) -> Result<usize> {
    if n == 0 || n > 3 {
        return Err(Error::SizeBound(format!("oracle supports 1 ≤ N ≤ 3, got N = {}", n)));
    }
    let mut total: usize = 1;
    for _ in 0..n {
        total = total.checked_mul(mtot).filter(|&t| t <= MAX_ENTRIES).ok_or_else(|| {
            Error::SizeBound(format!("Mtot^N = {}^{} exceeds the limit of {} entries", mtot, n, MAX_ENTRIES))
        })?;
    }
    Ok(total)
}

impl DenseState {
    pub fn zeros(mtot: usize, n: usize) -> Result<Self> {
        let len = check_size(mtot, n)?;
        Ok(DenseState { n, mtot, data: vec![0.0; len] })
    }

    pub fn decode(&self, mut flat: usize, out: &mut [usize]) {
        for i in (0..self.n).rev() {
            out[i] = flat % self.mtot;
            flat /= self.mtot;
        }
    }

    pub fn encode(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &g| acc * self.mtot + g)
    }

    pub fn axpy(&mut self, a: f64, other: &DenseState) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> DenseState {
        DenseState { n: self.n, mtot: self.mtot, data: self.data.iter().map(|x| a * x).collect() }
    }
}

/// Permutations of `0..n` with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn rec(k: usize, p: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == p.len() {
            out.push((p.clone(), sign));
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(k + 1, p, if i == k { sign } else { -sign }, out);
            p.swap(k, i);
        }
    }
    rec(0, &mut p, 1.0, &mut out);
    out
}

/// `Π_i φ_i(γ_i)`.
pub fn product_state(orbitals: &Mat) -> Result<DenseState> {
    let (mtot, n) = orbitals.shape();
    let mut s = DenseState::zeros(mtot, n)?;
    let mut idx = vec![0usize; n];
    for flat in 0..s.data.len() {
        s.decode(flat, &mut idx);
        s.data[flat] = (0..n).map(|i| orbitals[(idx[i], i)]).product();
    }
    Ok(s)
}

/// `Σ_π sign(π) state(γ_π(1), …, γ_π(N))`.
pub fn antisymmetrize(state: &DenseState) -> DenseState {
    let n = state.n;
    let perms = permutations(n);
    let mut out = state.scaled(0.0);
    let mut idx = vec![0usize; n];
    let mut pidx = vec![0usize; n];
    for flat in 0..state.data.len() {
        state.decode(flat, &mut idx);
        let mut acc = 0.0;
        for (p, sign) in &perms {
            for i in 0..n {
                pidx[i] = idx[p[i]];
            }
            acc += sign * state.data[state.encode(&pidx)];
        }
        out.data[flat] = acc;
    }
    out
}

/// Determinant tensor of the orbitals.
pub fn dense_antisymmetrize(orbitals: &Mat) -> Result<DenseState> {
    Ok(antisymmetrize(&product_state(orbitals)?))
}

/// `Σ_l s_l Π_i φ_i^l(γ_i)`, not antisymmetrized.
pub fn separated_state(psi: &SeparatedWavefunction) -> Result<DenseState> {
    let mut s = DenseState::zeros(psi.mtot(), psi.n())?;
    for t in &psi.terms {
        s.axpy(t.coef, &product_state(&t.orbitals)?);
    }
    Ok(s)
}

fn quad_weight(sp: &ParticleSpace, idx: &[usize]) -> f64 {
    idx.iter().map(|&g| sp.full_weights[g]).product()
}

/// Weighted tensor inner product.
pub fn dense_ip(sp: &ParticleSpace, a: &DenseState, b: &DenseState) -> f64 {
    let mut idx = vec![0usize; a.n];
    let mut acc = 0.0;
    for flat in 0..a.data.len() {
        a.decode(flat, &mut idx);
        acc += quad_weight(sp, &idx) * a.data[flat] * b.data[flat];
    }
    acc
}

/// `⟨a, b⟩_A` with the N! dropped: `⟨a, Σ_π sign π b⟩`.
pub fn dense_ip_a(sp: &ParticleSpace, a: &DenseState, b: &DenseState) -> f64 {
    dense_ip(sp, a, &antisymmetrize(b))
}

/// Dense matrix of a one-body operator on γ-functions.
pub fn op_matrix(op: &dyn SingleParticleOp, mtot: usize) -> Mat {
    let mut m = Mat::zeros(mtot, mtot);
    for g in 0..mtot {
        let mut e = Vector::zeros(mtot);
        e[g] = 1.0;
        m.set_column(g, &op.apply(&e));
    }
    m
}

/// Applies `m` to coordinate `axis`.
pub fn apply_axis(state: &DenseState, axis: usize, m: &Mat) -> DenseState {
    let mut out = state.scaled(0.0);
    let n = state.n;
    let stride = state.mtot.pow((n - 1 - axis) as u32);
    let mut idx = vec![0usize; n];
    for flat in 0..state.data.len() {
        state.decode(flat, &mut idx);
        if idx[axis] != 0 {
            continue;
        }
        for gp in 0..state.mtot {
            let mut acc = 0.0;
            for g in 0..state.mtot {
                let mg = m[(gp, g)];
                if mg != 0.0 {
                    acc += mg * state.data[flat + g * stride];
                }
            }
            out.data[flat + gp * stride] = acc;
        }
    }
    out
}

/// `Σ_i m_i` acting on every coordinate.
pub fn apply_one_body(state: &DenseState, m: &Mat) -> DenseState {
    let mut out = state.scaled(0.0);
    for axis in 0..state.n {
        out.axpy(1.0, &apply_axis(state, axis, m));
    }
    out
}

/// Pointwise `Σ_{i<j} P(r_i, r_j)`.
pub fn apply_pair(sp: &ParticleSpace, pop: &PoissonOp, state: &DenseState) -> DenseState {
    let mut out = state.scaled(0.0);
    let mut idx = vec![0usize; state.n];
    for flat in 0..state.data.len() {
        state.decode(flat, &mut idx);
        let mut v = 0.0;
        for i in 0..state.n {
            for j in i + 1..state.n {
                v += pop.pmat[(sp.split(idx[i]).0, sp.split(idx[j]).0)];
            }
        }
        out.data[flat] = v * state.data[flat];
    }
    out
}

/// Which parts of the Hamiltonian to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HParts {
    pub kinetic: bool,
    pub potential: bool,
    pub interaction: bool,
}

impl HParts {
    pub const ALL: HParts = HParts { kinetic: true, potential: true, interaction: true };
    pub const TV: HParts = HParts { kinetic: true, potential: true, interaction: false };
    pub const V: HParts = HParts { kinetic: false, potential: true, interaction: false };
    pub const W: HParts = HParts { kinetic: false, potential: false, interaction: true };
    pub const VW: HParts = HParts { kinetic: false, potential: true, interaction: true };
    pub const NONE: HParts = HParts { kinetic: false, potential: false, interaction: false };
}

/// Matrix of the selected one-body part on γ-functions.
pub fn one_body_matrix(model: &Model, parts: HParts) -> Mat {
    let ms = model.space.spatial_len();
    let mut h = Mat::zeros(ms, ms);
    if parts.kinetic {
        h += &model.one_body.tmat;
    }
    if parts.potential {
        h += Mat::from_diagonal(&model.one_body.vdiag);
    }
    let mut full = Mat::zeros(2 * ms, 2 * ms);
    full.view_mut((0, 0), (ms, ms)).copy_from(&h);
    full.view_mut((ms, ms), (ms, ms)).copy_from(&h);
    full
}

pub fn dense_apply_h(model: &Model, state: &DenseState, parts: HParts) -> DenseState {
    let mut out = if parts.kinetic || parts.potential {
        apply_one_body(state, &one_body_matrix(model, parts))
    } else {
        state.scaled(0.0)
    };
    if parts.interaction {
        out.axpy(1.0, &apply_pair(&model.space, &model.poisson, state));
    }
    out
}

/// `γ ↦ ⟨bra with δ_γ at slot, y⟩`, where `y` is already antisymmetrized.
pub fn dense_delta_contract(sp: &ParticleSpace, bra_rest: &Mat, slot: usize, y: &DenseState) -> Vector {
    let n = y.n;
    let mut out = Vector::zeros(y.mtot);
    let mut idx = vec![0usize; n];
    for flat in 0..y.data.len() {
        y.decode(flat, &mut idx);
        let mut f = y.data[flat];
        let mut r = 0;
        for i in 0..n {
            if i != slot {
                f *= sp.full_weights[idx[i]] * bra_rest[(idx[i], r)];
                r += 1;
            }
        }
        out[idx[slot]] += f;
    }
    out
}

/// `γ ↦ ⟨δ_γ ⊗ tail, H_parts ket⟩_A` with the delta at `slot`.
pub fn dense_delta_ip(model: &Model, bra_rest: &Mat, slot: usize, ket: &Mat, parts: Option<HParts>) -> Result<Vector> {
    let mut y = product_state(ket)?;
    if let Some(p) = parts {
        y = dense_apply_h(model, &y, p);
    }
    let y = antisymmetrize(&y);
    Ok(dense_delta_contract(&model.space, bra_rest, slot, &y))
}

/// Ground state of H in the antisymmetric sector.
pub fn exact_ground(model: &Model, n: usize) -> Result<(f64, DenseState)> {
    let (vals, vecs, basis) = antisymmetric_hamiltonian(model, n)?;
    let mut k = 0;
    for i in 1..vals.len() {
        if vals[i] < vals[k] {
            k = i;
        }
    }
    let mtot = model.mtot();
    let mut state = DenseState::zeros(mtot, n)?;
    let perms = permutations(n);
    let nfact = perms.len() as f64;
    let mut pidx = vec![0usize; n];
    for (a, tuple) in basis.iter().enumerate() {
        let c = vecs[(a, k)] / sqrt(nfact * quad_weight(&model.space, tuple));
        for (p, sign) in &perms {
            for i in 0..n {
                pidx[i] = tuple[p[i]];
            }
            let flat = state.encode(&pidx);
            state.data[flat] = sign * c;
        }
    }
    Ok((vals[k], state))
}

/// All eigenvalues of H in the antisymmetric sector, ascending.
pub fn antisymmetric_spectrum(model: &Model, n: usize) -> Result<Vec<f64>> {
    let (vals, _, _) = antisymmetric_hamiltonian(model, n)?;
    let mut v: Vec<f64> = vals.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

fn increasing_tuples(mtot: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(start: usize, mtot: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for g in start..mtot {
            cur.push(g);
            rec(g + 1, mtot, n, cur, out);
            cur.pop();
        }
    }
    rec(0, mtot, n, &mut cur, &mut out);
    out
}

type Spectrum = (Vector, Mat, Vec<Vec<usize>>);

fn antisymmetric_hamiltonian(model: &Model, n: usize) -> Result<Spectrum> {
    let mtot = model.mtot();
    check_size(mtot, n)?;
    let sp = &model.space;
    let w0 = sp.full_weights[0];
    if sp.full_weights.iter().any(|&w| (w - w0).abs() > 1e-14 * w0) {
        return Err(Error::Domain("the occupation-basis eigensolve assumes uniform weights".into()));
    }
    let basis = increasing_tuples(mtot, n);
    let index: BTreeMap<Vec<usize>, usize> = basis.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let h1 = one_body_matrix(model, HParts::TV);
    let perms = permutations(n);
    let dim = basis.len();
    let mut h = Mat::zeros(dim, dim);
    let mut t = vec![0usize; n];
    // H_AB is the value of H e_B at the ordered position A, where
    // e_B = Σ_π sign(π) δ_π(B); only increasing images land on a basis tuple.
    for (b, tuple) in basis.iter().enumerate() {
        for (p, sign) in &perms {
            let src: Vec<usize> = (0..n).map(|i| tuple[p[i]]).collect();
            for i in 0..n {
                for gp in 0..mtot {
                    let hv = h1[(gp, src[i])];
                    if hv == 0.0 {
                        continue;
                    }
                    t.copy_from_slice(&src);
                    t[i] = gp;
                    if t.windows(2).all(|w| w[0] < w[1]) {
                        h[(index[&t], b)] += sign * hv;
                    }
                }
            }
            if src.windows(2).all(|w| w[0] < w[1]) {
                let mut v = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        v += model.poisson.pmat[(sp.split(src[i]).0, sp.split(src[j]).0)];
                    }
                }
                h[(b, b)] += sign * v;
            }
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    let asym = (&h - h.transpose()).amax();
    if asym > 1e-9 * h.amax().max(1.0) {
        return Err(Error::Consistency(format!("antisymmetric-sector Hamiltonian is not symmetric ({:e})", asym)));
    }
    let eig = sym.symmetric_eigen();
    Ok((eig.eigenvalues, eig.eigenvectors, basis))
}

/// Exact `(T_N − μ)⁻¹` on a dense state.
pub fn dense_resolvent(model: &Model, state: &DenseState, mu: f64) -> DenseState {
    let ms = model.space.spatial_len();
    let eig = model.one_body.tmat.clone().symmetric_eigen();
    let mut q = Mat::zeros(2 * ms, 2 * ms);
    q.view_mut((0, 0), (ms, ms)).copy_from(&eig.eigenvectors);
    q.view_mut((ms, ms), (ms, ms)).copy_from(&eig.eigenvectors);
    let lam = Vector::from_fn(2 * ms, |g, _| eig.eigenvalues[g % ms]);
    let qt = q.transpose();
    let mut s = state.clone();
    for axis in 0..s.n {
        s = apply_axis(&s, axis, &qt);
    }
    let mut idx = vec![0usize; s.n];
    for flat in 0..s.data.len() {
        s.decode(flat, &mut idx);
        let tot: f64 = idx.iter().map(|&g| lam[g]).sum();
        s.data[flat] /= tot - mu;
    }
    for axis in 0..s.n {
        s = apply_axis(&s, axis, &q);
    }
    s
}

/// `−G_μ (V + W) ψ` as a dense tensor.
pub fn dense_target(model: &Model, psi: &SeparatedWavefunction, mu: f64) -> Result<DenseState> {
    let s = separated_state(psi)?;
    let vw = dense_apply_h(model, &s, HParts::VW);
    Ok(dense_resolvent(model, &vw, mu).scaled(-1.0))
}

/// `‖ψ̃ − (−G_μ (V+W) ψ)‖_A`.
pub fn fit_residual(model: &Model, psi_tilde: &SeparatedWavefunction, psi: &SeparatedWavefunction, mu: f64) -> Result<f64> {
    let target = dense_target(model, psi, mu)?;
    let mut r = separated_state(psi_tilde)?;
    r.axpy(-1.0, &target);
    let sq = dense_ip_a(&model.space, &r, &r);
    Ok(sqrt(sq.max(0.0)))
}

/// `⟨ψ, H ψ⟩_A / ⟨ψ, ψ⟩_A`.
pub fn dense_rayleigh(model: &Model, psi: &SeparatedWavefunction) -> Result<f64> {
    let s = separated_state(psi)?;
    let a = antisymmetrize(&s);
    let num = dense_ip(&model.space, &dense_apply_h(model, &s, HParts::ALL), &a);
    let den = dense_ip(&model.space, &s, &a);
    if den <= 0.0 {
        return Err(Error::DegenerateWavefunction);
    }
    Ok(num / den)
}

//! The ALS normal operator for one direction: a matrix of integral kernels
//! `s̃_l s̃_l' K_{ll'}`, each a delta term plus a rank-(N−1) correction.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{compute_pseudo_scaled, Mat, PseudoBundle, Vector};
use crate::space::{weighted_dot, ParticleSpace};
use crate::wave::{max_norm, overlap_rect, weighted, SeparatedWavefunction};

/// One `(l, l')` kernel with the `s̃` scale left out.
#[derive(Debug, Clone)]
pub enum KernelBlock {
    /// N = 1: the delta term alone.
    Identity,
    /// `|D| (x − Y D⁻¹ ∫ W x)`.
    Regular { det: f64, dinv: Mat, w: Mat, y: Mat },
    /// `−(1/|D‡|) (Y v) ⟨W u, x⟩`.
    Deficient { coef: f64, yv: Vector, wu: Vector },
    /// Deficiency above one.
    Zero,
}

impl KernelBlock {
    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            KernelBlock::Identity => x.clone(),
            KernelBlock::Regular { det, dinv, w, y } => {
                let proj = w.tr_mul(x);
                (x - y * (dinv * proj)) * *det
            }
            KernelBlock::Deficient { coef, yv, wu } => yv * (-coef * wu.dot(x)),
            KernelBlock::Zero => Vector::zeros(x.len()),
        }
    }

    pub fn deficiency(&self) -> usize {
        match self {
            KernelBlock::Identity | KernelBlock::Regular { .. } => 0,
            KernelBlock::Deficient { .. } => 1,
            KernelBlock::Zero => 2,
        }
    }
}

/// `D` and its pseudo-inverse data for one `(l, l')` pair.
#[derive(Debug, Clone)]
pub struct DEntry {
    pub d: Mat,
    pub bundle: PseudoBundle,
}

#[derive(Debug, Clone)]
pub struct NormalKernel {
    pub k: usize,
    pub scales: Vec<f64>,
    /// Row-major `r × r`.
    pub blocks: Vec<KernelBlock>,
    pub d_entries: Vec<Option<DEntry>>,
}

impl NormalKernel {
    pub fn rank(&self) -> usize {
        self.scales.len()
    }

    pub fn block(&self, l: usize, lp: usize) -> &KernelBlock {
        &self.blocks[l * self.rank() + lp]
    }
}

/// Orbitals with column `k` removed.
pub fn rest(orbitals: &Mat, k: usize) -> Mat {
    orbitals.clone().remove_column(k)
}

pub fn d_matrix(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, l: usize, lp: usize) -> Result<Mat> {
    overlap_rect(sp, &rest(&psi.terms[l].orbitals, k), &rest(&psi.terms[lp].orbitals, k))
}

pub fn fresh_d_entry(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, l: usize, lp: usize, eta_rel: f64) -> Result<DEntry> {
    let wl = rest(&psi.terms[l].orbitals, k);
    let yl = rest(&psi.terms[lp].orbitals, k);
    let d = overlap_rect(sp, &wl, &yl)?;
    let scale = max_norm(sp, &wl) * max_norm(sp, &yl);
    let bundle = compute_pseudo_scaled(&d, eta_rel, scale)?;
    Ok(DEntry { d, bundle })
}

pub fn kernel_block(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, l: usize, lp: usize, entry: &DEntry) -> Result<KernelBlock> {
    let wl = weighted(sp, &rest(&psi.terms[l].orbitals, k));
    let y = rest(&psi.terms[lp].orbitals, k);
    let b = &entry.bundle;
    Ok(match b.rank_def {
        0 => KernelBlock::Regular { det: b.det_factor(), dinv: b.pinv.clone(), w: wl, y },
        1 => {
            let pair = crate::linalg::nullspace_pairs(b)?.remove(0);
            KernelBlock::Deficient { coef: b.det_factor(), yv: &y * &pair.v, wu: &wl * &pair.u }
        }
        _ => KernelBlock::Zero,
    })
}

fn check_direction(psi: &SeparatedWavefunction, k: usize) -> Result<()> {
    psi.validate()?;
    if k >= psi.n() {
        return Err(Error::Dimension(format!("direction {} for N = {}", k, psi.n())));
    }
    Ok(())
}

pub fn build_normal_matrix(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, eta_rel: f64) -> Result<NormalKernel> {
    check_direction(psi, k)?;
    let r = psi.rank();
    let mut entries = Vec::with_capacity(r * r);
    if psi.n() > 1 {
        for l in 0..r {
            for lp in 0..r {
                entries.push(Some(fresh_d_entry(sp, psi, k, l, lp, eta_rel)?));
            }
        }
    } else {
        entries.resize(r * r, None);
    }
    assemble(sp, psi, k, entries)
}

/// Kernel set from already computed `D` data (fresh or updated).
pub fn assemble(sp: &ParticleSpace, psi: &SeparatedWavefunction, k: usize, d_entries: Vec<Option<DEntry>>) -> Result<NormalKernel> {
    let r = psi.rank();
    let mut blocks = Vec::with_capacity(r * r);
    for l in 0..r {
        for lp in 0..r {
            blocks.push(match &d_entries[l * r + lp] {
                None => KernelBlock::Identity,
                Some(e) => kernel_block(sp, psi, k, l, lp, e)?,
            });
        }
    }
    let scales = psi.terms.iter().map(|t| t.coef).collect();
    Ok(NormalKernel { k, scales, blocks, d_entries })
}

/// `(A x)(l) = Σ_l' s̃_l s̃_l' K_{ll'} x(l')`, summed in ascending `l'`.
pub fn apply_normal(kernel: &NormalKernel, x: &Mat) -> Mat {
    let r = kernel.rank();
    let mut out = Mat::zeros(x.nrows(), r);
    for l in 0..r {
        let mut acc = Vector::zeros(x.nrows());
        for lp in 0..r {
            let s = kernel.scales[l] * kernel.scales[lp];
            if s == 0.0 {
                continue;
            }
            acc += kernel.block(l, lp).apply(&x.column(lp).into_owned()) * s;
        }
        out.set_column(l, &acc);
    }
    out
}

/// Weighted inner product summed over the `r` orbitals.
pub fn block_dot(sp: &ParticleSpace, a: &Mat, b: &Mat) -> f64 {
    let mut acc = 0.0;
    for l in 0..a.ncols() {
        acc += weighted_dot(sp, &a.column(l).into_owned(), &b.column(l).into_owned());
    }
    acc
}

/// The operator as an explicit `(r·M) × (r·M)` matrix on stacked columns.
pub fn dense_normal_matrix(kernel: &NormalKernel, mtot: usize) -> Mat {
    let r = kernel.rank();
    let n = r * mtot;
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        let mut x = Mat::zeros(mtot, r);
        x[(j % mtot, j / mtot)] = 1.0;
        let ax = apply_normal(kernel, &x);
        out.set_column(j, &Vector::from_column_slice(ax.as_slice()));
    }
    out
}

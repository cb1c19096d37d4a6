//! Antisymmetric inner products of Slater products, with and without one-body
//! and pair operators, and their delta-function variants that leave one
//! coordinate free.
//!
//! All values drop the global N! factor. Rank-deficient overlaps are handled
//! through the modified pseudo-inverse; beyond the deficiency a formula can
//! reach, the result is a literal zero.


use crate::error::{Error, Result};
use crate::linalg::{nullspace_pairs, Mat, NullPair, Vector};
use crate::space::{weighted_dot, wp_broadcast, ParticleSpace, PoissonOp, SingleParticleOp};
use crate::wave::{build_e_at, max_coincidence, overlap_matrix, with_placeholder, EData};

/// Rank-deficiency class of an overlap matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DeficiencyClass {
    Q0,
    Q1(NullPair),
    Q2(NullPair, NullPair),
    QMore(usize),
}

impl DeficiencyClass {
    pub fn of(bundle: &crate::linalg::PseudoBundle) -> Result<Self> {
        Ok(match bundle.rank_def {
            0 => DeficiencyClass::Q0,
            1 | 2 => {
                let mut p = nullspace_pairs(bundle)?;
                if p.len() == 1 {
                    DeficiencyClass::Q1(p.remove(0))
                } else {
                    let b = p.remove(1);
                    DeficiencyClass::Q2(p.remove(0), b)
                }
            }
            q => DeficiencyClass::QMore(q),
        })
    }
}

/// Evaluation context: the space, the pair kernel and the rank cutoff.
#[derive(Debug, Clone, Copy)]
pub struct Asym<'a> {
    pub space: &'a ParticleSpace,
    pub poisson: &'a PoissonOp,
    pub eta_rel: f64,
}

/// Delta-product data shared by the plain, one-body and pair variants.
#[derive(Debug, Clone)]
pub struct DeltaPrep {
    pub e: EData,
    /// Bra orbitals with a zero column at the delta slot.
    pub bra: Mat,
    /// `E‡` applied to `bra`.
    pub theta: Mat,
    /// `Φ d`.
    pub a: Vector,
}

/// Pair-operator intermediates of the nonsingular delta product.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaWParts {
    /// `W_P[ρ̃]` broadcast over spin, `ρ̃ = Σ_i φ_i θ̃_i`.
    pub rho_w: Vector,
    /// Column j is `Σ_i φ_i W_P[θ̃_i φ_j]`.
    pub combined: Mat,
}

fn col(m: &Mat, j: usize) -> Vector {
    m.column(j).into_owned()
}

fn pointwise_sum(a: &Mat, b: &Mat) -> Vector {
    a.component_mul(b).column_sum()
}

impl<'a> Asym<'a> {
    pub fn new(space: &'a ParticleSpace, poisson: &'a PoissonOp, eta_rel: f64) -> Self {
        Asym { space, poisson, eta_rel }
    }

    fn integ(&self, f: &Vector) -> f64 {
        self.space.full_weights.dot(f)
    }

    fn ip(&self, f: &Vector, g: &Vector) -> f64 {
        weighted_dot(self.space, f, g)
    }

    fn wpb(&self, f: &Vector) -> Vector {
        wp_broadcast(self.space, self.poisson, f)
    }

    /// `∫ x · W_P[y] · z` for pointwise products.
    fn w3(&self, x: &Vector, y: &Vector, z: &Vector) -> f64 {
        let wy = self.wpb(y);
        let mut acc = 0.0;
        let w = &self.space.full_weights;
        for g in 0..w.len() {
            acc += w[g] * x[g] * wy[g] * z[g];
        }
        acc
    }

    pub fn lowdin(&self, bra: &Mat, ket: &Mat) -> Result<f64> {
        Ok(overlap_matrix(self.space, bra, ket)?.determinant())
    }

    pub fn tv(&self, bra: &Mat, ket: &Mat, op: &dyn SingleParticleOp) -> Result<f64> {
        let c = max_coincidence(self.space, bra, ket, self.eta_rel)?;
        Ok(match DeficiencyClass::of(&c.bundle)? {
            DeficiencyClass::Q0 => {
                let mut acc = 0.0;
                for i in 0..ket.ncols() {
                    acc += self.ip(&op.apply(&col(ket, i)), &col(&c.theta, i));
                }
                c.det_factor * acc
            }
            DeficiencyClass::Q1(p) => {
                let b1 = ket * &p.v;
                let t1 = bra * &p.u;
                c.det_factor * self.ip(&op.apply(&b1), &t1)
            }
            _ => 0.0,
        })
    }

    pub fn w(&self, bra: &Mat, ket: &Mat) -> Result<f64> {
        let n = ket.ncols();
        if n < 2 {
            return Err(Error::Domain("the pair operator needs at least two particles".into()));
        }
        let c = max_coincidence(self.space, bra, ket, self.eta_rel)?;
        let theta = &c.theta;
        Ok(match DeficiencyClass::of(&c.bundle)? {
            DeficiencyClass::Q0 => {
                let rho = pointwise_sum(ket, theta);
                let direct = self.w3(&rho, &rho, &Vector::from_element(rho.len(), 1.0));
                let mut exch = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let tp = col(theta, i).component_mul(&col(ket, j));
                        exch += self.w3(&col(ket, i), &tp, &col(theta, j));
                    }
                }
                0.5 * c.det_factor * (direct - exch)
            }
            DeficiencyClass::Q1(p) => {
                let b1 = ket * &p.v;
                let t1 = bra * &p.u;
                let alpha = b1.component_mul(&t1);
                let rho = pointwise_sum(ket, theta);
                let ones = Vector::from_element(rho.len(), 1.0);
                let mut acc = self.w3(&alpha, &rho, &ones);
                for j in 0..n {
                    acc -= self.w3(&b1, &t1.component_mul(&col(ket, j)), &col(theta, j));
                }
                c.det_factor * acc
            }
            DeficiencyClass::Q2(p1, p2) => {
                let b1 = ket * &p1.v;
                let t1 = bra * &p1.u;
                let b2 = ket * &p2.v;
                let t2 = bra * &p2.u;
                let ones = Vector::from_element(b1.len(), 1.0);
                let direct = self.w3(&b1.component_mul(&t1), &b2.component_mul(&t2), &ones);
                let exch = self.w3(&b1, &b2.component_mul(&t1), &t2);
                c.det_factor * (direct - exch)
            }
            DeficiencyClass::QMore(_) => 0.0,
        })
    }

    /// Shared setup for the delta products with the delta at `slot`.
    pub fn prepare_delta(&self, bra_rest: &Mat, slot: usize, ket: &Mat) -> Result<DeltaPrep> {
        let e = build_e_at(self.space, bra_rest, ket, slot, self.eta_rel)?;
        let bra = with_placeholder(bra_rest, slot);
        let theta = &bra * e.bundle.modinv.transpose();
        let a = ket * &e.d;
        Ok(DeltaPrep { e, bra, theta, a })
    }

    pub fn delta(&self, bra_rest: &Mat, slot: usize, ket: &Mat) -> Result<Vector> {
        let prep = self.prepare_delta(bra_rest, slot, ket)?;
        Ok(self.delta_from(&prep))
    }

    pub fn delta_from(&self, prep: &DeltaPrep) -> Vector {
        if prep.e.rank_def() > 0 {
            return Vector::zeros(prep.a.len());
        }
        &prep.a * prep.e.bundle.det_factor()
    }

    pub fn delta_tv(&self, bra_rest: &Mat, slot: usize, ket: &Mat, op: &dyn SingleParticleOp) -> Result<Vector> {
        let prep = self.prepare_delta(bra_rest, slot, ket)?;
        self.delta_tv_from(&prep, ket, op)
    }

    pub fn delta_tv_from(&self, prep: &DeltaPrep, ket: &Mat, op: &dyn SingleParticleOp) -> Result<Vector> {
        let n = ket.ncols();
        let df = prep.e.bundle.det_factor();
        Ok(match DeficiencyClass::of(&prep.e.bundle)? {
            DeficiencyClass::Q0 => {
                let opa = op.apply(&prep.a);
                let mut c1 = 0.0;
                let mut cvec = Vector::zeros(n);
                for i in 0..n {
                    let th = col(&prep.theta, i);
                    c1 += self.ip(&op.apply(&col(ket, i)), &th);
                    cvec[i] = self.ip(&opa, &th);
                }
                let coeff = &prep.e.d * c1 - cvec;
                (ket * coeff + opa) * df
            }
            DeficiencyClass::Q1(p) => {
                let b1 = ket * &p.v;
                let t1 = &prep.bra * &p.u;
                let x = self.ip(&op.apply(&b1), &t1);
                let y = self.ip(&op.apply(&prep.a), &t1);
                ket * (&prep.e.d * x - &p.v * y) * df
            }
            _ => Vector::zeros(ket.nrows()),
        })
    }

    pub fn delta_w(&self, bra_rest: &Mat, slot: usize, ket: &Mat) -> Result<Vector> {
        let prep = self.prepare_delta(bra_rest, slot, ket)?;
        self.delta_w_from(&prep, ket)
    }

    /// `W_P[ρ̃]` and the combined `Σ_i φ_i W_P[θ̃_i φ_j]` for a nonsingular `E`.
    pub fn delta_w_parts(&self, prep: &DeltaPrep, ket: &Mat) -> DeltaWParts {
        let n = ket.ncols();
        let rho = pointwise_sum(ket, &prep.theta);
        let rho_w = self.wpb(&rho);
        let mut combined = Mat::zeros(ket.nrows(), n);
        for j in 0..n {
            let phij = col(ket, j);
            let mut acc = Vector::zeros(ket.nrows());
            for i in 0..n {
                let wv = self.wpb(&col(&prep.theta, i).component_mul(&phij));
                acc += col(ket, i).component_mul(&wv);
            }
            combined.set_column(j, &acc);
        }
        DeltaWParts { rho_w, combined }
    }

    pub fn delta_w_from(&self, prep: &DeltaPrep, ket: &Mat) -> Result<Vector> {
        if prep.e.rank_def() == 0 {
            let parts = self.delta_w_parts(prep, ket);
            return self.delta_w_with_parts(prep, ket, &parts);
        }
        self.delta_w_deficient(prep, ket)
    }

    /// Nonsingular-`E` pair product from precomputed intermediates.
    pub fn delta_w_with_parts(&self, prep: &DeltaPrep, ket: &Mat, parts: &DeltaWParts) -> Result<Vector> {
        let n = ket.ncols();
        if n < 2 {
            return Err(Error::Domain("the pair operator needs at least two particles".into()));
        }
        if prep.e.rank_def() != 0 {
            return self.delta_w_deficient(prep, ket);
        }
        let df = prep.e.bundle.det_factor();
        let a = &prep.a;
        let theta = &prep.theta;
        let rho = pointwise_sum(ket, theta);
        let ra = &parts.combined * &prep.e.d;
        let s0 = self.integ(&rho.component_mul(&parts.rho_w)) - self.integ(&pointwise_sum(&parts.combined, theta));
        let mut c = Vector::zeros(n);
        let wa = parts.rho_w.component_mul(a);
        for k in 0..n {
            let th = col(theta, k);
            c[k] = self.integ(&th.component_mul(&wa)) - self.integ(&th.component_mul(&ra));
        }
        let local = (wa - &ra) * 2.0;
        let coeff = &prep.e.d * s0 - c * 2.0;
        Ok((local + ket * coeff) * (0.5 * df))
    }

    fn delta_w_deficient(&self, prep: &DeltaPrep, ket: &Mat) -> Result<Vector> {
        let n = ket.ncols();
        if n < 2 {
            return Err(Error::Domain("the pair operator needs at least two particles".into()));
        }
        let df = prep.e.bundle.det_factor();
        let a = &prep.a;
        let d = &prep.e.d;
        let theta = &prep.theta;
        Ok(match DeficiencyClass::of(&prep.e.bundle)? {
            DeficiencyClass::Q0 => unreachable!("handled by the nonsingular path"),
            DeficiencyClass::Q1(p) => {
                let b1 = ket * &p.v;
                let t1 = &prep.bra * &p.u;
                let alpha = b1.component_mul(&t1);
                let w_alpha = self.wpb(&alpha);
                let w_t1a = self.wpb(&t1.component_mul(a));
                let rho = pointwise_sum(ket, theta);
                let w_rho = self.wpb(&rho);
                let mut s_theta = Vector::zeros(ket.nrows());
                for j in 0..n {
                    let wj = self.wpb(&t1.component_mul(&col(ket, j)));
                    s_theta += wj.component_mul(&col(theta, j));
                }
                let inner = t1.component_mul(&w_rho) - &s_theta;
                let x1 = self.integ(&b1.component_mul(&inner));
                let z1 = self.integ(&a.component_mul(&inner));
                let mid = b1.component_mul(&w_t1a) - w_alpha.component_mul(a);
                let y = Vector::from_fn(n, |k, _| self.integ(&col(theta, k).component_mul(&mid)));
                let local = a.component_mul(&w_alpha) - b1.component_mul(&w_t1a);
                let coeff = d * x1 + y - &p.v * z1;
                (local + ket * coeff) * df
            }
            DeficiencyClass::Q2(p1, p2) => {
                let b1 = ket * &p1.v;
                let t1 = &prep.bra * &p1.u;
                let b2 = ket * &p2.v;
                let t2 = &prep.bra * &p2.u;
                let ones = Vector::from_element(a.len(), 1.0);
                let x0 = self.w3(&b1.component_mul(&t1), &b2.component_mul(&t2), &ones) - self.w3(&b2, &t2.component_mul(&b1), &t1);
                let x1 = self.w3(&b2.component_mul(&t2), &a.component_mul(&t1), &ones) - self.w3(&b2, &t2.component_mul(a), &t1);
                let x2 = self.w3(&b1.component_mul(&t1), &a.component_mul(&t2), &ones) - self.w3(&b1, &t1.component_mul(a), &t2);
                let coeff = d * x0 - &p1.v * x1 - &p2.v * x2;
                ket * coeff * df
            }
            DeficiencyClass::QMore(_) => Vector::zeros(ket.nrows()),
        })
    }
}

/// Rank deficiency of a bundle's class, for callers that only need the tag.
pub fn deficiency(class: &DeficiencyClass) -> usize {
    match class {
        DeficiencyClass::Q0 => 0,
        DeficiencyClass::Q1(_) => 1,
        DeficiencyClass::Q2(..) => 2,
        DeficiencyClass::QMore(q) => *q,
    }
}

/// Sum over terms of two separated wavefunctions of a bilinear product.
pub fn sum_terms<F>(bra: &crate::wave::SeparatedWavefunction, ket: &crate::wave::SeparatedWavefunction, mut f: F) -> Result<f64>
where
    F: FnMut(&Mat, &Mat) -> Result<f64>,
{
    let mut acc = 0.0;
    for tl in &bra.terms {
        for tm in &ket.terms {
            acc += tl.coef * tm.coef * f(&tl.orbitals, &tm.orbitals)?;
        }
    }
    Ok(acc)
}

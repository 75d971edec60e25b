//! The dissatisfaction field `theta(x) = 1/2 sum (e_S(x)^+)^2` and the cohesion
//! field `phi(x) = sum_{e_S(x) > 0} e_S(x) eta^S`, which is `-grad theta`.
//!
//! On each region of X (the set of points sharing the same aggrieved
//! collection) the cohesion field is affine, `phi(x) = -A x + b`; see
//! [`RegionAffine`].

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::game::{
    eta_vec, grand_mask, plane_basis, proper_masks, recenter, Coalition, CoalitionCollection, Game, Preimputation,
};

/// Everything the flow needs from one evaluation of the fields at a point.
#[derive(Debug, Clone)]
pub struct FieldPoint {
    /// Excess of every mask `1..2^n` (index `mask - 1`).
    pub excesses: Vec<f64>,
    /// Masks with strictly positive excess, ascending.
    pub aggrieved: Vec<u32>,
    pub theta: f64,
    pub phi: Vec<f64>,
}

impl FieldPoint {
    pub fn phi_norm(&self) -> f64 {
        crate::game::norm(&self.phi)
    }

    pub fn collection(&self) -> CoalitionCollection {
        CoalitionCollection::from_sorted_unchecked(self.aggrieved.iter().map(|&m| mask_coalition(m)).collect())
    }
}

#[inline]
pub(crate) fn mask_coalition(mask: u32) -> Coalition {
    // masks handed around internally are always nonempty and in range
    Coalition::new(mask, 32).expect("nonempty mask")
}

/// Evaluates excesses, the aggrieved set, `theta` and `phi` in one sweep.
pub fn evaluate(g: &Game, x: &[f64]) -> FieldPoint {
    let n = g.n();
    let excesses = g.excesses(x);
    let full = grand_mask(n);
    let mut aggrieved = Vec::new();
    let mut theta = 0.0;
    let mut phi = vec![0.0; n];
    for mask in proper_masks(n) {
        let e = excesses[mask as usize - 1];
        if e > 0.0 {
            aggrieved.push(mask);
            theta += 0.5 * e * e;
            add_eta(&mut phi, mask, e, n);
        }
    }
    debug_assert!(aggrieved.iter().all(|&m| m != full));
    FieldPoint { excesses, aggrieved, theta, phi }
}

/// `out += w * eta^S`.
#[inline]
pub(crate) fn add_eta(out: &mut [f64], mask: u32, w: f64, n: usize) {
    let shift = w * mask.count_ones() as f64 / n as f64;
    for (i, o) in out.iter_mut().enumerate() {
        *o += if mask >> i & 1 == 1 { w - shift } else { -shift };
    }
}

/// Coalitions with strictly positive excess at `x`.
pub fn aggrieved(g: &Game, x: &Preimputation) -> Result<CoalitionCollection> {
    check(g, x)?;
    let excesses = g.excesses(x.as_slice());
    let members = proper_masks(g.n())
        .filter(|&m| excesses[m as usize - 1] > 0.0)
        .map(mask_coalition)
        .collect();
    Ok(CoalitionCollection::from_sorted_unchecked(members))
}

pub fn dissatisfaction(g: &Game, x: &Preimputation) -> Result<f64> {
    check(g, x)?;
    Ok(theta_of(g, x.as_slice()))
}

pub(crate) fn theta_of(g: &Game, x: &[f64]) -> f64 {
    let excesses = g.excesses(x);
    proper_masks(g.n())
        .map(|m| excesses[m as usize - 1])
        .filter(|&e| e > 0.0)
        .map(|e| 0.5 * e * e)
        .sum()
}

pub fn cohesion(g: &Game, x: &Preimputation) -> Result<Preimputation> {
    check(g, x)?;
    Ok(Preimputation::from_recentered(evaluate(g, x.as_slice()).phi))
}

/// `sum a_S e_S(x) eta^S` over aggrieved `S`; `weights` is indexed like the
/// game table (`mask - 1`, length `2^n - 1`).
pub fn weighted_cohesion(g: &Game, weights: &[f64], x: &Preimputation) -> Result<Preimputation> {
    check(g, x)?;
    if weights.len() != g.values().len() {
        return Err(Error::Dimension { expected: g.values().len(), got: weights.len() });
    }
    for mask in proper_masks(g.n()) {
        let w = weights[mask as usize - 1];
        if !(w > 0.0) {
            return Err(Error::NonPositiveWeight { mask, weight: w });
        }
    }
    let n = g.n();
    let excesses = g.excesses(x.as_slice());
    let mut phi = vec![0.0; n];
    for mask in proper_masks(n) {
        let e = excesses[mask as usize - 1];
        if e > 0.0 {
            add_eta(&mut phi, mask, weights[mask as usize - 1] * e, n);
        }
    }
    Ok(Preimputation::from_recentered(phi))
}

/// The affine form `phi(x) = -A x + b` of the cohesion field on one region.
#[derive(Debug)]
pub struct RegionAffine {
    collection: CoalitionCollection,
    a: DMatrix<f64>,
    b: DVector<f64>,
    lipschitz: OnceLock<f64>,
}

impl Clone for RegionAffine {
    fn clone(&self) -> Self {
        let lipschitz = OnceLock::new();
        if let Some(&l) = self.lipschitz.get() {
            let _ = lipschitz.set(l);
        }
        RegionAffine { collection: self.collection.clone(), a: self.a.clone(), b: self.b.clone(), lipschitz }
    }
}

impl RegionAffine {
    pub fn collection(&self) -> &CoalitionCollection {
        &self.collection
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    /// `-A x + b`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.b - &self.a * x).iter().copied().collect()
    }

    /// Spectral norm of `A`, computed once.
    pub fn lipschitz(&self) -> f64 {
        *self.lipschitz.get_or_init(|| spectral_norm(&self.a))
    }
}

/// `A = sum eta^S (eta^S)^T`, `b = sum v(S) eta^S` over the collection.
pub fn region_affine(g: &Game, coll: &CoalitionCollection) -> RegionAffine {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for s in coll.members() {
        let eta = DVector::from_vec(eta_vec(s.mask(), n));
        a.ger(1.0, &eta, &eta, 1.0);
        b.axpy(g.value(*s), &eta, 1.0);
    }
    RegionAffine { collection: coll.clone(), a, b, lipschitz: OnceLock::new() }
}

pub fn region_lipschitz(r: &RegionAffine) -> f64 {
    r.lipschitz()
}

/// Largest eigenvalue of a symmetric PSD matrix: direct eigensolve for small
/// sizes, power iteration otherwise.
pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n <= 8 {
        return SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().fold(0.0, f64::max);
    }
    power_iteration(a, 1e-10)
}

pub(crate) fn power_iteration(a: &DMatrix<f64>, rel_tol: f64) -> f64 {
    let n = a.nrows();
    // a fixed, generic start vector (not orthogonal to any coordinate pattern)
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.754_877_666).sin());
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        v /= nv;
        let w = a * &v;
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return next;
        }
        lambda = next;
        v = w;
    }
    lambda
}

/// `L_phi theta (x) = -||phi(x)||^2`.
pub fn lie_derivative(g: &Game, x: &Preimputation) -> Result<f64> {
    check(g, x)?;
    let phi = evaluate(g, x.as_slice()).phi;
    Ok(-crate::game::dot(&phi, &phi))
}

/// Central-difference gradient of `theta` along an orthonormal basis of X.
pub fn fd_gradient(g: &Game, x: &Preimputation, h: f64) -> Result<Vec<f64>> {
    check(g, x)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let n = g.n();
    let x = x.as_slice();
    let mut grad = vec![0.0; n];
    let mut probe = vec![0.0; n];
    for u in plane_basis(n) {
        for i in 0..n {
            probe[i] = x[i] + h * u[i];
        }
        let up = theta_of(g, &probe);
        for i in 0..n {
            probe[i] = x[i] - h * u[i];
        }
        let down = theta_of(g, &probe);
        let d = (up - down) / (2.0 * h);
        for i in 0..n {
            grad[i] += d * u[i];
        }
    }
    recenter(&mut grad);
    Ok(grad)
}

pub fn same_region(g: &Game, x: &Preimputation, y: &Preimputation) -> Result<bool> {
    Ok(aggrieved(g, x)? == aggrieved(g, y)?)
}

fn check(g: &Game, x: &Preimputation) -> Result<()> {
    g.require_normalized()?;
    g.check_dim(x.len())
}

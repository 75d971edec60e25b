//! LP oracles for balanced collections and the core: balancedness, core
//! membership and non-emptiness, epsilon-cores, the least core, and Euclidean
//! projection onto the core.

use crate::error::{Error, Result};
use crate::fields::{add_eta, mask_coalition};
use crate::game::{
    eta_norm_sq, grand_mask, proper_masks, recenter, Coalition, CoalitionCollection, Game, Preimputation,
    WeightedCollection,
};
use crate::lp::{LinearProgram, LpResult, LpStatus, Relation};

/// Smallest weight accepted as strictly positive in [`is_balanced`].
pub const STRICT_WEIGHT: f64 = 1e-9;
/// Tolerance for reporting core membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Least-core values at or below this count as a nonempty core.
pub const NONEMPTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CoreReport {
    pub member: bool,
    /// `(S, e_S(x))` for every `e_S(x) > tol`, largest excess first.
    pub violations: Vec<(Coalition, f64)>,
    pub tolerance: f64,
}

/// Outcome of [`is_balanced`]: the raw LP plus the validated weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Balancedness {
    pub lp: LpResult,
    pub weights: Option<WeightedCollection>,
}

impl Balancedness {
    pub fn is_balanced(&self) -> bool {
        self.weights.is_some()
    }
}

/// Outcome of [`contains_balanced`].
#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    pub lp: LpResult,
    /// Support of the feasible weight vector: a balanced subcollection.
    pub subcollection: Option<WeightedCollection>,
}

impl Containment {
    pub fn contains_balanced(&self) -> bool {
        self.lp.is_feasible()
    }
}

fn coverage_rows(lp: &mut LinearProgram, coll: &CoalitionCollection, n: usize, extra: usize) {
    for i in 0..n {
        let mut row: Vec<f64> = coll.members().iter().map(|c| if c.contains(i) { 1.0 } else { 0.0 }).collect();
        row.extend(std::iter::repeat_n(0.0, extra));
        lp.constraint(row, Relation::Eq, 1.0);
    }
}

/// Is there `lambda_S > 0` with `sum lambda_S 1^S = 1^N`? Solved by maximizing
/// the smallest weight.
pub fn is_balanced(coll: &CoalitionCollection, n: usize) -> Balancedness {
    let k = coll.len();
    if k == 0 {
        let lp = LpResult { status: LpStatus::Infeasible, primal: None, objective: None, certificate: None };
        return Balancedness { lp, weights: None };
    }
    // variables: lambda_1..lambda_k, t
    let mut lp = LinearProgram::new(k + 1);
    let mut gain = vec![0.0; k + 1];
    gain[k] = 1.0;
    lp.maximize(gain);
    coverage_rows(&mut lp, coll, n, 1);
    for j in 0..k {
        let mut row = vec![0.0; k + 1];
        row[j] = 1.0;
        row[k] = -1.0;
        lp.constraint(row, Relation::Ge, 0.0);
    }
    let result = lp.solve();
    let weights = match (&result.status, &result.primal) {
        (LpStatus::Feasible, Some(p)) if p[k] > STRICT_WEIGHT => {
            WeightedCollection::new(coll.clone(), p[..k].to_vec(), n).ok()
        }
        _ => None,
    };
    Balancedness { lp: result, weights }
}

/// Feasibility of `{lambda >= 0, sum lambda_S 1^S = 1^N}`; infeasible means
/// the collection is unbalanced.
pub fn contains_balanced(coll: &CoalitionCollection, n: usize) -> Containment {
    let k = coll.len();
    let mut lp = LinearProgram::new(k);
    coverage_rows(&mut lp, coll, n, 0);
    let result = lp.solve();
    let subcollection = result.primal.as_ref().filter(|_| result.is_feasible()).and_then(|p| {
        let (members, weights): (Vec<Coalition>, Vec<f64>) =
            coll.members().iter().zip(p).filter(|(_, &w)| w > STRICT_WEIGHT).map(|(c, &w)| (*c, w)).unzip();
        WeightedCollection::new(CoalitionCollection::new(members).ok()?, weights, n).ok()
    });
    Containment { lp: result, subcollection }
}

/// `|| sum theta_S eta^S ||_inf <= 1e-9`.
pub fn eta_zero_check(coll: &CoalitionCollection, weights: &[f64], n: usize) -> Result<bool> {
    Ok(eta_residual(coll, weights, n)? <= 1e-9)
}

/// `|| sum theta_S eta^S ||_inf`.
pub fn eta_residual(coll: &CoalitionCollection, weights: &[f64], n: usize) -> Result<f64> {
    if weights.len() != coll.len() {
        return Err(Error::Dimension { expected: coll.len(), got: weights.len() });
    }
    let mut sum = vec![0.0; n];
    for (c, &w) in coll.members().iter().zip(weights) {
        if !(w > 0.0) {
            return Err(Error::NonPositiveWeight { mask: c.mask(), weight: w });
        }
        add_eta(&mut sum, c.mask(), w, n);
    }
    Ok(sum.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

pub fn core_membership(g: &Game, x: &Preimputation, tol: f64) -> Result<CoreReport> {
    g.require_normalized()?;
    g.check_dim(x.len())?;
    Ok(core_report(g, x.as_slice(), tol))
}

pub(crate) fn core_report(g: &Game, x: &[f64], tol: f64) -> CoreReport {
    let excesses = g.excesses(x);
    let mut violations: Vec<(Coalition, f64)> = proper_masks(g.n())
        .filter_map(|m| {
            let e = excesses[m as usize - 1];
            (e > tol).then(|| (mask_coalition(m), e))
        })
        .collect();
    violations.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    CoreReport { member: violations.is_empty(), violations, tolerance: tol }
}

/// Minimizes `eps` subject to `x(S) >= v(S) - eps` for all proper `S` and
/// `x(N) = 0`. Returns `(eps*, witness)`.
///
/// The LP is solved in its dual form (one column per coalition, `n` rows), and
/// the witness is read from the row duals. The reported value is the maximum
/// excess at the witness, so the witness satisfies the constraints at `eps*`
/// exactly.
pub fn least_core(g: &Game) -> Result<(f64, Preimputation)> {
    g.require_normalized()?;
    let n = g.n();
    let masks: Vec<u32> = proper_masks(n).collect();
    let k = masks.len();
    let mut lp = LinearProgram::new(k);
    lp.maximize(masks.iter().map(|&m| g.value_of_mask(m)).collect());
    lp.constraint(vec![1.0; k], Relation::Eq, 1.0);
    for i in 1..n {
        let row = masks.iter().map(|&m| ((m >> i & 1) as f64) - ((m & 1) as f64)).collect();
        lp.constraint(row, Relation::Eq, 0.0);
    }
    let result = lp.solve();
    let duals = match (result.status, result.certificate) {
        (LpStatus::Feasible, Some(y)) => y,
        (status, _) => return Err(Error::Lp(format!("least-core dual ended {status:?}"))),
    };
    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = -duals[i];
    }
    x[0] = -x[1..].iter().sum::<f64>();
    recenter(&mut x);
    let excesses = g.excesses(&x);
    let eps = masks.iter().map(|&m| excesses[m as usize - 1]).fold(f64::NEG_INFINITY, f64::max);
    Ok((eps, Preimputation::from_recentered(x)))
}

pub fn core_nonempty(g: &Game) -> Result<bool> {
    Ok(least_core(g)?.0 <= NONEMPTY_TOL)
}

/// `x(S) >= v(S) - eps` for all proper `S`.
pub fn epsilon_core_membership(g: &Game, x: &Preimputation, eps: f64) -> Result<bool> {
    g.require_normalized()?;
    g.check_dim(x.len())?;
    let excesses = g.excesses(x.as_slice());
    Ok(proper_masks(g.n()).all(|m| excesses[m as usize - 1] <= eps))
}

const DYKSTRA_STEP: f64 = 1e-10;
const DYKSTRA_FEASIBLE: f64 = 1e-10;
const DYKSTRA_MAX_PASSES: usize = 1_000_000;

/// Euclidean projection of `x` onto the core by Dykstra's cyclic projections
/// onto the half-spaces `{y in X : y(S) >= v(S)}`.
pub fn project_to_core(g: &Game, x: &Preimputation) -> Result<Preimputation> {
    g.require_normalized()?;
    g.check_dim(x.len())?;
    let (eps, _) = least_core(g)?;
    if eps > NONEMPTY_TOL {
        return Err(Error::EmptyCore(eps));
    }
    dykstra(g, x.as_slice())
}

pub(crate) fn dykstra(g: &Game, x0: &[f64]) -> Result<Preimputation> {
    let n = g.n();
    let masks: Vec<u32> = proper_masks(n).collect();
    let etas: Vec<Vec<f64>> = masks.iter().map(|&m| crate::game::eta_vec(m, n)).collect();
    let norms: Vec<f64> = masks.iter().map(|&m| eta_norm_sq(m, n)).collect();
    // Dykstra keeps one correction per half-space; for a half-space it is a
    // nonnegative multiple of its normal, so a scalar suffices.
    let mut corrections = vec![0.0; masks.len()];
    let mut y = x0.to_vec();
    let mut passes = 0;
    loop {
        let start = y.clone();
        for (k, &m) in masks.iter().enumerate() {
            let eta = &etas[k];
            // z = y + q_k eta, projected onto {<eta, .> >= v(S)} is z + lift eta,
            // and the new correction is z - P(z) = -lift eta.
            let q = corrections[k];
            let paid = crate::game::dot(&y, eta) + q * norms[k];
            let lift = (g.value_of_mask(m) - paid).max(0.0) / norms[k];
            let shift = q + lift;
            if shift != 0.0 {
                for (yi, ei) in y.iter_mut().zip(eta) {
                    *yi += shift * ei;
                }
            }
            corrections[k] = -lift;
            passes += 1;
        }
        let moved: f64 = y.iter().zip(&start).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if moved < DYKSTRA_STEP {
            let worst = masks.iter().zip(&etas).map(|(&m, eta)| g.value_of_mask(m) - crate::game::dot(&y, eta)).fold(0.0, f64::max);
            if worst <= DYKSTRA_FEASIBLE {
                break;
            }
        }
        if passes >= DYKSTRA_MAX_PASSES {
            return Err(Error::NonConvergence(passes));
        }
    }
    Ok(Preimputation::from_recentered(y))
}

pub fn distance_to_core(g: &Game, x: &Preimputation) -> Result<f64> {
    let p = project_to_core(g, x)?;
    Ok(x.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Distance to the core given a precomputed nonempty-core check.
pub(crate) fn distance_to_core_unchecked(g: &Game, x: &[f64]) -> Result<f64> {
    let p = dykstra(g, x)?;
    Ok(x.iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Every nonempty proper coalition as a collection member list, used by
/// exhaustive tests.
pub fn all_proper(n: usize) -> Vec<Coalition> {
    (1..grand_mask(n)).map(mask_coalition).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::dissatisfaction;
    use crate::game::{gen_random, gen_symmetric, project_to_x};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coll(masks: &[u32]) -> CoalitionCollection {
        CoalitionCollection::from_masks(masks, 3).unwrap()
    }

    fn pre(v: &[f64]) -> Preimputation {
        Preimputation::new(v.to_vec()).unwrap()
    }

    fn majority() -> Game {
        Game::from_fn(3, |s| if s.size() == 2 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn is_balanced_examples() {
        let b = is_balanced(&coll(&[1, 2, 4]), 3);
        let w = b.weights.unwrap();
        assert!(w.weights().iter().all(|&l| (l - 1.0).abs() < 1e-9));

        let b = is_balanced(&coll(&[3, 5, 6]), 3);
        assert!(b.weights.unwrap().weights().iter().all(|&l| (l - 0.5).abs() < 1e-9));

        assert!(!is_balanced(&coll(&[1, 3]), 3).is_balanced());
        assert!(!is_balanced(&CoalitionCollection::empty(), 3).is_balanced());
        // {a}, {b}, {a,b}, {c}: balanced, weights need not be unique but must be positive
        let b = is_balanced(&coll(&[1, 2, 3, 4]), 3);
        assert!(b.weights.unwrap().weights().iter().all(|&l| l > STRICT_WEIGHT));
        // {a}, {a,b}, {c}: contains a balanced partition but {a} is forced to 0
        assert!(!is_balanced(&coll(&[1, 3, 4]), 3).is_balanced());
    }

    #[test]
    fn contains_balanced_examples() {
        assert!(!contains_balanced(&coll(&[1, 3]), 3).contains_balanced());
        assert!(contains_balanced(&coll(&[1, 2, 4, 3, 6]), 3).contains_balanced());
        let c = contains_balanced(&coll(&[1, 6]), 3);
        let sub = c.subcollection.unwrap();
        assert_eq!(sub.collection().masks(), vec![1, 6]);
        assert!(sub.weights().iter().all(|&w| (w - 1.0).abs() < 1e-9));
        let c = contains_balanced(&coll(&[1, 3, 4]), 3);
        assert_eq!(c.subcollection.unwrap().collection().masks(), vec![3, 4]);
    }

    #[test]
    fn eta_zero_examples() {
        assert!(eta_zero_check(&coll(&[1, 2, 4]), &[1.0, 1.0, 1.0], 3).unwrap());
        assert!(eta_zero_check(&coll(&[3, 5, 6]), &[1.0, 1.0, 1.0], 3).unwrap());
        assert!(!eta_zero_check(&coll(&[1]), &[1.0], 3).unwrap());
        assert!(eta_zero_check(&coll(&[1]), &[0.0], 3).is_err());
    }

    #[test]
    fn core_membership_examples() {
        let g = gen_symmetric(3, -1.5).unwrap();
        assert!(core_membership(&g, &Preimputation::zero(3), 0.0).unwrap().member);

        let r = core_membership(&g, &pre(&[-4.0, -3.0, 7.0]), 0.0).unwrap();
        assert!(!r.member);
        let v: Vec<(u32, f64)> = r.violations.iter().map(|(c, e)| (c.mask(), *e)).collect();
        assert_eq!(v, vec![(0b011, 4.0), (0b001, 1.0)]);

        // e_c = -3 + 4 = 1 and e_bc = -3 - (0 - 4) = 1: both faces are violated
        let r = core_membership(&g, &pre(&[4.0, 0.0, -4.0]), 0.0).unwrap();
        let v: Vec<(u32, f64)> = r.violations.iter().map(|(c, e)| (c.mask(), *e)).collect();
        assert_eq!(v, vec![(0b100, 1.0), (0b110, 1.0)]);
    }

    #[test]
    fn least_core_examples() {
        let (eps, w) = least_core(&gen_symmetric(3, -1.5).unwrap()).unwrap();
        assert!((eps + 3.0).abs() < 1e-9);
        assert!(w.norm() < 1e-9);

        let (eps, w) = least_core(&majority()).unwrap();
        assert!((eps - 1.0).abs() < 1e-9);
        assert!(epsilon_core_membership(&majority(), &w, eps + 1e-8).unwrap());

        for seed in 0..10 {
            let g = gen_random(4, seed, true).unwrap();
            let (eps, w) = least_core(&g).unwrap();
            assert!(eps <= 1e-9);
            assert_eq!(dissatisfaction(&g, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn least_core_matches_primal_lp() {
        // independent route: primal LP with free (x, eps)
        for seed in 0..8 {
            let g = gen_random(4, 100 + seed, seed % 2 == 0).unwrap();
            let n = 4;
            let mut lp = LinearProgram::new(n + 1);
            for j in 0..=n {
                lp.set_free(j);
            }
            let mut c = vec![0.0; n + 1];
            c[n] = 1.0;
            lp.minimize(c);
            lp.constraint([vec![1.0; n], vec![0.0]].concat(), Relation::Eq, 0.0);
            for m in proper_masks(n) {
                let mut row: Vec<f64> = (0..n).map(|i| (m >> i & 1) as f64).collect();
                row.push(1.0);
                lp.constraint(row, Relation::Ge, g.value_of_mask(m));
            }
            let primal = lp.solve().objective.unwrap();
            let (eps, _) = least_core(&g).unwrap();
            assert!((eps - primal).abs() < 1e-9, "seed {seed}: {eps} vs {primal}");
        }
    }

    #[test]
    fn epsilon_core_examples() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let x = pre(&[-4.0, -3.0, 7.0]);
        assert!(epsilon_core_membership(&g, &x, 4.0).unwrap());
        assert!(!epsilon_core_membership(&g, &x, 3.9).unwrap());
        assert_eq!(
            epsilon_core_membership(&g, &x, 0.0).unwrap(),
            core_membership(&g, &x, 0.0).unwrap().member
        );
    }

    #[test]
    fn projection_examples() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let inside = pre(&[1.0, -0.5, -0.5]);
        let p = project_to_core(&g, &inside).unwrap();
        assert!(p.as_slice().iter().zip(inside.as_slice()).all(|(a, b)| (a - b).abs() < 1e-10));
        assert_eq!(distance_to_core(&g, &inside).unwrap(), 0.0);

        let x = pre(&[-4.0, -3.0, 7.0]);
        let p = project_to_core(&g, &x).unwrap();
        assert!(core_membership(&g, &p, 1e-8).unwrap().member);
        let d = distance_to_core(&g, &x).unwrap();
        assert!(d >= 4.0 / (2.0f64 / 3.0).sqrt() - 1e-9);

        // Monte-Carlo optimality: the core of this game is {x in X: -3 <= x_i <= 3}
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        while checked < 10_000 {
            let y = project_to_x(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            if !core_membership(&g, &y, 0.0).unwrap().member {
                continue;
            }
            let dy: f64 = y.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= dy + 1e-9);
            checked += 1;
        }

        assert!(matches!(project_to_core(&majority(), &x), Err(Error::EmptyCore(_))));
    }

    #[test]
    fn projection_of_half_space_violation_is_exact() {
        // Only {c} violated and its face is not cut by other constraints near
        // the foot point: the projection is the point-to-hyperplane foot.
        let g = gen_symmetric(3, -1.5).unwrap();
        let x = pre(&[2.0, 2.0, -4.0]);
        let p = project_to_core(&g, &x).unwrap();
        // e_c(x) = 1, eta^c = (-1/3, -1/3, 2/3), |eta|^2 = 2/3
        let expect = [2.0 - 0.5, 2.0 - 0.5, -4.0 + 1.0];
        assert!(p.as_slice().iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

//! Domination and outvoting between preimputations, and a randomized check
//! that an outvoting preimputation never carries more dissatisfaction than the
//! one it outvotes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fields::{evaluate, mask_coalition, theta_of};
use crate::flow::uniform_ball_ensemble;
use crate::game::{grand_mask, proper_masks, subset_sums, Coalition, Game, Preimputation};
use crate::lp::{LinearProgram, LpStatus, Relation};

/// Slack on the `x(T) >= v(T)` side conditions of outvoting.
pub const EXTERNAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OutvoteWitness {
    pub via: Coalition,
    /// `(player, x_i - y_i)` for every player of `via`.
    pub strict_gains: Vec<(usize, f64)>,
    /// Coalitions not contained in `via` whose side condition was checked.
    pub external_ok: Vec<Coalition>,
}

/// `x` dominates `y` via `S`: `e_S(x) >= 0` and `x_i > y_i` for all `i` in `S`.
pub fn dominates(g: &Game, x: &Preimputation, y: &Preimputation, s: Coalition) -> Result<bool> {
    g.require_normalized()?;
    g.check_dim(x.len())?;
    g.check_dim(y.len())?;
    Ok(dominates_raw(g, x.as_slice(), y.as_slice(), s.mask()))
}

fn dominates_raw(g: &Game, x: &[f64], y: &[f64], mask: u32) -> bool {
    let paid: f64 = (0..x.len()).filter(|&i| mask >> i & 1 == 1).map(|i| x[i]).sum();
    g.value_of_mask(mask) - paid >= 0.0 && (0..x.len()).filter(|&i| mask >> i & 1 == 1).all(|i| x[i] > y[i])
}

/// First coalition (ascending mask) via which `x` outvotes `y`, if any.
pub fn outvotes(g: &Game, x: &Preimputation, y: &Preimputation) -> Result<Option<OutvoteWitness>> {
    g.require_normalized()?;
    g.check_dim(x.len())?;
    g.check_dim(y.len())?;
    let (x, y) = (x.as_slice(), y.as_slice());
    let n = g.n();
    let sums = subset_sums(x);
    let full = grand_mask(n);
    for via in proper_masks(n) {
        if !dominates_raw(g, x, y, via) {
            continue;
        }
        let external: Vec<u32> = (1..=full).filter(|&t| t & !via != 0).collect();
        if external.iter().all(|&t| sums[t as usize] >= g.value_of_mask(t) - EXTERNAL_SLACK) {
            return Ok(Some(OutvoteWitness {
                via: mask_coalition(via),
                strict_gains: (0..n).filter(|&i| via >> i & 1 == 1).map(|i| (i, x[i] - y[i])).collect(),
                external_ok: external.into_iter().map(mask_coalition).collect(),
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalCheck {
    Enforced,
    /// Negative control: accept plain domination.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelatedPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub via: Coalition,
    pub theta_x: f64,
    pub theta_y: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompatReport {
    pub trials: usize,
    pub pairs: Vec<RelatedPair>,
    /// Pairs with `theta(x) > theta(y) + 1e-12`.
    pub violations: usize,
    /// Pairs with a coalition outside the witness aggrieved at `x` beyond
    /// [`EXTERNAL_SLACK`].
    pub subset_failures: usize,
}

/// Randomized search for pairs `x > y` (outvoting), asserting
/// `theta(x) <= theta(y)` on every pair found.
pub fn check_theta_compat(g: &Game, trials: usize, seed: u64) -> Result<CompatReport> {
    check_theta_compat_with(g, trials, seed, ExternalCheck::Enforced)
}

pub fn check_theta_compat_with(g: &Game, trials: usize, seed: u64, mode: ExternalCheck) -> Result<CompatReport> {
    g.require_normalized()?;
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 + g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let starts = uniform_ball_ensemble(n, trials, 3.0 * scale, rng.gen());
    let mut report = CompatReport { trials, ..Default::default() };
    for y in &starts {
        let y = y.as_slice();
        let fp = evaluate(g, y);
        if fp.aggrieved.is_empty() {
            continue;
        }
        let via = fp.aggrieved[rng.gen_range(0..fp.aggrieved.len())];
        let Some(x) = candidate(g, y, via, fp.excesses[via as usize - 1], mode, &mut rng) else {
            continue;
        };
        let xp = Preimputation::new(x.clone())?;
        let yp = Preimputation::new(y.to_vec())?;
        let witness = match mode {
            ExternalCheck::Enforced => outvotes(g, &xp, &yp)?.map(|w| w.via),
            ExternalCheck::Skipped => dominates_raw(g, &x, y, via).then(|| mask_coalition(via)),
        };
        let Some(via) = witness else { continue };
        let theta_x = theta_of(g, &x);
        let theta_y = fp.theta;
        if theta_x > theta_y + 1e-12 {
            report.violations += 1;
        }
        let at_x = evaluate(g, &x);
        let escaped = at_x
            .aggrieved
            .iter()
            .any(|&t| t & !via.mask() != 0 && at_x.excesses[t as usize - 1] > EXTERNAL_SLACK);
        if escaped {
            report.subset_failures += 1;
        }
        report.pairs.push(RelatedPair { x, y: y.to_vec(), via, theta_x, theta_y });
    }
    Ok(report)
}

/// Raises every member of `via` above `y` while keeping `x(S) <= v(S)`, then
/// fills in the other players: feasibly for the side conditions when
/// enforced, arbitrarily otherwise.
fn candidate(g: &Game, y: &[f64], via: u32, excess: f64, mode: ExternalCheck, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let n = g.n();
    let members: Vec<usize> = (0..n).filter(|&i| via >> i & 1 == 1).collect();
    let outsiders: Vec<usize> = (0..n).filter(|&i| via >> i & 1 == 0).collect();
    let budget = excess * rng.gen_range(0.05..1.0);
    let shares: Vec<f64> = members.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = shares.iter().sum();
    let mut x = vec![0.0; n];
    for (&i, s) in members.iter().zip(&shares) {
        x[i] = y[i] + budget * s / total;
    }
    let paid: f64 = members.iter().map(|&i| x[i]).sum();
    match mode {
        ExternalCheck::Enforced => {
            // variables: payoffs of the outsiders
            let k = outsiders.len();
            let mut lp = LinearProgram::new(k);
            for j in 0..k {
                lp.set_free(j);
            }
            lp.minimize((0..k).map(|_| rng.gen_range(-1.0..1.0)).collect());
            lp.constraint(vec![1.0; k], Relation::Eq, -paid);
            for t in 1..=grand_mask(n) {
                if t & !via == 0 || t == grand_mask(n) {
                    continue;
                }
                let inside: f64 = members.iter().filter(|&&i| t >> i & 1 == 1).map(|&i| x[i]).sum();
                let row = outsiders.iter().map(|&j| (t >> j & 1) as f64).collect();
                lp.constraint(row, Relation::Ge, g.value_of_mask(t) - inside);
            }
            let r = lp.solve();
            if r.status != LpStatus::Feasible {
                return None;
            }
            let z = r.primal?;
            for (&j, v) in outsiders.iter().zip(z) {
                x[j] = v;
            }
        }
        ExternalCheck::Skipped => {
            let dump = outsiders[rng.gen_range(0..outsiders.len())];
            for &j in &outsiders {
                x[j] = y[j];
            }
            let drift: f64 = x.iter().sum();
            x[dump] -= drift;
        }
    }
    // the LP rows are exact only up to rounding; land back on X
    let drift = x.iter().sum::<f64>();
    if let Some(&j) = outsiders.first() {
        x[j] -= drift;
    }
    Some(x)
}

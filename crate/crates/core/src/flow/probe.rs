use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{audit_lyapunov, FlowConfig, Integrator, Status};
use crate::collections::{distance_to_core_unchecked, least_core, NONEMPTY_TOL};
use crate::error::Result;
use crate::game::{plane_basis, Game, Preimputation};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub index: usize,
    pub status: Status,
    pub final_time: f64,
    pub final_theta: f64,
    pub final_phi_norm: f64,
    /// `None` when the core is empty.
    pub distance_to_core: Option<f64>,
    pub audit_pass: bool,
    pub max_theta_rise: f64,
    pub final_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSummary {
    pub runs: usize,
    pub core_nonempty: bool,
    pub least_core_value: f64,
    pub reached_core: usize,
    pub stationary: usize,
    pub unfinished: usize,
    pub audit_failures: usize,
    pub max_final_distance: Option<f64>,
    pub max_theta_rise: f64,
    /// Spread (max - min) of the final `theta` over runs ending stationary.
    pub stationary_theta_spread: Option<f64>,
    /// Convergence-time histogram: `(upper edge, count)` on decades.
    pub time_histogram: Vec<(f64, usize)>,
    pub outcomes: Vec<ProbeOutcome>,
}

impl ProbeSummary {
    pub fn fraction_reached_core(&self) -> f64 {
        if self.runs == 0 {
            1.0
        } else {
            self.reached_core as f64 / self.runs as f64
        }
    }
}

/// Runs the flow from every start (in parallel, on the current rayon pool)
/// and summarizes where the runs ended. Outcomes keep ensemble order.
pub fn realm_probe(
    g: &Game,
    ensemble: &[Preimputation],
    cfg: &FlowConfig,
    integrator: Integrator,
) -> Result<ProbeSummary> {
    g.require_normalized()?;
    cfg.validate()?;
    let (eps, _) = least_core(g)?;
    let nonempty = eps <= NONEMPTY_TOL;
    let outcomes = ensemble
        .par_iter()
        .enumerate()
        .map(|(index, x0)| -> Result<ProbeOutcome> {
            let traj = integrator.run(g, x0, cfg)?;
            let audit = audit_lyapunov(&traj);
            let last = traj.last();
            let distance = if nonempty { Some(distance_to_core_unchecked(g, &last.x)?) } else { None };
            Ok(ProbeOutcome {
                index,
                status: traj.status,
                final_time: last.t,
                final_theta: last.theta,
                final_phi_norm: last.phi_norm,
                distance_to_core: distance,
                audit_pass: audit.pass,
                max_theta_rise: audit.max_theta_rise,
                final_point: last.x.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let count = |s: Status| outcomes.iter().filter(|o| o.status == s).count();
    let stationary_thetas: Vec<f64> =
        outcomes.iter().filter(|o| o.status == Status::StationaryPoint).map(|o| o.final_theta).collect();
    let spread = (!stationary_thetas.is_empty()).then(|| {
        let lo = stationary_thetas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = stationary_thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    });
    Ok(ProbeSummary {
        runs: outcomes.len(),
        core_nonempty: nonempty,
        least_core_value: eps,
        reached_core: count(Status::ReachedCore),
        stationary: count(Status::StationaryPoint),
        unfinished: count(Status::MaxTime) + count(Status::StepUnderflow),
        audit_failures: outcomes.iter().filter(|o| !o.audit_pass).count(),
        max_final_distance: outcomes.iter().filter_map(|o| o.distance_to_core).reduce(f64::max),
        max_theta_rise: outcomes.iter().map(|o| o.max_theta_rise).fold(0.0, f64::max),
        stationary_theta_spread: spread,
        time_histogram: histogram(outcomes.iter().map(|o| o.final_time)),
        outcomes,
    })
}

fn histogram(times: impl Iterator<Item = f64>) -> Vec<(f64, usize)> {
    let edges: Vec<f64> = (-3..=4).map(|k| 10f64.powi(k)).collect();
    let mut counts = vec![0usize; edges.len() + 1];
    for t in times {
        let slot = edges.iter().position(|&e| t <= e).unwrap_or(edges.len());
        counts[slot] += 1;
    }
    edges.into_iter().chain([f64::INFINITY]).zip(counts).collect()
}

/// `count` points drawn uniformly from the ball of the given radius in X.
pub fn uniform_ball_ensemble(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Preimputation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = plane_basis(n);
    let dim = basis.len();
    (0..count)
        .map(|_| {
            // Gaussian direction via Box-Muller, radius with density r^(dim-1)
            let mut coords: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let len = crate::game::norm(&coords).max(f64::MIN_POSITIVE);
            let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
            for c in coords.iter_mut() {
                *c *= r / len;
            }
            let mut x = vec![0.0; n];
            for (c, u) in coords.iter().zip(&basis) {
                for (xi, ui) in x.iter_mut().zip(u) {
                    *xi += c * ui;
                }
            }
            Preimputation::from_recentered(x)
        })
        .collect()
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{gen_random, gen_symmetric};

    #[test]
    fn ensemble_is_in_ball_and_deterministic() {
        let a = uniform_ball_ensemble(4, 200, 10.0, 3);
        assert_eq!(a, uniform_ball_ensemble(4, 200, 10.0, 3));
        assert!(a.iter().all(|x| x.norm() <= 10.0 + 1e-12 && x.as_slice().iter().sum::<f64>().abs() < 1e-12));
    }

    #[test]
    fn example_game_probe_converges() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let starts = uniform_ball_ensemble(3, 50, 100.0, 1);
        let s = realm_probe(&g, &starts, &FlowConfig::default(), Integrator::Exact).unwrap();
        assert_eq!(s.reached_core, 50);
        assert_eq!(s.audit_failures, 0);
        assert!(s.max_final_distance.unwrap() < 1e-6);
        assert_eq!(s.time_histogram.iter().map(|h| h.1).sum::<usize>(), 50);
    }

    #[test]
    fn core_starts_finish_at_zero() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let starts = uniform_ball_ensemble(3, 20, 2.0, 2);
        let s = realm_probe(&g, &starts, &FlowConfig::default(), Integrator::Rk4).unwrap();
        assert_eq!(s.reached_core, 20);
        assert!(s.outcomes.iter().all(|o| o.final_time == 0.0));
    }

    #[test]
    fn empty_ensemble() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let s = realm_probe(&g, &[], &FlowConfig::default(), Integrator::Exact).unwrap();
        assert_eq!(s.runs, 0);
        assert_eq!(s.fraction_reached_core(), 1.0);
    }

    #[test]
    fn unbalanced_game_stalls_at_common_level() {
        let g = gen_random(3, 9, false).unwrap();
        let starts = uniform_ball_ensemble(3, 30, 20.0, 4);
        let s = realm_probe(&g, &starts, &FlowConfig::default(), Integrator::Exact).unwrap();
        assert!(!s.core_nonempty);
        assert_eq!(s.stationary, 30);
        assert!(s.stationary_theta_spread.unwrap() <= 1e-8);
        assert!(s.outcomes.iter().all(|o| o.final_theta > 0.0));
    }
}

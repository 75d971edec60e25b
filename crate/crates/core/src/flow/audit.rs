use std::collections::HashMap;

use super::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub enum AuditOffense {
    /// Sample times not strictly increasing at `index`.
    TimeOrder { index: usize },
    /// `theta` rose between samples `index - 1` and `index`.
    ThetaIncrease { index: usize, rise: f64 },
    /// Within one region, `theta` fell by less than `min(|phi|)^2 dt / 2`.
    InsufficientDecrease { index: usize, decrease: f64, required: f64 },
    /// A region left earlier was re-entered with higher `theta` than at exit.
    RegionCycle { index: usize, region: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub pass: bool,
    pub offense: Option<AuditOffense>,
    pub pairs_checked: usize,
    /// Largest rise of `theta` between consecutive samples (0 if none).
    pub max_theta_rise: f64,
}

/// Discrete check that `theta` is a strict Lyapunov function along `traj`:
/// non-increasing everywhere, decreasing at the rate `||phi||^2` within a
/// region, and no region revisited at a higher level.
pub fn audit_lyapunov(traj: &Trajectory) -> AuditReport {
    let slack_scale = 10.0 * traj.tolerance;
    let mut offense = None;
    let mut max_rise: f64 = 0.0;
    let mut exits: HashMap<u64, f64> = HashMap::new();
    let samples = &traj.samples;
    for (index, pair) in samples.windows(2).enumerate().map(|(i, w)| (i + 1, w)) {
        let (a, b) = (&pair[0], &pair[1]);
        let slack = 1e-12 * (1.0 + a.theta) + slack_scale * (1.0 + a.theta);
        max_rise = max_rise.max(b.theta - a.theta);
        if offense.is_some() {
            continue;
        }
        if !(b.t > a.t) {
            offense = Some(AuditOffense::TimeOrder { index });
            continue;
        }
        if b.theta > a.theta + slack {
            offense = Some(AuditOffense::ThetaIncrease { index, rise: b.theta - a.theta });
            continue;
        }
        if a.region == b.region {
            let speed = a.phi_norm.min(b.phi_norm);
            if speed > traj.stop_phi_norm {
                let required = 0.5 * speed * speed * (b.t - a.t);
                let decrease = a.theta - b.theta;
                if decrease < required - slack {
                    offense = Some(AuditOffense::InsufficientDecrease { index, decrease, required });
                    continue;
                }
            }
        } else {
            exits.insert(a.region, a.theta);
            if let Some(&left_at) = exits.get(&b.region) {
                if b.theta > left_at + slack {
                    offense = Some(AuditOffense::RegionCycle { index, region: b.region });
                }
            }
        }
    }
    AuditReport {
        pass: offense.is_none(),
        offense,
        pairs_checked: samples.len().saturating_sub(1),
        max_theta_rise: max_rise.max(0.0),
    }
}

//! The cohesion flow `dx/dt = phi(x)`.
//!
//! Three integrators share one termination contract: stop once `||phi||` or
//! `theta` drops below its threshold (classified as [`Status::ReachedCore`] if
//! the final point is in the core to [`MEMBERSHIP_TOL`], else
//! [`Status::StationaryPoint`]), or at `t_max`, or when the step collapses.

mod audit;
mod exact;
mod probe;
mod rk;

use std::time::Duration;

pub use audit::{audit_lyapunov, AuditOffense, AuditReport};
pub use exact::{evolve_exact, integrate_exact, RegionFlow};
pub use probe::{realm_probe, uniform_ball_ensemble, ProbeOutcome, ProbeSummary};
pub use rk::{integrate_adaptive, integrate_rk4, rk4_step};

use crate::collections::{core_report, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::fields::FieldPoint;
use crate::game::{Game, Preimputation};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub stop_phi_norm: f64,
    pub stop_theta: f64,
    pub t_max: f64,
    /// Fixed RK4 step.
    pub dt: f64,
    /// Local error tolerance of the adaptive integrator.
    pub adaptive_tol: f64,
    /// Record every `sample_stride`-th step (first, last and region changes
    /// are always recorded).
    pub sample_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            stop_phi_norm: 1e-10,
            stop_theta: 1e-18,
            t_max: 1e4,
            dt: 1e-3,
            adaptive_tol: 1e-9,
            sample_stride: 10,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stop_phi_norm", self.stop_phi_norm),
            ("stop_theta", self.stop_theta),
            ("t_max", self.t_max),
            ("dt", self.dt),
            ("adaptive_tol", self.adaptive_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    ReachedCore,
    StationaryPoint,
    MaxTime,
    StepUnderflow,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::ReachedCore => "ReachedCore",
            Status::StationaryPoint => "StationaryPoint",
            Status::MaxTime => "MaxTime",
            Status::StepUnderflow => "StepUnderflow",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        [Status::ReachedCore, Status::StationaryPoint, Status::MaxTime, Status::StepUnderflow]
            .into_iter()
            .find(|st| st.as_str() == s)
    }

    /// Stopped on a threshold, as opposed to running out of time or step.
    pub fn converged(self) -> bool {
        matches!(self, Status::ReachedCore | Status::StationaryPoint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Integrator {
    Rk4,
    Adaptive,
    Exact,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::Adaptive => "adaptive",
            Integrator::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Integrator> {
        [Integrator::Rk4, Integrator::Adaptive, Integrator::Exact].into_iter().find(|i| i.as_str() == s)
    }

    pub fn run(self, g: &Game, x0: &Preimputation, cfg: &FlowConfig) -> Result<Trajectory> {
        match self {
            Integrator::Rk4 => integrate_rk4(g, x0, cfg),
            Integrator::Adaptive => integrate_adaptive(g, x0, cfg),
            Integrator::Exact => integrate_exact(g, x0, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta: f64,
    pub phi_norm: f64,
    pub region: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub steps: usize,
    pub rejected_steps: usize,
    pub region_crossings: usize,
    /// Exact integrator only: boundary events handed to adaptive stepping.
    pub fallbacks: usize,
    pub wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub status: Status,
    pub integrator: Integrator,
    pub stats: FlowStats,
    /// Integrator accuracy scale used by the Lyapunov audit.
    pub tolerance: f64,
    /// Threshold on `||phi||` the run stopped at.
    pub stop_phi_norm: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories hold at least the initial sample")
    }

    pub fn final_point(&self) -> Preimputation {
        Preimputation::from_recentered(self.last().x.clone())
    }

    pub fn final_time(&self) -> f64 {
        self.last().t
    }
}

pub(crate) fn sample_of(t: f64, x: &[f64], fp: &FieldPoint) -> Sample {
    Sample {
        t,
        x: x.to_vec(),
        theta: fp.theta,
        phi_norm: fp.phi_norm(),
        region: fp.collection().region_hash(),
    }
}

/// Collects samples with strictly increasing times.
pub(crate) struct Recorder {
    samples: Vec<Sample>,
    stride: usize,
    since: usize,
}

impl Recorder {
    pub(crate) fn new(stride: usize) -> Self {
        Recorder { samples: Vec::new(), stride, since: 0 }
    }

    /// Counts a step and records it when the stride is due.
    pub(crate) fn step(&mut self, t: f64, x: &[f64], fp: &FieldPoint, region_changed: bool) {
        self.since += 1;
        if region_changed || self.since >= self.stride {
            self.force(t, x, fp);
        }
    }

    pub(crate) fn force(&mut self, t: f64, x: &[f64], fp: &FieldPoint) {
        if self.samples.last().is_some_and(|s| s.t >= t) {
            return;
        }
        self.samples.push(sample_of(t, x, fp));
        self.since = 0;
    }

    pub(crate) fn finish(self) -> Vec<Sample> {
        self.samples
    }
}

pub(crate) fn should_stop(fp: &FieldPoint, cfg: &FlowConfig) -> bool {
    fp.theta <= cfg.stop_theta || fp.phi_norm() <= cfg.stop_phi_norm
}

pub(crate) fn classify(g: &Game, x: &[f64]) -> Status {
    if core_report(g, x, MEMBERSHIP_TOL).member {
        Status::ReachedCore
    } else {
        Status::StationaryPoint
    }
}

pub(crate) fn prepare(g: &Game, x0: &Preimputation, cfg: &FlowConfig) -> Result<()> {
    g.require_normalized()?;
    g.check_dim(x0.len())?;
    cfg.validate()
}

pub(crate) fn check_finite(x: &[f64], t: f64, last: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t, last: last.to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(FlowConfig::default().validate().is_ok());
        let bad = FlowConfig { dt: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FlowConfig { sample_stride: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FlowConfig { stop_theta: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in [Status::ReachedCore, Status::StationaryPoint, Status::MaxTime, Status::StepUnderflow] {
            assert_eq!(Status::parse(s.as_str()), Some(s));
        }
        for i in [Integrator::Rk4, Integrator::Adaptive, Integrator::Exact] {
            assert_eq!(Integrator::parse(i.as_str()), Some(i));
        }
    }
}

//! Closed-form integration of the piecewise-affine cohesion flow.
//!
//! Inside a region the flow is `dx/dt = -A x + b` with `A` symmetric PSD and
//! `b` in the range of `A`. With `A = sum mu_k v_k v_k^T` the solution is
//!
//! ```text
//! x(tau) = x_inf + sum_k c_k exp(-mu_k tau) v_k
//! ```
//!
//! where `x_inf` is the in-region limit and kernel directions stay constant.
//! Every excess is then an exponential sum `a_T - sum_k beta_Tk exp(-mu_k tau)`,
//! so region changes are located by scanning those sums and bisecting.

use std::time::Instant;

use nalgebra::SymmetricEigen;

use super::rk::advance_adaptive;
use super::{
    check_finite, classify, prepare, FlowConfig, FlowStats, Integrator, Recorder, Status, Trajectory,
};
use crate::error::{Error, Result};
use crate::fields::{evaluate, region_affine, FieldPoint};
use crate::game::{proper_masks, recenter, subset_sums, Game, Preimputation};

/// Eigenvalues below this fraction of `||A||` are treated as zero.
const KERNEL_REL: f64 = 1e-12;
/// Absolute time resolution of boundary events.
const EVENT_TIME_TOL: f64 = 1e-12;
/// Consecutive region visits shorter than this count toward a fallback.
const SHORT_DWELL: f64 = 1e-9;
const MAX_SHORT_DWELLS: usize = 50;
const FALLBACK_SPAN: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Mode {
    rate: f64,
    vector: Vec<f64>,
    coeff: f64,
}

/// Exact solution of the flow within the region of a given entry point.
#[derive(Debug, Clone)]
pub struct RegionFlow {
    aggrieved: Vec<u32>,
    limit: Vec<f64>,
    modes: Vec<Mode>,
    /// `a_T = e_T(x_inf)` for every mask (index `mask - 1`).
    limit_excess: Vec<f64>,
    /// `beta_Tk = c_k v_k(T)`, row-major by mask then mode.
    beta: Vec<f64>,
}

impl RegionFlow {
    /// Solves the region containing `x` (by its aggrieved collection).
    pub fn new(g: &Game, x: &[f64]) -> Self {
        let fp = evaluate(g, x);
        Self::from_point(g, x, &fp)
    }

    fn from_point(g: &Game, x: &[f64], fp: &FieldPoint) -> Self {
        let region = region_affine(g, &fp.collection());
        let eig = SymmetricEigen::new(region.matrix().clone());
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let mut limit = x.to_vec();
        let mut modes = Vec::new();
        if top > 0.0 {
            for (k, &mu) in eig.eigenvalues.iter().enumerate() {
                if mu <= KERNEL_REL * top {
                    continue;
                }
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                recenter(&mut v);
                let norm = crate::game::norm(&v);
                for c in v.iter_mut() {
                    *c /= norm;
                }
                let vb = crate::game::dot(&v, region.offset().as_slice());
                let coeff = crate::game::dot(&v, x) - vb / mu;
                for (l, vi) in limit.iter_mut().zip(&v) {
                    *l -= coeff * vi;
                }
                modes.push(Mode { rate: mu, vector: v, coeff });
            }
        }
        let limit_excess = g.excesses(&limit);
        let m = modes.len();
        let mut beta = vec![0.0; limit_excess.len() * m];
        for (k, mode) in modes.iter().enumerate() {
            let sums = subset_sums(&mode.vector);
            for mask in 1..=limit_excess.len() {
                beta[(mask - 1) * m + k] = mode.coeff * sums[mask];
            }
        }
        RegionFlow { aggrieved: fp.aggrieved.clone(), limit, modes, limit_excess, beta }
    }

    pub fn aggrieved(&self) -> &[u32] {
        &self.aggrieved
    }

    /// The in-region limit `x_inf` (the stationary point if no event
    /// intervenes).
    pub fn limit(&self) -> &[f64] {
        &self.limit
    }

    /// Nonzero eigenvalues of `A`.
    pub fn rates(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.rate).collect()
    }

    pub fn state(&self, tau: f64) -> Vec<f64> {
        let mut x = self.limit.clone();
        for mode in &self.modes {
            let w = mode.coeff * (-mode.rate * tau).exp();
            for (xi, vi) in x.iter_mut().zip(&mode.vector) {
                *xi += w * vi;
            }
        }
        x
    }

    /// Excess of `mask` at `x(tau)`.
    pub fn excess(&self, mask: u32, tau: f64) -> f64 {
        let m = self.modes.len();
        let row = &self.beta[(mask as usize - 1) * m..mask as usize * m];
        self.limit_excess[mask as usize - 1]
            - row.iter().zip(&self.modes).map(|(b, mode)| b * (-mode.rate * tau).exp()).sum::<f64>()
    }

    /// `||phi(x(tau))||^2 = sum mu_k^2 c_k^2 exp(-2 mu_k tau)`.
    pub fn phi_norm_sq(&self, tau: f64) -> f64 {
        self.modes.iter().map(|m| (m.rate * m.coeff).powi(2) * (-2.0 * m.rate * tau).exp()).sum()
    }

    /// `theta` along the region's affine formula (valid while in the region).
    pub fn theta(&self, tau: f64) -> f64 {
        self.aggrieved.iter().map(|&s| 0.5 * self.excess(s, tau).powi(2)).sum()
    }

    /// `int_0^tau ||phi||^2 dt` in closed form.
    pub fn dissipated(&self, tau: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.rate * m.coeff * m.coeff * 0.5 * -(-2.0 * m.rate * tau).exp_m1())
            .sum()
    }

    fn slowest(&self) -> f64 {
        self.modes.iter().map(|m| m.rate).fold(f64::INFINITY, f64::min)
    }

    fn fastest(&self) -> f64 {
        self.modes.iter().map(|m| m.rate).fold(0.0, f64::max)
    }

    /// Earliest `tau` with `pred(tau)` true for a monotone predicate, or `None`
    /// if it stays false.
    fn first_time(&self, pred: impl Fn(f64) -> bool) -> Option<f64> {
        if pred(0.0) {
            return Some(0.0);
        }
        let mut hi = 1.0 / self.slowest();
        let mut lo = 0.0;
        let mut tries = 0;
        while !pred(hi) {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > 80 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }

    /// Time at which the stopping thresholds are first met inside this region.
    /// Aims below the thresholds so the directly evaluated endpoint meets them.
    fn stop_time(&self, stop_phi: f64, stop_theta: f64) -> Option<f64> {
        if self.modes.is_empty() {
            return Some(0.0);
        }
        let (stop_phi, stop_theta) = (STOP_MARGIN * stop_phi, STOP_MARGIN * STOP_MARGIN * stop_theta);
        let phi_t = self.first_time(|tau| self.phi_norm_sq(tau) <= stop_phi * stop_phi);
        let floor: f64 = self.aggrieved.iter().map(|&s| 0.5 * self.limit_excess[s as usize - 1].powi(2)).sum();
        let theta_t = if floor <= stop_theta { self.first_time(|tau| self.theta(tau) <= stop_theta) } else { None };
        match (phi_t, theta_t) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// First boundary event in `(0, horizon]`, returned as a time just past
    /// the crossing.
    fn next_event(&self, n: usize, horizon: f64, global_t: f64) -> Option<f64> {
        if self.modes.is_empty() || horizon <= 0.0 {
            return None;
        }
        let m = self.modes.len();
        let inside = |mask: u32| self.aggrieved.binary_search(&mask).is_ok();
        let candidates: Vec<(u32, bool)> = proper_masks(n)
            .filter_map(|mask| {
                let a = self.limit_excess[mask as usize - 1];
                let swing: f64 = self.beta[(mask as usize - 1) * m..mask as usize * m].iter().map(|b| b.abs()).sum();
                let member = inside(mask);
                let possible = if member { a - swing <= 0.0 } else { a + swing > 0.0 };
                possible.then_some((mask, member))
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let triggered = |mask: u32, member: bool, tau: f64| {
            let e = self.excess(mask, tau);
            if member {
                e <= 0.0
            } else {
                e > 0.0
            }
        };
        let fast = self.fastest();
        let slow = self.slowest();
        let min_step = 0.02 / fast;
        let max_step = 0.05 / slow;
        let mut prev: f64 = 0.0;
        loop {
            let step = (0.05 * prev).clamp(min_step, max_step.max(min_step));
            let tau = (prev + step).min(horizon);
            let mut best: Option<f64> = None;
            for &(mask, member) in &candidates {
                if triggered(mask, member, tau) {
                    let mut lo = prev;
                    let mut hi = tau;
                    let tol = EVENT_TIME_TOL * (global_t + lo).max(1.0);
                    while hi - lo > tol {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if triggered(mask, member, mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    best = Some(best.map_or(hi, |b: f64| b.min(hi)));
                }
            }
            if best.is_some() {
                return best;
            }
            if tau >= horizon {
                return None;
            }
            prev = tau;
        }
    }

    /// Scan times at which to record interior samples.
    fn sample_times(&self, end: f64, per_region: usize) -> Vec<f64> {
        if self.modes.is_empty() || per_region == 0 || end <= 0.0 {
            return Vec::new();
        }
        // geometric spacing resolves both the fast transient and the slow tail
        let first = (0.1 / self.fastest()).min(end);
        if first >= end {
            return vec![end];
        }
        let ratio = (end / first).powf(1.0 / per_region as f64);
        (0..per_region).map(|k| first * ratio.powi(k as i32)).filter(|&t| t < end).collect()
    }
}

struct Engine<'a> {
    g: &'a Game,
    stop_phi: f64,
    stop_theta: f64,
    t_max: f64,
    samples_per_region: usize,
    fallback_tol: f64,
}

struct Outcome {
    x: Vec<f64>,
    status: Status,
    stats: FlowStats,
    recorder: Option<Recorder>,
}

const STOP_MARGIN: f64 = 0.5;

impl Engine<'_> {
    fn run(&self, x0: &[f64], mut recorder: Option<Recorder>) -> Result<Outcome> {
        let n = self.g.n();
        let mut stats = FlowStats::default();
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut fp = evaluate(self.g, &x);
        let mut short_dwells = 0;
        if let Some(rec) = recorder.as_mut() {
            rec.force(t, &x, &fp);
        }
        let status = loop {
            if fp.theta <= self.stop_theta || fp.phi_norm() <= self.stop_phi {
                break classify(self.g, &x);
            }
            let remaining = self.t_max - t;
            if remaining <= 0.0 {
                break Status::MaxTime;
            }
            if short_dwells >= MAX_SHORT_DWELLS {
                let span = FALLBACK_SPAN.min(remaining);
                let (next, steps) = advance_adaptive(self.g, &x, span, self.fallback_tol);
                check_finite(&next, t + span, &x)?;
                x = next;
                recenter(&mut x);
                t += span;
                stats.fallbacks += 1;
                stats.steps += steps;
                short_dwells = 0;
                let next_fp = evaluate(self.g, &x);
                let changed = next_fp.aggrieved != fp.aggrieved;
                if changed {
                    stats.region_crossings += 1;
                }
                fp = next_fp;
                if let Some(rec) = recorder.as_mut() {
                    rec.force(t, &x, &fp);
                }
                continue;
            }
            let flow = RegionFlow::from_point(self.g, &x, &fp);
            let stop = flow.stop_time(self.stop_phi, self.stop_theta).unwrap_or(f64::INFINITY);
            let horizon = stop.min(remaining);
            let event = flow.next_event(n, horizon, t);
            stats.steps += 1;
            let (tau, ended) = match event {
                Some(tau) => (tau, None),
                None if stop <= remaining => (stop, Some(true)),
                None => (remaining, Some(false)),
            };
            if let Some(rec) = recorder.as_mut() {
                for s in flow.sample_times(tau, self.samples_per_region) {
                    let xs = flow.state(s);
                    let sfp = evaluate(self.g, &xs);
                    rec.force(t + s, &xs, &sfp);
                }
            }
            let next = flow.state(tau);
            check_finite(&next, t + tau, &x)?;
            x = next;
            recenter(&mut x);
            t = if ended == Some(false) { self.t_max } else { t + tau };
            fp = evaluate(self.g, &x);
            if let Some(rec) = recorder.as_mut() {
                rec.force(t, &x, &fp);
            }
            match ended {
                Some(true) => break classify(self.g, &x),
                Some(false) => break Status::MaxTime,
                None => {
                    stats.region_crossings += 1;
                    if tau < SHORT_DWELL {
                        short_dwells += 1;
                    } else {
                        short_dwells = 0;
                    }
                }
            }
        };
        Ok(Outcome { x, status, stats, recorder })
    }
}

pub fn integrate_exact(g: &Game, x0: &Preimputation, cfg: &FlowConfig) -> Result<Trajectory> {
    prepare(g, x0, cfg)?;
    let started = Instant::now();
    let engine = Engine {
        g,
        stop_phi: cfg.stop_phi_norm,
        stop_theta: cfg.stop_theta,
        t_max: cfg.t_max,
        samples_per_region: cfg.sample_stride,
        fallback_tol: cfg.adaptive_tol,
    };
    let out = engine.run(x0.as_slice(), Some(Recorder::new(1)))?;
    let mut stats = out.stats;
    stats.wall = started.elapsed();
    let samples = out.recorder.expect("recorder supplied").finish();
    Ok(Trajectory {
        samples,
        status: out.status,
        integrator: Integrator::Exact,
        stats,
        tolerance: 1e-12,
        stop_phi_norm: cfg.stop_phi_norm,
    })
}

/// The evolution map `Phi(t, x0)`: the point of the cohesion curve through
/// `x0` at time `t >= 0`. Motion is treated as finished once `||phi||` falls
/// below `1e-15`.
pub fn evolve_exact(g: &Game, x0: &Preimputation, t: f64) -> Result<Preimputation> {
    g.require_normalized()?;
    g.check_dim(x0.len())?;
    if !(t >= 0.0) {
        return Err(Error::Config(format!("evolution time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let engine = Engine {
        g,
        stop_phi: 1e-15,
        stop_theta: 1e-30,
        t_max: t,
        samples_per_region: 0,
        fallback_tol: 1e-12,
    };
    let out = engine.run(x0.as_slice(), None)?;
    Ok(Preimputation::from_recentered(out.x))
}

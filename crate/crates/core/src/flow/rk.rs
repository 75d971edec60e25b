use std::time::Instant;

use super::{
    check_finite, classify, prepare, should_stop, FlowConfig, FlowStats, Integrator, Recorder, Status, Trajectory,
};
use crate::error::Result;
use crate::fields::{evaluate, region_affine, FieldPoint};
use crate::game::{recenter, Game, Preimputation};

#[inline]
fn phi(g: &Game, x: &[f64]) -> Vec<f64> {
    evaluate(g, x).phi
}

#[inline]
fn combine(x: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (w, k) in terms {
        if *w != 0.0 {
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += w * v;
            }
        }
    }
    out
}

/// One classical RK4 step of the cohesion field, re-projected onto X.
pub fn rk4_step(g: &Game, x: &[f64], h: f64) -> Vec<f64> {
    let k1 = phi(g, x);
    let k2 = phi(g, &combine(x, &[(h / 2.0, &k1)]));
    let k3 = phi(g, &combine(x, &[(h / 2.0, &k2)]));
    let k4 = phi(g, &combine(x, &[(h, &k3)]));
    let mut next = combine(x, &[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)]);
    recenter(&mut next);
    next
}

fn region_changed(prev: &FieldPoint, next: &FieldPoint) -> bool {
    prev.aggrieved != next.aggrieved
}

pub fn integrate_rk4(g: &Game, x0: &Preimputation, cfg: &FlowConfig) -> Result<Trajectory> {
    prepare(g, x0, cfg)?;
    let started = Instant::now();
    let mut stats = FlowStats::default();
    let mut rec = Recorder::new(cfg.sample_stride);
    let mut x = x0.as_slice().to_vec();
    let mut t = 0.0;
    let mut fp = evaluate(g, &x);
    rec.force(t, &x, &fp);
    let status = loop {
        if should_stop(&fp, cfg) {
            break classify(g, &x);
        }
        let remaining = cfg.t_max - t;
        if remaining <= 1e-14 * t.max(1.0) {
            break Status::MaxTime;
        }
        let h = cfg.dt.min(remaining);
        if h < 1e-14 * t.max(1.0) {
            break Status::StepUnderflow;
        }
        let next = rk4_step(g, &x, h);
        check_finite(&next, t + h, &x)?;
        x = next;
        t = if h == remaining { cfg.t_max } else { t + h };
        stats.steps += 1;
        let next_fp = evaluate(g, &x);
        let changed = region_changed(&fp, &next_fp);
        if changed {
            stats.region_crossings += 1;
        }
        fp = next_fp;
        rec.step(t, &x, &fp, changed);
    };
    rec.force(t, &x, &fp);
    stats.wall = started.elapsed();
    Ok(Trajectory {
        samples: rec.finish(),
        status,
        integrator: Integrator::Rk4,
        stats,
        tolerance: cfg.dt.powi(4),
        stop_phi_norm: cfg.stop_phi_norm,
    })
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DpStep {
    next: Vec<f64>,
    k_last: Vec<f64>,
    err: f64,
}

/// One Dormand-Prince attempt from `x` with first stage `k1`. The error is the
/// max-norm of the embedded estimate scaled by `tol (1 + |x_i|)`.
fn dp_attempt(g: &Game, x: &[f64], k1: &[f64], h: f64, tol: f64) -> DpStep {
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(7);
    ks.push(k1.to_vec());
    for s in 1..7 {
        let terms: Vec<(f64, &[f64])> = (0..s).map(|j| (h * A[s][j], ks[j].as_slice())).collect();
        let stage = combine(x, &terms);
        ks.push(phi(g, &stage));
        debug_assert!(C[s] > 0.0);
    }
    // the 7th stage point is the fifth-order solution (FSAL)
    let terms: Vec<(f64, &[f64])> = (0..6).map(|j| (h * A[6][j], ks[j].as_slice())).collect();
    let mut next = combine(x, &terms);
    recenter(&mut next);
    let mut err: f64 = 0.0;
    for i in 0..x.len() {
        let e: f64 = (0..7).map(|s| E[s] * ks[s][i]).sum::<f64>() * h;
        err = err.max(e.abs() / tol);
    }
    DpStep { next, k_last: ks.pop().expect("seven stages"), err }
}

pub fn integrate_adaptive(g: &Game, x0: &Preimputation, cfg: &FlowConfig) -> Result<Trajectory> {
    prepare(g, x0, cfg)?;
    let started = Instant::now();
    let mut stats = FlowStats::default();
    let mut rec = Recorder::new(cfg.sample_stride);
    let mut x = x0.as_slice().to_vec();
    let mut t = 0.0;
    let mut fp = evaluate(g, &x);
    rec.force(t, &x, &fp);
    let mut k1 = fp.phi.clone();
    let mut h = initial_step(&x, &k1, cfg);
    let mut h_cap = stability_cap(g, &fp);
    let status = loop {
        if should_stop(&fp, cfg) {
            break classify(g, &x);
        }
        let remaining = cfg.t_max - t;
        if remaining <= 1e-14 * t.max(1.0) {
            break Status::MaxTime;
        }
        h = h.min(remaining).min(h_cap);
        if h < 1e-14 * t.max(1.0) {
            break Status::StepUnderflow;
        }
        let step = dp_attempt(g, &x, &k1, h, cfg.adaptive_tol);
        if !step.err.is_finite() {
            check_finite(&step.next, t + h, &x)?;
        }
        if step.err <= 1.0 {
            check_finite(&step.next, t + h, &x)?;
            x = step.next;
            t = if h == remaining { cfg.t_max } else { t + h };
            stats.steps += 1;
            let next_fp = evaluate(g, &x);
            let changed = next_fp.aggrieved != fp.aggrieved;
            if changed {
                stats.region_crossings += 1;
                k1 = next_fp.phi.clone();
                h_cap = stability_cap(g, &next_fp);
            } else {
                k1 = step.k_last;
            }
            fp = next_fp;
            rec.step(t, &x, &fp, changed);
            h *= step_factor(step.err).min(5.0);
        } else {
            stats.rejected_steps += 1;
            h *= step_factor(step.err).min(1.0);
        }
    };
    rec.force(t, &x, &fp);
    stats.wall = started.elapsed();
    Ok(Trajectory {
        samples: rec.finish(),
        status,
        integrator: Integrator::Adaptive,
        stats,
        tolerance: cfg.adaptive_tol,
        stop_phi_norm: cfg.stop_phi_norm,
    })
}

/// Largest step inside the real stability interval of the pair for the
/// current region; beyond it the error control alone lets stiff modes
/// hover at tolerance level near a stationary point.
fn stability_cap(g: &Game, fp: &FieldPoint) -> f64 {
    let lip = region_affine(g, &fp.collection()).lipschitz();
    if lip > 0.0 {
        DP_STABILITY / lip
    } else {
        f64::INFINITY
    }
}

const DP_STABILITY: f64 = 3.0;

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

fn initial_step(x: &[f64], k1: &[f64], cfg: &FlowConfig) -> f64 {
    let xs = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let ks = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if ks == 0.0 {
        return cfg.dt;
    }
    (0.01 * xs / ks).min(1.0).max(1e-6)
}

/// Advances with adaptive steps over exactly `duration`, without sampling.
pub(crate) fn advance_adaptive(g: &Game, x: &[f64], duration: f64, tol: f64) -> (Vec<f64>, usize) {
    let mut x = x.to_vec();
    let mut k1 = phi(g, &x);
    let mut t = 0.0;
    let mut steps = 0;
    let mut h = duration;
    while t < duration && steps < 100_000 {
        h = h.min(duration - t);
        let step = dp_attempt(g, &x, &k1, h, tol);
        if step.err <= 1.0 || h <= 1e-14 * duration {
            x = step.next;
            t += h;
            k1 = phi(g, &x);
            h *= step_factor(step.err);
        } else {
            h *= step_factor(step.err).min(1.0);
        }
        steps += 1;
    }
    (x, steps)
}

use cohesion::collections::{core_membership, distance_to_core};
use cohesion::fields::dissatisfaction;
use cohesion::flow::{
    audit_lyapunov, evolve_exact, integrate_adaptive, integrate_exact, integrate_rk4, uniform_ball_ensemble,
    FlowConfig, Integrator, RegionFlow, Status,
};
use cohesion::game::{gen_random, gen_symmetric};
use cohesion::Game;

fn corpus() -> Vec<Game> {
    let mut games = vec![gen_symmetric(3, -1.5).unwrap()];
    games.extend((0..20).map(|k| gen_random(3 + k % 3, 1000 + k as u64, true).unwrap()));
    games.extend((0..5).map(|k| gen_random(3 + k % 3, 2000 + k as u64, false).unwrap()));
    games
}

fn rk4_config() -> FlowConfig {
    FlowConfig { dt: 1e-2, ..Default::default() }
}

#[test]
fn samples_stay_on_the_hyperplane_and_audits_pass() {
    for (k, g) in corpus().iter().enumerate() {
        for x0 in uniform_ball_ensemble(g.n(), 2, 20.0, 50 + k as u64) {
            for integrator in [Integrator::Rk4, Integrator::Adaptive, Integrator::Exact] {
                let cfg = if integrator == Integrator::Rk4 { rk4_config() } else { FlowConfig::default() };
                let traj = integrator.run(g, &x0, &cfg).unwrap();
                assert!(traj.status.converged(), "game {k} {integrator:?}: {:?}", traj.status);
                for s in &traj.samples {
                    assert!(s.x.iter().sum::<f64>().abs() <= 1e-9, "game {k} {integrator:?} left X at t={}", s.t);
                }
                let report = audit_lyapunov(&traj);
                assert!(report.pass, "game {k} {integrator:?}: {report:?}");
            }
        }
    }
}

#[test]
fn exact_and_adaptive_endpoints_agree() {
    let cfg = FlowConfig::default();
    for (k, g) in corpus().iter().enumerate() {
        for x0 in uniform_ball_ensemble(g.n(), 2, 40.0, 80 + k as u64) {
            let a = integrate_exact(g, &x0, &cfg).unwrap();
            let b = integrate_adaptive(g, &x0, &cfg).unwrap();
            assert_eq!(a.status, b.status, "game {k}");
            let gap: f64 = a.last().x.iter().zip(&b.last().x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(gap < 1e-6, "game {k}: gap {gap:e}");
        }
    }
}

#[test]
fn energy_identity_holds_within_each_region() {
    for (k, g) in corpus().iter().enumerate() {
        for x0 in uniform_ball_ensemble(g.n(), 5, 30.0, 120 + k as u64) {
            let flow = RegionFlow::new(g, x0.as_slice());
            let theta0 = flow.theta(0.0);
            for tau in [1e-3, 1e-2, 0.1] {
                // only while the region is unchanged
                let xs = flow.state(tau);
                let here = cohesion::fields::evaluate(g, &xs);
                if here.aggrieved != flow.aggrieved() {
                    break;
                }
                let direct = theta0 - here.theta;
                let closed = flow.dissipated(tau);
                assert!((direct - closed).abs() <= 1e-9 * (1.0 + theta0), "game {k}: {direct} vs {closed}");
            }
        }
    }
}

#[test]
fn core_starts_are_fixed_points_for_every_integrator() {
    let g = gen_symmetric(3, -1.5).unwrap();
    for x0 in uniform_ball_ensemble(3, 20, 2.5, 7) {
        assert!(core_membership(&g, &x0, 0.0).unwrap().member);
        for integrator in [Integrator::Rk4, Integrator::Adaptive, Integrator::Exact] {
            let traj = integrator.run(&g, &x0, &FlowConfig::default()).unwrap();
            assert_eq!(traj.status, Status::ReachedCore);
            assert_eq!(traj.final_time(), 0.0);
            assert_eq!(traj.last().x, x0.as_slice());
        }
    }
}

#[test]
fn distance_to_core_decreases_along_trajectories() {
    let g = gen_random(4, 1001, true).unwrap();
    for x0 in uniform_ball_ensemble(4, 5, 50.0, 3) {
        let traj = integrate_exact(&g, &x0, &FlowConfig::default()).unwrap();
        let mut prev = f64::INFINITY;
        for s in &traj.samples {
            let d = distance_to_core(&g, &cohesion::Preimputation::new(s.x.clone()).unwrap()).unwrap();
            assert!(d <= prev + 1e-9, "distance rose from {prev} to {d}");
            prev = d;
        }
    }
}

#[test]
fn evolution_map_tracks_rk4() {
    let g = gen_random(5, 1002, true).unwrap();
    let x0 = uniform_ball_ensemble(5, 1, 10.0, 11).pop().unwrap();
    let traj = integrate_rk4(&g, &x0, &FlowConfig { dt: 1e-3, t_max: 2.0, sample_stride: 100, ..Default::default() }).unwrap();
    for s in &traj.samples {
        let e = evolve_exact(&g, &x0, s.t).unwrap();
        let gap = e.as_slice().iter().zip(&s.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-6, "t={} gap {gap:e}", s.t);
        assert!(dissatisfaction(&g, &e).unwrap() <= traj.samples[0].theta + 1e-12);
    }
}

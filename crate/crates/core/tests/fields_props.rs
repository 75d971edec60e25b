use cohesion::fields::{
    aggrieved, cohesion, dissatisfaction, evaluate, region_affine, region_lipschitz, same_region,
};
use cohesion::game::{eta, gen_random, gen_symmetric, payment, project_to_x};
use cohesion::{Coalition, Game, Preimputation};
use proptest::prelude::*;

fn game(n: usize, seed: u64) -> Game {
    gen_random(n, seed, !seed.is_multiple_of(3)).unwrap()
}

fn point(n: usize) -> impl Strategy<Value = Preimputation> {
    prop::collection::vec(-40.0f64..40.0, n).prop_map(|w| project_to_x(&w))
}

fn game_and_point() -> impl Strategy<Value = (Game, Preimputation)> {
    (3usize..=5, 0u64..40).prop_flat_map(|(n, seed)| (Just(game(n, seed)), point(n)))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn payment_is_inner_product_with_eta(n in 2usize..=6, mask in 1u32..64, x in prop::collection::vec(-50.0f64..50.0, 6)) {
        let mask = mask & ((1 << n) - 1);
        prop_assume!(mask != 0);
        let x = project_to_x(&x[..n]);
        let s = Coalition::new(mask, n).unwrap();
        let direct = payment(s, &x).unwrap();
        prop_assert!((direct - x.dot(&eta(s, n))).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn projection_onto_x_is_idempotent(w in prop::collection::vec(-1e3f64..1e3, 2..8)) {
        let once = project_to_x(&w);
        let twice = project_to_x(once.as_slice());
        prop_assert!(inf_norm(&once.as_slice().iter().zip(twice.as_slice()).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-12);
        prop_assert!(once.as_slice().iter().sum::<f64>().abs() <= 1e-9);
    }

    #[test]
    fn region_affine_form_matches_field((g, x) in game_and_point()) {
        let coll = aggrieved(&g, &x).unwrap();
        let affine = region_affine(&g, &coll).apply(x.as_slice());
        let phi = cohesion(&g, &x).unwrap();
        let gap: Vec<f64> = affine.iter().zip(phi.as_slice()).map(|(a, b)| a - b).collect();
        prop_assert!(inf_norm(&gap) <= 1e-9 * (1.0 + inf_norm(phi.as_slice())));
    }

    #[test]
    fn field_is_lipschitz_within_region((g, x) in game_and_point(), dir in prop::collection::vec(-1.0f64..1.0, 5), step in 1e-4f64..1e-1) {
        let n = g.n();
        let d = project_to_x(&dir[..n]);
        let y = project_to_x(&x.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a + step * b).collect::<Vec<_>>());
        prop_assume!(same_region(&g, &x, &y).unwrap());
        let coll = aggrieved(&g, &x).unwrap();
        let lip = region_lipschitz(&region_affine(&g, &coll));
        let (px, py) = (cohesion(&g, &x).unwrap(), cohesion(&g, &y).unwrap());
        let dphi: f64 = px.as_slice().iter().zip(py.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dphi <= lip * dx * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn field_is_continuous_across_boundaries((g, x) in game_and_point(), dir in prop::collection::vec(-1.0f64..1.0, 5)) {
        let n = g.n();
        let d = project_to_x(&dir[..n]);
        let mut prev = cohesion(&g, &x).unwrap();
        let h = 1e-7;
        for k in 1..=200 {
            let y = project_to_x(&x.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a + k as f64 * h * b).collect::<Vec<_>>());
            let cur = cohesion(&g, &y).unwrap();
            let jump = inf_norm(&prev.as_slice().iter().zip(cur.as_slice()).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(jump <= 1e-4, "jump {jump}");
            prev = cur;
        }
    }

    #[test]
    fn theta_is_convex((g, x) in game_and_point(), w in prop::collection::vec(-40.0f64..40.0, 5), lam in 0.0f64..1.0) {
        let n = g.n();
        let y = project_to_x(&w[..n]);
        let z = project_to_x(&x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| lam * a + (1.0 - lam) * b).collect::<Vec<_>>());
        let (tx, ty, tz) = (
            dissatisfaction(&g, &x).unwrap(),
            dissatisfaction(&g, &y).unwrap(),
            dissatisfaction(&g, &z).unwrap(),
        );
        let chord = lam * tx + (1.0 - lam) * ty;
        prop_assert!(tz <= chord + 1e-9 * (1.0 + chord));
    }

    #[test]
    fn phi_lies_in_x_and_vanishes_only_on_core((g, x) in game_and_point()) {
        let fp = evaluate(&g, x.as_slice());
        prop_assert!(fp.phi.iter().sum::<f64>().abs() <= 1e-9);
        if fp.aggrieved.is_empty() {
            prop_assert_eq!(fp.theta, 0.0);
            prop_assert_eq!(fp.phi_norm(), 0.0);
        } else {
            prop_assert!(fp.theta > 0.0);
        }
    }
}

#[test]
fn symmetric_game_field_points_toward_center() {
    let g = gen_symmetric(4, -2.0).unwrap();
    let x = project_to_x(&[9.0, -3.0, -3.0, -3.0]);
    let phi = cohesion(&g, &x).unwrap();
    assert!(phi[0] < 0.0);
    assert!((phi[1] - phi[2]).abs() < 1e-12 && (phi[2] - phi[3]).abs() < 1e-12);
}

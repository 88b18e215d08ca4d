use mcat_core::catalyst::{a1_adapt, a2_run, alpha_next, check_c1, lemma2_bound_check, CatalystConfig};
use mcat_core::data::{generate_ball_data, generate_sphere_data};
use mcat_core::diagnostics::estimate_grad_dr_bound;
use mcat_core::solver::{solve_subproblem, LineSearchConfig, StopReason};
use mcat_core::{
    closed_form_extrinsic_mean, Error, ExtrinsicFrechet, IntrinsicFrechet, Manifold, RingObjective, Sphere, SpherePoint,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn e(d: usize, i: usize) -> SpherePoint {
    SpherePoint::basis(d, i)
}

/// Armijo constant that rejects overshooting steps; see the solver tests.
fn strict() -> LineSearchConfig {
    LineSearchConfig {
        sufficient_decrease: 0.5,
        ..Default::default()
    }
}

fn ring(d: usize) -> (Sphere, RingObjective, SpherePoint) {
    let m = Sphere::new(d);
    let c = e(d + 1, 0);
    let start = m.retract(&c, &m.scale(&e(d + 1, 1).into_inner(), 0.1));
    (m, RingObjective::new(c, 1.0, 1.0), start)
}

#[test]
fn alpha_examples() {
    assert!((alpha_next(1.0) - 0.6180339887).abs() < 1e-10);
    let mut a = 1.0;
    for _ in 0..1000 {
        let next = alpha_next(a);
        assert!(next > 0.0 && next < a);
        assert!(((1.0 - next) / (next * next) - 1.0 / (a * a)).abs() <= 1e-12 * (1.0 / (a * a)).max(1.0));
        a = next;
    }
}

#[test]
fn c1_holds_trivially_at_a_stationary_point() {
    let m = Sphere::new(2);
    let f = ExtrinsicFrechet::new(&[e(3, 0)]).unwrap();
    let r = check_c1(&f, &m, 0.1, &e(3, 0), &e(3, 0)).unwrap();
    assert!(r.descent && r.stationarity);
}

#[test]
fn c1_holds_after_a_long_inner_solve() {
    let m = Sphere::new(9);
    let data = generate_sphere_data(100, 9, 2).unwrap();
    let f = ExtrinsicFrechet::new(&data).unwrap();
    let prev = e(10, 0);
    let bar = solve_subproblem(&f, &m, 0.1, &prev, 50, &strict()).unwrap();
    let r = check_c1(&f, &m, 0.1, &bar, &prev).unwrap();
    assert!(r.holds(), "{r:?}");
}

#[test]
fn c1_descent_fails_uphill() {
    let m = Sphere::new(2);
    let f = ExtrinsicFrechet::new(&[e(3, 0)]).unwrap();
    let prev = SpherePoint::normalize(DVector::from_vec(vec![1.0, 0.2, 0.0])).unwrap();
    let uphill = SpherePoint::normalize(DVector::from_vec(vec![1.0, 0.5, 0.0])).unwrap();
    assert!(!check_c1(&f, &m, 0.1, &uphill, &prev).unwrap().descent);
}

#[test]
fn a1_rejects_a_zero_budget() {
    let m = Sphere::new(2);
    let f = ExtrinsicFrechet::new(&[e(3, 0)]).unwrap();
    assert!(a1_adapt(&f, &m, &e(3, 1), 0.1, 0, 40, &strict())
        .unwrap_err()
        .is_config());
}

#[test]
fn a1_keeps_kappa_on_a_convex_objective() {
    let m = Sphere::new(19);
    let data = generate_sphere_data(1000, 19, 5).unwrap();
    let f = ExtrinsicFrechet::new(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let theta = m.random_point(&mut rng);
        let out = a1_adapt(&f, &m, &theta, 0.1, 5, 40, &strict()).unwrap();
        assert_eq!(out.doublings, 0);
        assert_eq!(out.kappa, 0.1);
        assert!(out.c1.holds());
    }
}

#[test]
fn a1_doubles_kappa_on_a_weakly_convex_objective() {
    let (m, f, start) = ring(9);
    let out = a1_adapt(&f, &m, &start, 0.1, 5, 40, &LineSearchConfig::default()).unwrap();
    assert!(out.doublings >= 1);
    assert_eq!(out.kappa, 0.1 * 2f64.powi(out.doublings as i32));
    assert!(out.c1.holds());
}

#[test]
fn a1_reports_exhausted_doublings() {
    let (m, f, start) = ring(9);
    let err = a1_adapt(&f, &m, &start, 0.1, 5, 1, &LineSearchConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Adaptation { doublings: 1, .. }), "{err:?}");
}

#[test]
fn a2_stops_at_once_from_the_optimum() {
    let m = Sphere::new(4);
    let x = SpherePoint::normalize(DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.5])).unwrap();
    let f = IntrinsicFrechet::new(std::slice::from_ref(&x)).unwrap();
    let (_, trace) = a2_run(&f, &m, &x, &CatalystConfig::default()).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].k, 1);
    assert_eq!(trace.records[0].grad_norm, 0.0);
    assert_eq!(trace.stop, StopReason::Converged);
}

#[test]
fn a2_finds_the_extrinsic_mean() {
    let m = Sphere::new(19);
    let data = generate_sphere_data(1000, 19, 2).unwrap();
    let f = ExtrinsicFrechet::new(&data).unwrap();
    let mean = closed_form_extrinsic_mean(&data).unwrap();
    let cfg = CatalystConfig {
        eps: 1e-8,
        ..Default::default()
    };
    let (p, trace) = a2_run(&f, &m, &data[0], &cfg).unwrap();
    assert!((p.coords() - mean.coords()).norm() <= 1e-6);
    assert_eq!(trace.stop, StopReason::Converged);
}

#[test]
fn a2_checkpoints_pass_c1_offline() {
    let (m, f, start) = ring(9);
    let cfg = CatalystConfig {
        max_outer: 30,
        ..Default::default()
    };
    let (_, trace) = a2_run(&f, &m, &start, &cfg).unwrap();
    assert_eq!(trace.checkpoints.len(), trace.records.len());
    for (cp, rec) in trace.checkpoints.iter().zip(&trace.records) {
        assert_eq!(cp.kappa, rec.kappa);
        let r = check_c1(&f, &m, cp.kappa, &cp.theta_bar, &cp.theta_prev).unwrap();
        // The last record of a stalled run keeps its failing candidate.
        let stalled_end = trace.stop == StopReason::Stalled && rec.k == trace.records.len();
        assert!(r.holds() || stalled_end, "k = {}: {r:?}", rec.k);
    }
}

#[test]
fn a2_rejects_invalid_settings() {
    let m = Sphere::new(2);
    let f = ExtrinsicFrechet::new(&[e(3, 0)]).unwrap();
    for cfg in [
        CatalystConfig {
            t: 0,
            ..Default::default()
        },
        CatalystConfig {
            kappa0: -1.0,
            ..Default::default()
        },
        CatalystConfig {
            kappa_cvx: Some(0.0),
            ..Default::default()
        },
        CatalystConfig {
            s: 0,
            ..Default::default()
        },
    ] {
        assert!(a2_run(&f, &m, &e(3, 1), &cfg).unwrap_err().is_config(), "{cfg:?}");
    }
}

#[test]
fn grad_bound_check_at_the_center_is_the_gradient_identity() {
    let m = Sphere::new(9);
    let data = generate_sphere_data(20, 9, 1).unwrap();
    let f = ExtrinsicFrechet::new(&data).unwrap();
    assert!(lemma2_bound_check(&f, &m, 0.7, &e(10, 3), &e(10, 3), 0.0).unwrap());
}

#[test]
fn grad_bound_check_is_sharp_enough_to_catch_a_small_bound() {
    let m = Sphere::new(9);
    let (c, data) = generate_ball_data(30, 9, 0.5, 4).unwrap();
    let f = IntrinsicFrechet::new(&data).unwrap();
    let k = estimate_grad_dr_bound(&m, &c, 0.5, 60, 3).unwrap().value;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut ok, mut tight_violations) = (0, 0);
    for _ in 0..100 {
        let v = m.random_tangent(&c, &mut rng);
        let center = m.retract(&c, &m.scale(&v, rng.random::<f64>() * 0.5));
        let kappa = 0.1 + 10.0 * rng.random::<f64>();
        // A near-minimizer of h_κ(·, ϑ), where grad f and κ∇d_R² nearly cancel.
        let theta = solve_subproblem(&f, &m, kappa, &center, 30, &strict()).unwrap();
        ok += usize::from(lemma2_bound_check(&f, &m, kappa, &theta, &center, k).unwrap());
        tight_violations += usize::from(!lemma2_bound_check(&f, &m, kappa, &theta, &center, k / 10.0).unwrap());
    }
    assert_eq!(ok, 100);
    assert!(tight_violations > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn catalyst_traces_are_monotone(seed in 0u64..1000, n in 2usize..60, d in 2usize..10) {
        let (_, data) = generate_ball_data(n, d, 0.8, seed).unwrap();
        let m = Sphere::new(d);
        let f = IntrinsicFrechet::new(&data).unwrap();
        let cfg = CatalystConfig { max_outer: 25, ..Default::default() };
        let (_, trace) = a2_run(&f, &m, &data[0], &cfg).unwrap();
        prop_assert!(trace.records[0].f_value <= trace.f0);
        for w in trace.records.windows(2) {
            prop_assert!(w[1].f_value <= w[0].f_value);
        }
    }

    #[test]
    fn alpha_stays_within_its_bounds(k in 1usize..2000) {
        let mut a = 1.0;
        for _ in 1..k {
            a = alpha_next(a);
        }
        let kf = k as f64;
        prop_assert!(2f64.sqrt() / (kf + 2.0) <= a && a <= 2.0 / (kf + 1.0));
    }
}

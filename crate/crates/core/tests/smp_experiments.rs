mod common;

use common::*;
use nalgebra::DVector;
use roughctl_core::lq::{ControlLaw, ControlProcess, LqSpec};
use roughctl_core::rough_path::translate;
use roughctl_core::rsde::solve_with_increments;
use roughctl_core::smp::{
    adjoint_gradient, cost_monte_carlo, finite_difference_gradient, gradient_check, ito_lyons_convergence,
    pathwise_equivalence, perturbation_test, EquivalenceSetup, LqContext, PerturbDirection, PerturbationFamily,
};
use roughctl_core::stats::MeanEstimate;
use roughctl_core::{lift_brownian_stratonovich, TimeGrid, TransformOptions};

fn context(spec: &LqSpec, steps: usize, seed: u64) -> LqContext {
    let driver = lift_brownian_stratonovich(seed, 1, FINE, &TimeGrid::uniform(spec.horizon, steps).unwrap()).unwrap();
    LqContext::new(spec, &driver, &TransformOptions::default()).unwrap()
}

fn deterministic_spec() -> LqSpec {
    let mut spec = LqSpec::minimal(0.8, 1.0);
    spec.control_drift = 1.0.into();
    spec.state_cost = 1.0.into();
    spec.terminal_cost = 0.7;
    spec.rough_forcing = 0.4.into();
    spec
}

#[test]
fn deterministic_cost_matches_direct_quadrature() {
    let spec = deterministic_spec();
    let steps = 256;
    let ctx = context(&spec, steps, 2);
    let u: Vec<f64> = ctx.grid().times().iter().map(|t| (2.0 * t).cos() - 0.5).collect();
    let rep = cost_monte_carlo(&ctx, &ControlProcess::new(ControlLaw::OpenLoop(&u)), 16, 9).unwrap();
    assert_eq!(rep.std_err(), 0.0);

    let driver = lift_brownian_stratonovich(2, 1, FINE, ctx.grid()).unwrap();
    let sys = scalar_affine(0.0, 0.0, 0.0, 0.0, 0.0, 0.4, steps + 1);
    let sys = roughctl_core::AffineRoughSystem {
        drift: std::sync::Arc::new(|_t, _x: &DVector<f64>, u: &DVector<f64>| u.clone()),
        ..sys
    };
    let grid = ctx.grid().clone();
    let control = |t: f64, _x: &DVector<f64>| v1(u[grid.node_of(t).unwrap()]);
    let traj = solve_with_increments(&sys, &driver, &v1(0.8), &control, vec![v1(0.0); steps]).unwrap();
    let mut cost = 0.0;
    for k in 0..steps {
        cost += grid.dt(k) * 0.5 * (traj.x[k][0].powi(2) + u[k] * u[k]);
    }
    cost += 0.7 * traj.terminal()[0].powi(2);
    assert!((rep.mean() - cost).abs() < 1e-6, "{} vs {cost}", rep.mean());
}

#[test]
fn doubling_samples_halves_variance_of_mean() {
    let ctx = context(&benchmark_spec(), 64, 1);
    let optimal = ctx.optimal().unwrap();
    let se2 = |n: usize| -> f64 {
        let v: Vec<f64> = (0..20).map(|m| cost_monte_carlo(&ctx, &optimal, n, 100 + m).unwrap().std_err().powi(2)).collect();
        MeanEstimate::from_samples(&v).mean
    };
    let ratio = se2(2000) / se2(1000);
    assert!((0.4..0.6).contains(&ratio), "{ratio}");
}

#[test]
fn finite_difference_of_quadratic_toy() {
    // x_T = x0 + T u for constant u, so J(u) = N T u^2 / 2 + G (x0 + T u)^2
    let mut spec = LqSpec::minimal(0.6, 1.0);
    spec.control_drift = 1.0.into();
    spec.control_cost = 2.0.into();
    spec.terminal_cost = 0.75;
    let ctx = context(&spec, 128, 0);
    let n = ctx.grid().len();
    for c in [-1.0, 0.0, 0.3, 2.0] {
        let base_u = vec![c; n];
        let base = ControlProcess::new(ControlLaw::OpenLoop(&base_u));
        let v = PerturbDirection::Path(vec![1.0; n]);
        let fd = finite_difference_gradient(&ctx, &base, &v, 0.05, 4, 1).unwrap();
        let want = 2.0 * c + 2.0 * 0.75 * (0.6 + c);
        assert!((fd.mean - want).abs() < 1e-6, "{} vs {want}", fd.mean);
        let adj = adjoint_gradient(&ctx, &base, &v, 4, 1).unwrap();
        assert!((adj.mean - want).abs() < 1e-2 * (1.0 + want.abs()), "{} vs {want}", adj.mean);
    }
}

#[test]
fn shifted_optimum_has_positive_derivative() {
    let mut spec = benchmark_spec();
    spec.state_cost = 0.0.into();
    let ctx = context(&spec, 256, 4);
    let n = ctx.grid().len();
    let base = PerturbDirection::Path(vec![0.4; n]).apply(&ctx.optimal().unwrap(), 1.0);
    let v = PerturbDirection::Path(vec![1.0; n]);
    let rep = gradient_check(&ctx, &base, &[v], 0.1, 4000, 8).unwrap();
    let e = &rep.entries[0];
    assert!(e.adjoint.mean > 0.0 && e.fd.mean > 0.0);
    assert!(e.relative_mismatch.unwrap() < 0.05, "{e:?}");
    assert!(e.richardson_consistent);
}

#[test]
fn zero_perturbation_reproduces_baseline() {
    let ctx = context(&benchmark_spec(), 64, 3);
    let family = PerturbationFamily { n_directions: 2, eps: vec![0.0, 0.5], modes: 3, adversarial: true };
    let rep = perturbation_test(&ctx, &family, 500, 6).unwrap();
    for e in rep.entries.iter().filter(|e| e.eps == 0.0) {
        assert_eq!(e.cost, rep.baseline);
        assert_eq!(e.paired_gap.mean, 0.0);
    }
    assert!(rep.all_pass);
}

#[test]
fn equivalence_is_degenerate_without_rough_part() {
    let mut spec = benchmark_spec();
    spec.rough_linear = 0.0.into();
    spec.rough_forcing = 0.0.into();
    let setup = EquivalenceSetup {
        mesh: 1.0 / 64.0,
        fine_mesh: 1.0 / 1024.0,
        n_outer: 10,
        n_inner: 50,
        transform: TransformOptions::default(),
    };
    let rep = pathwise_equivalence(&spec, &setup, 3).unwrap();
    assert!(rep.value_variance < 1e-10);
    assert_eq!((rep.nested_failures, rep.joint_failures), (0, 0));
}

#[test]
fn single_driver_value_is_seed_consistent() {
    let ctx = context(&benchmark_spec(), 128, 21);
    let optimal = ctx.optimal().unwrap();
    let a = cost_monte_carlo(&ctx, &optimal, 4000, 11).unwrap();
    let b = cost_monte_carlo(&ctx, &optimal, 4000, 12).unwrap();
    assert!((a.mean() - b.mean()).abs() < 2.0 * a.estimate.combined_err(&b.estimate), "{:?} {:?}", a.estimate, b.estimate);
    assert_ne!(a.seeds, b.seeds);
    assert_eq!(a.meta.driver_hash, b.meta.driver_hash);
}

#[test]
fn constant_driver_sequence_has_zero_gaps() {
    let driver = lift_brownian_stratonovich(1, 1, 1.0 / 1024.0, &TimeGrid::uniform(1.0, 128).unwrap()).unwrap();
    let sys = scalar_affine(-0.3, 0.1, 0.2, 0.1, 1.0, 0.2, 129);
    let table = ito_lyons_convergence(&sys, &vec![driver; 3], &v1(1.0), &zero_control, 4, 0.45).unwrap();
    assert!(table.rows.iter().all(|r| r.gap == 0.0 && r.distance == 0.0));
    assert!(table.monotone);
}

#[test]
fn linear_response_to_smooth_translation() {
    let grid = TimeGrid::uniform(1.0, 1024).unwrap();
    let driver = lift_brownian_stratonovich(7, 1, FINE, &grid).unwrap();
    let gamma: Vec<_> = grid.times().iter().map(|&t| v1((std::f64::consts::PI * t).sin())).collect();
    let sys = scalar_affine(-0.3, 0.1, 0.2, 0.1, 1.0, 0.2, grid.len());
    let mut drivers: Vec<_> = [0.4, 0.2, 0.1, 0.05].iter().map(|&e| translate(&driver, &gamma, e).unwrap()).collect();
    drivers.push(driver);
    let table = ito_lyons_convergence(&sys, &drivers, &v1(1.0), &zero_control, 3, 0.45).unwrap();
    assert!(table.monotone);
    for w in table.rows[..4].windows(2) {
        let ratio = w[1].gap / w[0].gap;
        assert!((0.4..0.6).contains(&ratio), "{:?}", table.rows);
    }
}

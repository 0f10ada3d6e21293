mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use roughctl_core::rng::brownian_increments;
use roughctl_core::rsde::{self_convergence_order, ConvergenceOrder, DiffusionFn, DriftFn};
use roughctl_core::{
    lift_brownian_stratonovich, solve_linear_rde, solve_sample, AffineRoughSystem, RoughCoefficients, TimeGrid,
};

fn ode_system(nodes: usize) -> AffineRoughSystem {
    let drift: DriftFn = Arc::new(|_t, x: &DVector<f64>, _u: &DVector<f64>| -x);
    let diffusion: DiffusionFn = Arc::new(|_t, _x: &DVector<f64>, _u: &DVector<f64>| m1(0.0));
    AffineRoughSystem::new(1, 1, drift, diffusion, RoughCoefficients::zeros(1, 1, nodes)).unwrap()
}

#[test]
fn pure_brownian_reproduces_sample_path() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let driver = smooth_driver(1.0, 64, |t| t);
    let sys = scalar_affine(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, grid.len());
    let traj = solve_sample(&sys, &driver, &v1(0.0), &zero_control, 21).unwrap();
    let dw = brownian_increments(21, 1, &grid);
    let mut w = 0.0;
    for k in 0..grid.intervals() {
        w += dw[k][0];
        assert_eq!(traj.x[k + 1][0], w);
    }
}

#[test]
fn pure_rough_exponential() {
    let driver = smooth_driver(1.0, 1 << 12, |t| 2.0 * t * t);
    let sys = AffineRoughSystem::pure_rough(RoughCoefficients::scalar_constant(0.5, 0.0, driver.grid().len()));
    let traj = solve_sample(&sys, &driver, &v1(1.5), &zero_control, 0).unwrap();
    assert!((traj.terminal()[0] - 1.5 * std::f64::consts::E).abs() < 1e-4);
    for (k, x) in traj.x.iter().enumerate() {
        assert_eq!(traj.zprime[k][(0, 0)], 0.5 * x[0]);
    }
}

#[test]
fn linear_ode_closed_form() {
    let driver = smooth_driver(1.0, 1 << 12, |t| t);
    let sys = ode_system(driver.grid().len());
    let traj = solve_sample(&sys, &driver, &v1(2.0), &zero_control, 0).unwrap();
    assert!((traj.terminal()[0] - 2.0 * (-1f64).exp()).abs() < 1e-4);
}

#[test]
fn zero_linear_rde_keeps_initial_value() {
    let driver = lift_brownian_stratonovich(1, 1, 1.0 / 1024.0, &TimeGrid::uniform(1.0, 32).unwrap()).unwrap();
    let traj = solve_linear_rde(&RoughCoefficients::zeros(1, 1, 33), &driver, &v1(0.7)).unwrap();
    assert!(traj.x.iter().all(|x| x[0] == 0.7));
}

#[test]
fn stratonovich_exponential_on_brownian_lift() {
    let grid = TimeGrid::with_mesh(1.0, 1.0 / 16384.0).unwrap();
    for seed in 0..5 {
        let driver = lift_brownian_stratonovich(seed, 1, 1.0 / 16384.0, &grid).unwrap();
        let traj = solve_linear_rde(&RoughCoefficients::scalar_constant(1.0, 0.0, grid.len()), &driver, &v1(1.0)).unwrap();
        let exact = driver.increment(0, grid.len() - 1)[0].exp();
        assert!(((traj.terminal()[0] - exact) / exact).abs() < 1e-2);
    }
}

#[test]
fn commuting_matrix_family_matches_exponential() {
    let steps = 1 << 12;
    let eta = |t: f64| (2.0 * t).sin() + t;
    let driver = smooth_driver(1.0, steps, eta);
    let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let fam = |t: f64| DMatrix::identity(2, 2) * 0.3 + &j * (0.2 * t.cos());
    let grid = driver.grid().clone();
    let rough = RoughCoefficients::new(
        grid.times().iter().map(|&t| vec![fam(t)]).collect(),
        vec![vec![DMatrix::zeros(2, 2)]; grid.len()],
        vec![DMatrix::zeros(2, 1); grid.len()],
        vec![DMatrix::zeros(2, 1); grid.len()],
    )
    .unwrap();
    let x0 = DVector::from_vec(vec![1.0, -0.5]);
    let traj = solve_linear_rde(&rough, &driver, &x0).unwrap();
    // int F d eta for the commuting family, by Simpson's rule
    let n = 1 << 14;
    let h = 1.0 / n as f64;
    let deta = |t: f64| 2.0 * (2.0 * t).cos() + 1.0;
    let mut gen = DMatrix::zeros(2, 2);
    for k in 0..=n {
        let t = k as f64 * h;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        gen += fam(t) * (w * deta(t) * h / 3.0);
    }
    let exact = gen.exp() * &x0;
    assert!((traj.terminal() - exact).amax() < 1e-3);
}

#[test]
fn self_convergence_orders() {
    let fine = 1.0 / 4096.0;
    let meshes = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0, 1.0 / 512.0];
    let grid = TimeGrid::with_mesh(1.0, fine).unwrap();

    let ode = ode_system(grid.len());
    let smooth = smooth_driver(1.0, 4096, |t| t);
    let order = self_convergence_order(&ode, &smooth, &v1(1.0), &zero_control, 0, &meshes).unwrap().order();
    assert!(order >= 0.95, "{order}");

    let rough = AffineRoughSystem::pure_rough(RoughCoefficients::scalar_constant(1.0, 0.0, grid.len()));
    let brownian = lift_brownian_stratonovich(3, 1, fine, &grid).unwrap();
    let order = self_convergence_order(&rough, &brownian, &v1(1.0), &zero_control, 0, &meshes).unwrap().order();
    assert!(order >= 0.4, "{order}");

    let zero = AffineRoughSystem::pure_rough(RoughCoefficients::zeros(1, 1, grid.len()));
    let res = self_convergence_order(&zero, &brownian, &v1(0.0), &zero_control, 0, &meshes).unwrap();
    assert!(matches!(res, ConvergenceOrder::Exact { .. }));
}

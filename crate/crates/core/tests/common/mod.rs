#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use roughctl_core::rsde::{DiffusionFn, DriftFn};
use roughctl_core::{lift_piecewise_linear, AffineRoughSystem, GridRoughPath, LqSpec, RoughCoefficients, TimeGrid};

pub const FINE: f64 = 1.0 / 16384.0;

pub fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

pub fn m1(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

/// Canonical lift of a scalar smooth path sampled on a uniform grid of `[0, T]`.
pub fn smooth_driver(horizon: f64, steps: usize, f: impl Fn(f64) -> f64) -> GridRoughPath {
    let grid = TimeGrid::uniform(horizon, steps).unwrap();
    let s: Vec<_> = grid.times().iter().map(|&t| v1(f(t))).collect();
    lift_piecewise_linear(&s, &grid).unwrap()
}

pub fn zero_control(_t: f64, _x: &DVector<f64>) -> DVector<f64> {
    DVector::zeros(1)
}

/// Scalar affine system `dX = (a X + b0) dt + (c X + s0) dW + (F X + f) d eta`
/// with constant coefficients.
pub fn scalar_affine(a: f64, b0: f64, c: f64, s0: f64, big_f: f64, f: f64, nodes: usize) -> AffineRoughSystem {
    let drift: DriftFn = Arc::new(move |_t, x: &DVector<f64>, _u: &DVector<f64>| v1(a * x[0] + b0));
    let diffusion: DiffusionFn = Arc::new(move |_t, x: &DVector<f64>, _u: &DVector<f64>| m1(c * x[0] + s0));
    AffineRoughSystem::new(1, 1, drift, diffusion, RoughCoefficients::scalar_constant(big_f, f, nodes)).unwrap()
}

/// Scalar LQ problem inside the closed-form scope used across the suite.
pub fn benchmark_spec() -> LqSpec {
    let mut s = LqSpec::minimal(1.0, 1.0);
    s.control_drift = 1.0.into();
    s.control_vol = 0.3.into();
    s.state_cost = 1.0.into();
    s.terminal_cost = 0.5;
    s.rough_linear = 1.0.into();
    s.rough_forcing = 0.2.into();
    s
}

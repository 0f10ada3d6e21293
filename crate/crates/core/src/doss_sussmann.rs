//! Affine rough Doss–Sussmann transform.
//!
//! For `d phi = (F phi + f) d eta` the flow is affine, `phi_t(x) = A_t x + zeta_t`,
//! with
//!
//! ```text
//! dA      =  F A d eta,             A_0      = I
//! dA^{-1} = -A^{-1} F d eta,        A^{-1}_0 = I
//! dzeta   = (F zeta + f) d eta,     zeta_0   = 0
//! ```
//!
//! `A^{-1}` is integrated from its own equation, so the node-wise product
//! `A^{-1} A - I` is an independent consistency check rather than an identity.
//! Substituting `X = phi(X~)` removes the rough integral from the dynamics:
//! `X~` solves a classical SDE with coefficients `A^{-1} b(phi(x~), u)` and
//! `A^{-1} sigma(phi(x~), u)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::brownian_increments;
use crate::rough_path::GridRoughPath;
use crate::rsde::{
    expm, solve_linear_rde_with, solve_with_increments, AffineRoughSystem, ControlFn, DiffusionFn,
    DriftFn, LinearScheme, RoughCoefficients, Trajectory,
};

/// Default bound on `max_k |A^{-1}_k A_k - I|`.
pub const DEFAULT_DEFECT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformOptions {
    pub scheme: LinearScheme,
    pub defect_tolerance: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self { scheme: LinearScheme::Exponential, defect_tolerance: DEFAULT_DEFECT_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformData {
    pub grid: TimeGrid,
    pub a: Vec<DMatrix<f64>>,
    pub ainv: Vec<DMatrix<f64>>,
    pub zeta: Vec<DVector<f64>>,
    pub product_defect: f64,
    /// Node at which `product_defect` is attained.
    pub defect_node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

impl TransformData {
    pub fn dim(&self) -> usize {
        self.zeta[0].len()
    }

    /// Scalar views for one-dimensional states.
    pub fn a_scalar(&self, k: usize) -> f64 {
        self.a[k][(0, 0)]
    }

    pub fn ainv_scalar(&self, k: usize) -> f64 {
        self.ainv[k][(0, 0)]
    }

    pub fn zeta_scalar(&self, k: usize) -> f64 {
        self.zeta[k][0]
    }

    /// `|A^{-1}_k A_k - I|` (max entry) at every node.
    pub fn node_defects(&self) -> Vec<f64> {
        let n = self.dim();
        self.a
            .iter()
            .zip(&self.ainv)
            .map(|(a, ai)| (ai * a - DMatrix::identity(n, n)).amax())
            .collect()
    }

    /// The identity transform on `grid` (`F = f = 0`).
    pub fn identity(grid: &TimeGrid, dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            a: vec![DMatrix::identity(dim, dim); grid.len()],
            ainv: vec![DMatrix::identity(dim, dim); grid.len()],
            zeta: vec![DVector::zeros(dim); grid.len()],
            product_defect: 0.0,
            defect_node: 0,
        }
    }
}

fn davie_matrix_steps(
    rough: &RoughCoefficients,
    driver: &GridRoughPath,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = rough.dim_x();
    let d = rough.dim_eta();
    let grid = driver.grid();
    let mut a = vec![DMatrix::identity(n, n)];
    let mut ainv = vec![DMatrix::identity(n, n)];
    for k in 0..grid.intervals() {
        let dx = driver.step(k);
        let l2 = &driver.level2()[k];
        let f = rough.linear(k);
        let fp = rough.linear_prime(k);
        // left action on A, right action on A^{-1}
        let mut step_a = DMatrix::identity(n, n);
        let mut step_inv = DMatrix::identity(n, n);
        for j in 0..d {
            step_a += &f[j] * dx[j];
            step_inv -= &f[j] * dx[j];
        }
        for i in 0..d {
            for j in 0..d {
                let w = l2[(i, j)];
                if w == 0.0 {
                    continue;
                }
                step_a += (&fp[j * d + i] + &f[j] * &f[i]) * w;
                step_inv += (&f[i] * &f[j] - &fp[j * d + i]) * w;
            }
        }
        let next_a = &step_a * &a[k];
        let next_inv = &ainv[k] * &step_inv;
        a.push(next_a);
        ainv.push(next_inv);
    }
    (a, ainv)
}

fn exponential_matrix_steps(
    rough: &RoughCoefficients,
    driver: &GridRoughPath,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = rough.dim_x();
    let grid = driver.grid();
    let mut a = vec![DMatrix::identity(n, n)];
    let mut ainv = vec![DMatrix::identity(n, n)];
    for k in 0..grid.intervals() {
        let gen = rough.log_generator(k, driver).view((0, 0), (n, n)).into_owned();
        let fwd = expm(&gen);
        let bwd = expm(&(-gen));
        let next_a = &fwd * &a[k];
        let next_inv = &ainv[k] * &bwd;
        a.push(next_a);
        ainv.push(next_inv);
    }
    (a, ainv)
}

/// Integrate `A`, `A^{-1}` and `zeta` along `driver`.
pub fn build_transform(
    rough: &RoughCoefficients,
    driver: &GridRoughPath,
    options: &TransformOptions,
) -> Result<TransformData> {
    if rough.nodes() != driver.grid().len() || rough.dim_eta() != driver.dim() {
        return Err(Error::Dimension("coefficient grid does not match the driver".into()));
    }
    if !(options.defect_tolerance > 0.0) {
        return Err(Error::Parameter("defect tolerance must be positive".into()));
    }
    let (a, ainv) = match options.scheme {
        LinearScheme::Davie => davie_matrix_steps(rough, driver),
        LinearScheme::Exponential => exponential_matrix_steps(rough, driver),
    };
    let zeta = solve_linear_rde_with(options.scheme, rough, driver, &DVector::zeros(rough.dim_x()))?.x;
    let mut data = TransformData {
        grid: driver.grid().clone(),
        a,
        ainv,
        zeta,
        product_defect: 0.0,
        defect_node: 0,
    };
    let defects = data.node_defects();
    for (k, &e) in defects.iter().enumerate() {
        if !e.is_finite() {
            return Err(Error::Blowup { interval: k.saturating_sub(1) });
        }
        if e > data.product_defect {
            data.product_defect = e;
            data.defect_node = k;
        }
    }
    if data.product_defect > options.defect_tolerance {
        return Err(Error::Inversion {
            node: data.defect_node,
            defect: data.product_defect,
            tolerance: options.defect_tolerance,
        });
    }
    Ok(data)
}

/// `A_k x + zeta_k` or `A^{-1}_k x - A^{-1}_k zeta_k`.
pub fn phi_map(transform: &TransformData, k: usize, x: &DVector<f64>, direction: Direction) -> Result<DVector<f64>> {
    if k >= transform.grid.len() {
        return Err(Error::Index(format!("node {k} out of range")));
    }
    if x.len() != transform.dim() {
        return Err(Error::Dimension("state dimension differs from transform".into()));
    }
    Ok(match direction {
        Direction::Forward => &transform.a[k] * x + &transform.zeta[k],
        Direction::Inverse => &transform.ainv[k] * (x - &transform.zeta[k]),
    })
}

/// Transformed drift and diffusion, evaluated by exact node lookup.
#[derive(Clone)]
pub struct TransformedCoefficients<'a> {
    transform: &'a TransformData,
    drift: DriftFn,
    diffusion: DiffusionFn,
}

impl TransformedCoefficients<'_> {
    /// `A^{-1}_t b(t, phi_t(x~), u)`.
    pub fn drift(&self, t: f64, xt: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.transform.grid.node_of(t)?;
        let x = phi_map(self.transform, k, xt, Direction::Forward)?;
        Ok(&self.transform.ainv[k] * (self.drift)(t, &x, u))
    }

    /// `A^{-1}_t sigma(t, phi_t(x~), u)`.
    pub fn diffusion(&self, t: f64, xt: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let k = self.transform.grid.node_of(t)?;
        let x = phi_map(self.transform, k, xt, Direction::Forward)?;
        Ok(&self.transform.ainv[k] * (self.diffusion)(t, &x, u))
    }
}

pub fn transform_coefficients<'a>(
    transform: &'a TransformData,
    drift: DriftFn,
    diffusion: DiffusionFn,
) -> TransformedCoefficients<'a> {
    TransformedCoefficients { transform, drift, diffusion }
}

/// Euler–Maruyama solve of the transformed classical SDE; the control law
/// sees the original state `phi(x~)`. Returned states are in `x~` coordinates.
pub fn solve_transformed(
    coeffs: &TransformedCoefficients<'_>,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    w_increments: &[DVector<f64>],
) -> Result<Trajectory> {
    let grid = &coeffs.transform.grid;
    if w_increments.len() != grid.intervals() {
        return Err(Error::Dimension("one Brownian increment per interval required".into()));
    }
    let mut xt = vec![phi_map(coeffs.transform, 0, x0, Direction::Inverse)?];
    let mut controls = Vec::with_capacity(grid.len());
    for k in 0..grid.intervals() {
        let t = grid.t(k);
        let x = phi_map(coeffs.transform, k, &xt[k], Direction::Forward)?;
        let u = control(t, &x);
        let mut next = &xt[k] + coeffs.drift(t, &xt[k], &u)? * grid.dt(k);
        if !w_increments[k].is_empty() {
            next += coeffs.diffusion(t, &xt[k], &u)? * &w_increments[k];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { interval: k });
        }
        controls.push(u);
        xt.push(next);
    }
    let last = grid.len() - 1;
    let x_last = phi_map(coeffs.transform, last, &xt[last], Direction::Forward)?;
    controls.push(control(grid.horizon(), &x_last));
    let dim = xt[0].len();
    Ok(Trajectory {
        grid: grid.clone(),
        zprime: vec![DMatrix::zeros(dim, 0); xt.len()],
        x: xt,
        w_increments: w_increments.to_vec(),
        controls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    /// `max_k |X_k - phi_k(X~_k)|`.
    pub discrepancy: f64,
    /// `discrepancy / max_k |X_k|`.
    pub relative: f64,
    pub product_defect: f64,
}

/// Solve the rough SDE directly and through the transform with the same
/// Brownian increments, and compare node by node.
pub fn crosscheck_transform(
    system: &AffineRoughSystem,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    seed: u64,
    options: &TransformOptions,
) -> Result<CrosscheckReport> {
    let dw = brownian_increments(seed, system.dim_w, driver.grid());
    let direct = solve_with_increments(system, driver, x0, control, dw.clone())?;
    let transform = build_transform(&system.rough, driver, options)?;
    let coeffs = transform_coefficients(&transform, system.drift.clone(), system.diffusion.clone());
    let tilde = solve_transformed(&coeffs, x0, control, &dw)?;
    let mut discrepancy: f64 = 0.0;
    for k in 0..driver.grid().len() {
        let mapped = phi_map(&transform, k, &tilde.x[k], Direction::Forward)?;
        discrepancy = discrepancy.max((&direct.x[k] - mapped).norm());
    }
    let scale = direct.sup_norm();
    Ok(CrosscheckReport {
        discrepancy,
        relative: if scale > 0.0 { discrepancy / scale } else { discrepancy },
        product_defect: transform.product_defect,
    })
}

//! Affine rough SDEs `dX = b dt + sigma dW + (F X + f) d eta`.
//!
//! Each interval is advanced with the second-order (Davie) step
//!
//! ```text
//! x + b dt + sigma dW + (F x + f) d eta + (F' x + F (F x + f) + f') eta2
//! ```
//!
//! whose level-two weight is the Gubinelli derivative of the solution's own
//! derivative `X' = F X + f`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{aggregate_increments, brownian_increments};
use crate::rough_path::GridRoughPath;

pub type DriftFn = Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type DiffusionFn =
    Arc<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Control law `(t, x) -> u`.
pub type ControlFn<'a> = &'a (dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync);

/// Node sequences of the affine rough coefficient `(F, F', f, f')`.
///
/// With a `d`-dimensional driver, `F` is a list of `d` matrices `F^j` of
/// shape `d_X x d_X`; `linear_prime[j * d + i]` is the derivative of `F^j`
/// along `eta^i`. `forcing` is `d_X x d` (column `j` is `f^j`) and column
/// `j * d + i` of `forcing_prime` is the derivative of `f^j` along `eta^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughCoefficients {
    dim_x: usize,
    dim_eta: usize,
    linear: Vec<Vec<DMatrix<f64>>>,
    linear_prime: Vec<Vec<DMatrix<f64>>>,
    forcing: Vec<DMatrix<f64>>,
    forcing_prime: Vec<DMatrix<f64>>,
}

impl RoughCoefficients {
    pub fn new(
        linear: Vec<Vec<DMatrix<f64>>>,
        linear_prime: Vec<Vec<DMatrix<f64>>>,
        forcing: Vec<DMatrix<f64>>,
        forcing_prime: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = linear.len();
        if n == 0 || linear_prime.len() != n || forcing.len() != n || forcing_prime.len() != n {
            return Err(Error::Dimension("coefficient sequences differ in length".into()));
        }
        let dim_x = forcing[0].nrows();
        let dim_eta = forcing[0].ncols();
        let ok = (0..n).all(|k| {
            linear[k].len() == dim_eta
                && linear[k].iter().all(|m| m.shape() == (dim_x, dim_x))
                && linear_prime[k].len() == dim_eta * dim_eta
                && linear_prime[k].iter().all(|m| m.shape() == (dim_x, dim_x))
                && forcing[k].shape() == (dim_x, dim_eta)
                && forcing_prime[k].shape() == (dim_x, dim_eta * dim_eta)
        });
        if !ok || dim_x == 0 || dim_eta == 0 {
            return Err(Error::Dimension("inconsistent rough coefficient shapes".into()));
        }
        let finite = linear.iter().chain(&linear_prime).flatten().all(|m| m.iter().all(|x| x.is_finite()))
            && forcing.iter().chain(&forcing_prime).all(|m| m.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Parameter("rough coefficients must be finite".into()));
        }
        Ok(Self { dim_x, dim_eta, linear, linear_prime, forcing, forcing_prime })
    }

    pub fn zeros(dim_x: usize, dim_eta: usize, nodes: usize) -> Self {
        Self {
            dim_x,
            dim_eta,
            linear: vec![vec![DMatrix::zeros(dim_x, dim_x); dim_eta]; nodes],
            linear_prime: vec![vec![DMatrix::zeros(dim_x, dim_x); dim_eta * dim_eta]; nodes],
            forcing: vec![DMatrix::zeros(dim_x, dim_eta); nodes],
            forcing_prime: vec![DMatrix::zeros(dim_x, dim_eta * dim_eta); nodes],
        }
    }

    /// Scalar state and scalar driver, from node sequences.
    pub fn scalar(linear: &[f64], linear_prime: &[f64], forcing: &[f64], forcing_prime: &[f64]) -> Result<Self> {
        let m = |x: f64| DMatrix::from_element(1, 1, x);
        Self::new(
            linear.iter().map(|&x| vec![m(x)]).collect(),
            linear_prime.iter().map(|&x| vec![m(x)]).collect(),
            forcing.iter().map(|&x| m(x)).collect(),
            forcing_prime.iter().map(|&x| m(x)).collect(),
        )
    }

    /// Scalar state and driver with constant `F`, `f` and vanishing derivatives.
    pub fn scalar_constant(linear: f64, forcing: f64, nodes: usize) -> Self {
        Self::scalar(&vec![linear; nodes], &vec![0.0; nodes], &vec![forcing; nodes], &vec![0.0; nodes])
            .expect("constant scalar coefficients are well formed")
    }

    /// Time-constant matrix coefficients `F^j`, `f` with zero derivatives.
    pub fn constant(linear: Vec<DMatrix<f64>>, forcing: DMatrix<f64>, nodes: usize) -> Result<Self> {
        let (dx, d) = forcing.shape();
        Self::new(
            vec![linear; nodes],
            vec![vec![DMatrix::zeros(dx, dx); d * d]; nodes],
            vec![forcing; nodes],
            vec![DMatrix::zeros(dx, d * d); nodes],
        )
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_eta(&self) -> usize {
        self.dim_eta
    }

    pub fn nodes(&self) -> usize {
        self.linear.len()
    }

    pub fn linear(&self, k: usize) -> &[DMatrix<f64>] {
        &self.linear[k]
    }

    pub fn linear_prime(&self, k: usize) -> &[DMatrix<f64>] {
        &self.linear_prime[k]
    }

    pub fn forcing(&self, k: usize) -> &DMatrix<f64> {
        &self.forcing[k]
    }

    pub fn forcing_prime(&self, k: usize) -> &DMatrix<f64> {
        &self.forcing_prime[k]
    }

    pub fn is_zero(&self) -> bool {
        self.max_norm() == 0.0
    }

    /// Largest absolute entry over all nodes and components.
    pub fn max_norm(&self) -> f64 {
        self.linear
            .iter()
            .chain(&self.linear_prime)
            .flatten()
            .chain(&self.forcing)
            .chain(&self.forcing_prime)
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }

    /// The Gubinelli derivative `F x + f` at node `k` (shape `d_X x d`).
    pub fn derivative_at(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.forcing[k].clone();
        for (j, fj) in self.linear[k].iter().enumerate() {
            out.column_mut(j).gemv(1.0, fj, x, 1.0);
        }
        out
    }

    /// `(F x + f) d eta + (F' x + F (F x + f) + f') eta2` on interval `k`.
    pub fn davie_increment(&self, k: usize, x: &DVector<f64>, driver: &GridRoughPath) -> DVector<f64> {
        let d = self.dim_eta;
        let dx = driver.step(k);
        let l2 = &driver.level2()[k];
        let xp = self.derivative_at(k, x);
        let mut out = &xp * &dx;
        for i in 0..d {
            for j in 0..d {
                let w = l2[(i, j)];
                if w == 0.0 {
                    continue;
                }
                // derivative of (F^j x + f^j) along eta^i
                let mut yp = &self.linear_prime[k][j * d + i] * x;
                yp.gemv(1.0, &self.linear[k][j], &xp.column(i), 1.0);
                yp += self.forcing_prime[k].column(j * d + i);
                out.axpy(w, &yp, 1.0);
            }
        }
        out
    }

    /// Log-ODE generator of the affine flow on interval `k`, as the
    /// `(d_X + 1) x (d_X + 1)` matrix `[[Omega_F, omega_f], [0, 0]]`.
    ///
    /// Its exponential agrees with the Davie step up to second order and is
    /// exactly invertible: the generator of `A^{-1}` on the same interval is
    /// `-Omega_F`.
    pub fn log_generator(&self, k: usize, driver: &GridRoughPath) -> DMatrix<f64> {
        let d = self.dim_eta;
        let n = self.dim_x;
        let dx = driver.step(k);
        let l2 = &driver.level2()[k];
        let mut lin = DMatrix::zeros(n, n);
        let mut aff = DVector::zeros(n);
        for j in 0..d {
            lin += &self.linear[k][j] * dx[j];
            aff += self.forcing[k].column(j) * dx[j];
        }
        for i in 0..d {
            for j in 0..d {
                let w = l2[(i, j)];
                let area = w - 0.5 * dx[i] * dx[j];
                lin += &self.linear_prime[k][j * d + i] * w;
                aff += self.forcing_prime[k].column(j * d + i) * w;
                if area != 0.0 {
                    let fj = &self.linear[k][j];
                    lin += fj * &self.linear[k][i] * area;
                    aff += fj * self.forcing[k].column(i) * area;
                }
            }
        }
        let mut g = DMatrix::zeros(n + 1, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&lin);
        g.view_mut((0, n), (n, 1)).copy_from(&aff);
        g
    }
}

/// Problem record for the affine rough SDE.
#[derive(Clone)]
pub struct AffineRoughSystem {
    pub dim_x: usize,
    pub dim_w: usize,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub rough: RoughCoefficients,
}

impl std::fmt::Debug for AffineRoughSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineRoughSystem")
            .field("dim_x", &self.dim_x)
            .field("dim_w", &self.dim_w)
            .field("dim_eta", &self.rough.dim_eta())
            .finish_non_exhaustive()
    }
}

impl AffineRoughSystem {
    pub fn new(dim_x: usize, dim_w: usize, drift: DriftFn, diffusion: DiffusionFn, rough: RoughCoefficients) -> Result<Self> {
        if rough.dim_x() != dim_x {
            return Err(Error::Dimension(format!(
                "rough coefficients act on dimension {}, state has {dim_x}",
                rough.dim_x()
            )));
        }
        Ok(Self { dim_x, dim_w, drift, diffusion, rough })
    }

    /// `b = sigma = 0`: the pure linear rough equation.
    pub fn pure_rough(rough: RoughCoefficients) -> Self {
        let n = rough.dim_x();
        Self {
            dim_x: n,
            dim_w: 0,
            drift: Arc::new(move |_, _, _| DVector::zeros(n)),
            diffusion: Arc::new(move |_, _, _| DMatrix::zeros(n, 0)),
            rough,
        }
    }

    pub fn dim_eta(&self) -> usize {
        self.rough.dim_eta()
    }

    fn check_driver(&self, driver: &GridRoughPath) -> Result<()> {
        if driver.dim() != self.rough.dim_eta() || driver.grid().len() != self.rough.nodes() {
            return Err(Error::Dimension(format!(
                "driver ({} dims, {} nodes) does not fit coefficients ({} dims, {} nodes)",
                driver.dim(),
                driver.grid().len(),
                self.rough.dim_eta(),
                self.rough.nodes()
            )));
        }
        Ok(())
    }
}

/// A solved sample: states, their Gubinelli derivatives `F X + f`, the
/// Brownian increments used and the applied controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub zprime: Vec<DMatrix<f64>>,
    pub w_increments: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &DVector<f64> {
        self.x.last().unwrap()
    }

    /// Max over nodes of the Euclidean distance to `other`.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.x.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

/// One second-order step over interval `k`.
pub fn davie_step(
    system: &AffineRoughSystem,
    driver: &GridRoughPath,
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    let grid = driver.grid();
    if k >= grid.intervals() {
        return Err(Error::Index(format!("interval {k} out of range")));
    }
    if x.len() != system.dim_x || dw.len() != system.dim_w {
        return Err(Error::Dimension("state or Brownian increment has the wrong size".into()));
    }
    let t = grid.t(k);
    let h = grid.dt(k);
    let mut next = x + (system.drift)(t, x, u) * h;
    if system.dim_w > 0 {
        next += (system.diffusion)(t, x, u) * dw;
    }
    next += system.rough.davie_increment(k, x, driver);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Blowup { interval: k })
    }
}

/// Solve one sample with prescribed Brownian increments.
pub fn solve_with_increments(
    system: &AffineRoughSystem,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    w_increments: Vec<DVector<f64>>,
) -> Result<Trajectory> {
    system.check_driver(driver)?;
    let grid = driver.grid();
    if w_increments.len() != grid.intervals() {
        return Err(Error::Dimension("one Brownian increment per interval required".into()));
    }
    if x0.len() != system.dim_x || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("initial state must be finite with dimension d_X".into()));
    }
    let n = grid.len();
    let mut x = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    x.push(x0.clone());
    for k in 0..grid.intervals() {
        let u = control(grid.t(k), &x[k]);
        let next = davie_step(system, driver, k, &x[k], &u, &w_increments[k])?;
        controls.push(u);
        x.push(next);
    }
    controls.push(control(grid.horizon(), &x[n - 1]));
    let zprime = x.iter().enumerate().map(|(k, xk)| system.rough.derivative_at(k, xk)).collect();
    Ok(Trajectory { grid: grid.clone(), x, zprime, w_increments, controls })
}

/// Solve one sample; Brownian increments are drawn from `seed`.
pub fn solve_sample(
    system: &AffineRoughSystem,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    seed: u64,
) -> Result<Trajectory> {
    let dw = brownian_increments(seed, system.dim_w, driver.grid());
    solve_with_increments(system, driver, x0, control, dw)
}

/// One-step scheme for the linear rough equations of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearScheme {
    /// The same second-order step used by [`davie_step`].
    Davie,
    /// Exponential of the log-ODE generator (group preserving).
    #[default]
    Exponential,
}

/// Matrix exponential with a closed form for `1 x 1` and affine `2 x 2`
/// scalar generators.
pub(crate) fn expm(g: &DMatrix<f64>) -> DMatrix<f64> {
    match g.nrows() {
        1 => DMatrix::from_element(1, 1, g[(0, 0)].exp()),
        2 if g[(1, 0)] == 0.0 && g[(1, 1)] == 0.0 => {
            let a = g[(0, 0)];
            let ea = a.exp();
            DMatrix::from_row_slice(2, 2, &[ea, g[(0, 1)] * phi1(a), 0.0, 1.0])
        }
        _ => g.clone().exp(),
    }
}

/// `(e^a - 1) / a`, continuous at zero.
fn phi1(a: f64) -> f64 {
    if a.abs() < 1e-5 {
        1.0 + a / 2.0 + a * a / 6.0
    } else {
        a.exp_m1() / a
    }
}

/// Deterministic linear RDE `dX = (F X + f) d eta` with `b = sigma = 0`.
pub fn solve_linear_rde(
    rough: &RoughCoefficients,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    solve_linear_rde_with(LinearScheme::Davie, rough, driver, x0)
}

pub fn solve_linear_rde_with(
    scheme: LinearScheme,
    rough: &RoughCoefficients,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    let system = AffineRoughSystem::pure_rough(rough.clone());
    match scheme {
        LinearScheme::Davie => {
            let grid = driver.grid();
            let dw = vec![DVector::zeros(0); grid.intervals()];
            solve_with_increments(&system, driver, x0, &|_, _| DVector::zeros(0), dw)
        }
        LinearScheme::Exponential => {
            system.check_driver(driver)?;
            let grid = driver.grid();
            let n = rough.dim_x();
            let mut x = vec![x0.clone()];
            for k in 0..grid.intervals() {
                let e = expm(&rough.log_generator(k, driver));
                let cur = &x[k];
                let mut next = e.view((0, n), (n, 1)).column(0).into_owned();
                next.gemv(1.0, &e.view((0, 0), (n, n)), cur, 1.0);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Blowup { interval: k });
                }
                x.push(next);
            }
            let zprime = x.iter().enumerate().map(|(k, xk)| rough.derivative_at(k, xk)).collect();
            Ok(Trajectory {
                grid: grid.clone(),
                controls: vec![DVector::zeros(0); x.len()],
                x,
                zprime,
                w_increments: vec![DVector::zeros(0); grid.intervals()],
            })
        }
    }
}

/// Empirical order of convergence, or `Exact` if every error vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvergenceOrder {
    Exact { meshes: Vec<f64> },
    Estimated { order: f64, meshes: Vec<f64>, errors: Vec<f64> },
}

impl ConvergenceOrder {
    pub fn order(&self) -> f64 {
        match self {
            ConvergenceOrder::Exact { .. } => f64::INFINITY,
            ConvergenceOrder::Estimated { order, .. } => *order,
        }
    }
}

/// Self-convergence study: solve on coarsenings of `driver_fine` with the
/// aggregated fine Brownian increments and measure the sup-node distance to
/// the fine solution. `meshes` must be multiples of the fine mesh.
pub fn self_convergence_order(
    system: &AffineRoughSystem,
    driver_fine: &GridRoughPath,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    seed: u64,
    meshes: &[f64],
) -> Result<ConvergenceOrder> {
    if meshes.len() < 3 {
        return Err(Error::Parameter("self-convergence needs at least three meshes".into()));
    }
    let fine_grid = driver_fine.grid();
    let fine_mesh = fine_grid.mesh();
    let mut sorted = meshes.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let fine_dw = brownian_increments(seed, system.dim_w, fine_grid);
    let reference = solve_with_increments(system, driver_fine, x0, control, fine_dw.clone())?;
    let mut errors = Vec::with_capacity(sorted.len());
    for &h in &sorted {
        let stride = (h / fine_mesh).round() as usize;
        if stride == 0 || ((stride as f64) * fine_mesh - h).abs() > 1e-9 * h {
            return Err(Error::Parameter(format!("mesh {h} is not a multiple of {fine_mesh}")));
        }
        let driver = driver_fine.coarsen(stride)?;
        let coarse_system = AffineRoughSystem { rough: coarsen_coefficients(&system.rough, stride), ..system.clone() };
        let dw = aggregate_increments(&fine_dw, stride);
        let sol = solve_with_increments(&coarse_system, &driver, x0, control, dw)?;
        let err = sol
            .x
            .iter()
            .enumerate()
            .map(|(k, xk)| (xk - &reference.x[k * stride]).norm())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    if errors.iter().all(|&e| e == 0.0) {
        return Ok(ConvergenceOrder::Exact { meshes: sorted });
    }
    let rates: Vec<f64> = errors.windows(2).map(|w| (w[1] / w[0]).log2()).collect();
    let order = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(ConvergenceOrder::Estimated { order, meshes: sorted, errors })
}

/// Node subsequence of coefficient sequences.
pub fn coarsen_coefficients(rough: &RoughCoefficients, stride: usize) -> RoughCoefficients {
    let pick = |n: usize| (0..n).step_by(stride);
    RoughCoefficients {
        dim_x: rough.dim_x,
        dim_eta: rough.dim_eta,
        linear: pick(rough.nodes()).map(|k| rough.linear[k].clone()).collect(),
        linear_prime: pick(rough.nodes()).map(|k| rough.linear_prime[k].clone()).collect(),
        forcing: pick(rough.nodes()).map(|k| rough.forcing[k].clone()).collect(),
        forcing_prime: pick(rough.nodes()).map(|k| rough.forcing_prime[k].clone()).collect(),
    }
}

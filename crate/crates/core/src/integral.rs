//! Rough stochastic integrals of controlled samples and the rough Itô formula.
//!
//! A controlled sample `(Z, Z')` stores at every node a value matrix `Z` of
//! shape `r x c` and its Gubinelli derivative as `d` matrices of the same
//! shape, `Z'[i] = dZ / d eta^i`. Integration against a `d`-dimensional
//! driver requires `c = d` and yields an `r`-vector:
//!
//! ```text
//! int Z d eta  ~  sum_n  Z_n d eta_n + sum_{i,j} Z'[i]_n[:, j] eta2_n[i, j]
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rough_path::GridRoughPath;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSample {
    grid: TimeGrid,
    z: Vec<DMatrix<f64>>,
    zprime: Vec<Vec<DMatrix<f64>>>,
}

impl ControlledSample {
    pub fn new(grid: TimeGrid, z: Vec<DMatrix<f64>>, zprime: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        if z.len() != grid.len() || zprime.len() != grid.len() {
            return Err(Error::Dimension("controlled sample needs one entry per node".into()));
        }
        let shape = z[0].shape();
        let d = zprime[0].len();
        if d == 0 {
            return Err(Error::Dimension("Gubinelli derivative needs at least one direction".into()));
        }
        let consistent = z.iter().all(|m| m.shape() == shape)
            && zprime
                .iter()
                .all(|row| row.len() == d && row.iter().all(|m| m.shape() == shape));
        if !consistent {
            return Err(Error::Dimension("inconsistent controlled sample shapes".into()));
        }
        Ok(Self { grid, z, zprime })
    }

    /// The pair `(eta, Id)` for a one-dimensional driver.
    pub fn driver_identity(driver: &GridRoughPath) -> Result<Self> {
        if driver.dim() != 1 {
            return Err(Error::Dimension("driver_identity needs a scalar driver".into()));
        }
        let n = driver.grid().len();
        Self::new(
            driver.grid().clone(),
            driver.values().iter().map(|v| DMatrix::from_element(1, 1, v[0])).collect(),
            vec![vec![DMatrix::from_element(1, 1, 1.0)]; n],
        )
    }

    /// Constant value `c` with zero derivative.
    pub fn constant(grid: &TimeGrid, c: DMatrix<f64>, d: usize) -> Self {
        let zero = DMatrix::zeros(c.nrows(), c.ncols());
        Self {
            grid: grid.clone(),
            z: vec![c; grid.len()],
            zprime: vec![vec![zero; d]; grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn value(&self, k: usize) -> &DMatrix<f64> {
        &self.z[k]
    }

    pub fn derivative(&self, k: usize) -> &[DMatrix<f64>] {
        &self.zprime[k]
    }

    pub fn driver_dim(&self) -> usize {
        self.zprime[0].len()
    }

    /// `R^Z_{s,t} = dZ_{s,t} - Z'_s d eta_{s,t}` for nodes `s = i`, `t = j`.
    pub fn remainder(&self, driver: &GridRoughPath, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.check_driver(driver)?;
        let inc = driver.increment(i, j);
        let mut r = &self.z[j] - &self.z[i];
        for (a, zp) in self.zprime[i].iter().enumerate() {
            r -= zp * inc[a];
        }
        Ok(r)
    }

    fn check_driver(&self, driver: &GridRoughPath) -> Result<()> {
        if !self.grid.same_as(driver.grid()) || self.driver_dim() != driver.dim() {
            return Err(Error::Dimension("sample and driver must share grid and dimension".into()));
        }
        Ok(())
    }
}

/// One compensated term `Z d eta + Z' eta2` on interval `k`.
fn compensated_term(sample: &ControlledSample, driver: &GridRoughPath, k: usize) -> DVector<f64> {
    let d = driver.dim();
    let dx = driver.step(k);
    let l2 = &driver.level2()[k];
    let z = &sample.z[k];
    let mut out = z * &dx;
    for i in 0..d {
        let zp = &sample.zprime[k][i];
        for j in 0..d {
            let w = l2[(i, j)];
            if w != 0.0 {
                out.axpy(w, &zp.column(j), 1.0);
            }
        }
    }
    out
}

/// Finest-partition compensated Riemann sum over `[t_i, t_j]`.
pub fn rough_integral(
    sample: &ControlledSample,
    driver: &GridRoughPath,
    i: usize,
    j: usize,
) -> Result<DVector<f64>> {
    sample.check_driver(driver)?;
    if sample.z[0].ncols() != driver.dim() {
        return Err(Error::Dimension(format!(
            "integrand has {} columns for a {}-dimensional driver",
            sample.z[0].ncols(),
            driver.dim()
        )));
    }
    if i >= j || j >= driver.grid().len() {
        return Err(Error::Index(format!("rough_integral needs i < j < n, got ({i}, {j})")));
    }
    let mut acc = DVector::zeros(sample.z[0].nrows());
    for k in i..j {
        acc += compensated_term(sample, driver, k);
    }
    Ok(acc)
}

/// Leibniz product `(Z z, Z' z + Z z')` of two controlled samples.
pub fn controlled_product(a: &ControlledSample, b: &ControlledSample) -> Result<ControlledSample> {
    if !a.grid.same_as(&b.grid) || a.driver_dim() != b.driver_dim() {
        return Err(Error::Dimension("product factors must share grid and driver".into()));
    }
    if a.z[0].ncols() != b.z[0].nrows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {:?} by {:?}",
            a.z[0].shape(),
            b.z[0].shape()
        )));
    }
    let z = a.z.iter().zip(&b.z).map(|(x, y)| x * y).collect();
    let zprime = (0..a.grid.len())
        .map(|k| {
            (0..a.driver_dim())
                .map(|i| &a.zprime[k][i] * &b.z[k] + &a.z[k] * &b.zprime[k][i])
                .collect()
        })
        .collect();
    ControlledSample::new(a.grid.clone(), z, zprime)
}

type Field = dyn Fn(&DVector<f64>) -> f64 + Sync;
type Gradient = dyn Fn(&DVector<f64>) -> DVector<f64> + Sync;
type Hessian = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Sync;

/// A `C^2` scalar field with its first two derivatives.
pub struct ScalarField<'a> {
    pub f: &'a Field,
    pub gradient: Option<&'a Gradient>,
    pub hessian: Option<&'a Hessian>,
}

/// A process `X` decomposed as `dX = b dt + sigma dW + (X', X'') d eta`.
///
/// `xsecond[k][i]` is the derivative of `X'` along `eta^i` (shape `d_X x d`).
#[derive(Debug, Clone)]
pub struct ItoDecomposition {
    pub x: Vec<DVector<f64>>,
    pub drift: Vec<DVector<f64>>,
    pub diffusion: Vec<DMatrix<f64>>,
    pub dw: Vec<DVector<f64>>,
    pub xprime: Vec<DMatrix<f64>>,
    pub xsecond: Vec<Vec<DMatrix<f64>>>,
}

/// Sup over nodes of the defect in the rough Itô formula for `f(X)`.
///
/// The Brownian integral is a left-point sum against `dw`; the bracket term
/// uses `1/2 tr(sigma sigma^T D^2 f) dt`.
pub fn rough_ito_residual(
    field: &ScalarField<'_>,
    traj: &ItoDecomposition,
    driver: &GridRoughPath,
) -> Result<f64> {
    let df = field
        .gradient
        .ok_or_else(|| Error::Parameter("gradient callback missing".into()))?;
    let d2f = field
        .hessian
        .ok_or_else(|| Error::Parameter("Hessian callback missing".into()))?;
    let grid = driver.grid();
    let n = grid.len();
    if traj.x.len() != n
        || traj.xprime.len() != n
        || traj.xsecond.len() != n
        || traj.drift.len() < n - 1
        || traj.diffusion.len() < n - 1
        || traj.dw.len() != n - 1
    {
        return Err(Error::Dimension("decomposition does not match the driver grid".into()));
    }
    let d = driver.dim();
    let f0 = (field.f)(&traj.x[0]);
    let mut rhs = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..n - 1 {
        let x = &traj.x[k];
        let g = df(x);
        let hess = d2f(x);
        let h = grid.dt(k);
        let sigma = &traj.diffusion[k];
        rhs += g.dot(&traj.drift[k]) * h;
        rhs += g.dot(&(sigma * &traj.dw[k]));
        rhs += 0.5 * (sigma.transpose() * &hess * sigma).trace() * h;
        // (Y, Y') = (Df X', D^2 f (X', X') + Df X'')
        let xp = &traj.xprime[k];
        let y = xp.transpose() * &g;
        let dx = driver.step(k);
        rhs += y.dot(&dx);
        let l2 = &driver.level2()[k];
        for i in 0..d {
            let hx = &hess * xp.column(i);
            for j in 0..d {
                let yp = xp.column(j).dot(&hx) + g.dot(&traj.xsecond[k][i].column(j));
                rhs += yp * l2[(i, j)];
            }
        }
        let lhs = (field.f)(&traj.x[k + 1]) - f0;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

//! Scalar rough linear-quadratic control.
//!
//! State dynamics
//!
//! ```text
//! dX = (A~ X + B~ u + b~) dt + (C~ X + D~ u + s~) dW + (F X + f) d eta
//! ```
//!
//! with cost `E[ int 1/2 (M~ X^2 + N~ u^2) dt + G~ X_T^2 ]`. After the affine
//! transform `X = A X~ + zeta` the problem is classical in `X~`. When
//! `A~ = C~ = b~ = s~ = 0` and `F' = f' = 0` the adjoint admits the ansatz
//! `Y~ = P X~ + q`, `Z~ = P hD u`, where (with `hB = B~/A`, `hD = D~/A`,
//! `hM = A M~`, `hG = A_T G~`)
//!
//! ```text
//! P' = hB^2 P^2 / (N~ + hD^2 P) - hM A,        P_T = 2 hG A_T
//! q' = P hB^2 q / (N~ + hD^2 P) - hM zeta,     q_T = 2 hG zeta_T
//! u* = -(hB P X~ + hB q) / (N~ + hD^2 P)
//! ```
//!
//! The value of the rough problem is `1/2 P_0 x0^2 + q_0 x0 + r_0` with
//! `r' = hB^2 q^2 / (2 (N~ + hD^2 P)) - 1/2 M~ zeta^2`, `r_T = G~ zeta_T^2`.

use serde::{Deserialize, Serialize};

use crate::doss_sussmann::TransformData;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{rng_for, standard_normal, STREAM_W};
use crate::rsde::RoughCoefficients;

/// Default singularity floor for `N~ + hD^2 P`.
pub const DEFAULT_N_MIN: f64 = 1e-8;
/// Tolerated negative excursion of `P` before a positivity error.
pub const POSITIVITY_SLACK: f64 = 1e-10;

/// A scalar function of time: a constant or one value per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeFn {
    Constant(f64),
    Nodes(Vec<f64>),
}

impl Default for TimeFn {
    fn default() -> Self {
        TimeFn::Constant(0.0)
    }
}

impl From<f64> for TimeFn {
    fn from(x: f64) -> Self {
        TimeFn::Constant(x)
    }
}

impl TimeFn {
    pub fn sample(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            TimeFn::Constant(c) => Ok(vec![*c; grid.len()]),
            TimeFn::Nodes(v) if v.len() == grid.len() => Ok(v.clone()),
            TimeFn::Nodes(v) => Err(Error::Dimension(format!(
                "time function has {} nodes, grid has {}",
                v.len(),
                grid.len()
            ))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeFn::Constant(c) => *c == 0.0,
            TimeFn::Nodes(v) => v.iter().all(|&x| x == 0.0),
        }
    }
}

fn default_n_min() -> f64 {
    DEFAULT_N_MIN
}

fn default_horizon() -> f64 {
    1.0
}

/// Scalar LQ problem data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqSpec {
    /// `A~`
    #[serde(default)]
    pub state_drift: TimeFn,
    /// `B~`
    #[serde(default)]
    pub control_drift: TimeFn,
    /// `C~`
    #[serde(default)]
    pub state_vol: TimeFn,
    /// `D~`
    #[serde(default)]
    pub control_vol: TimeFn,
    /// `b~`
    #[serde(default)]
    pub drift_offset: TimeFn,
    /// `sigma~`
    #[serde(default)]
    pub vol_offset: TimeFn,
    /// `M~ >= 0`
    #[serde(default)]
    pub state_cost: TimeFn,
    /// `N~ > 0`
    pub control_cost: TimeFn,
    /// `G~ >= 0`
    #[serde(default)]
    pub terminal_cost: f64,
    /// `F`
    #[serde(default)]
    pub rough_linear: TimeFn,
    /// `F'`
    #[serde(default)]
    pub rough_linear_prime: TimeFn,
    /// `f`
    #[serde(default)]
    pub rough_forcing: TimeFn,
    /// `f'`
    #[serde(default)]
    pub rough_forcing_prime: TimeFn,
    pub x0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub control_bounds: Option<(f64, f64)>,
    #[serde(default = "default_n_min")]
    pub n_min: f64,
}

impl LqSpec {
    /// A spec with `N~ = 1` and every other coefficient zero.
    pub fn minimal(x0: f64, horizon: f64) -> Self {
        Self {
            state_drift: TimeFn::default(),
            control_drift: TimeFn::default(),
            state_vol: TimeFn::default(),
            control_vol: TimeFn::default(),
            drift_offset: TimeFn::default(),
            vol_offset: TimeFn::default(),
            state_cost: TimeFn::default(),
            control_cost: TimeFn::Constant(1.0),
            terminal_cost: 0.0,
            rough_linear: TimeFn::default(),
            rough_linear_prime: TimeFn::default(),
            rough_forcing: TimeFn::default(),
            rough_forcing_prime: TimeFn::default(),
            x0,
            horizon,
            control_bounds: None,
            n_min: DEFAULT_N_MIN,
        }
    }

    /// Whether the Riccati ansatz applies (`A~ = C~ = b~ = s~ = 0`, `F' = f' = 0`).
    pub fn in_closed_form_scope(&self) -> bool {
        self.scope_violation().is_none()
    }

    fn scope_violation(&self) -> Option<&'static str> {
        [
            (&self.state_drift, "A~"),
            (&self.state_vol, "C~"),
            (&self.drift_offset, "b~"),
            (&self.vol_offset, "sigma~"),
            (&self.rough_linear_prime, "F'"),
            (&self.rough_forcing_prime, "f'"),
        ]
        .into_iter()
        .find(|(f, _)| !f.is_zero())
        .map(|(_, name)| name)
    }

    /// Sample every coefficient on `grid` and validate the cost weights.
    pub fn discretize(&self, grid: &TimeGrid) -> Result<LqData> {
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(Error::Dimension(format!(
                "grid horizon {} differs from spec horizon {}",
                grid.horizon(),
                self.horizon
            )));
        }
        if !(self.n_min > 0.0) {
            return Err(Error::Parameter("n_min must be positive".into()));
        }
        if let Some((lo, hi)) = self.control_bounds {
            if !(lo <= hi) {
                return Err(Error::Parameter(format!("control bounds [{lo}, {hi}] are empty")));
            }
        }
        let n = self.control_cost.sample(grid)?;
        let m = self.state_cost.sample(grid)?;
        if let Some(k) = n.iter().position(|&v| !(v >= self.n_min)) {
            return Err(Error::Parameter(format!("N~ = {} below n_min at node {k}", n[k])));
        }
        if let Some(k) = m.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::Parameter(format!("M~ = {} negative at node {k}", m[k])));
        }
        if !(self.terminal_cost >= 0.0) {
            return Err(Error::Parameter("G~ must be non-negative".into()));
        }
        if !self.x0.is_finite() {
            return Err(Error::Parameter("x0 must be finite".into()));
        }
        let rough = RoughCoefficients::scalar(
            &self.rough_linear.sample(grid)?,
            &self.rough_linear_prime.sample(grid)?,
            &self.rough_forcing.sample(grid)?,
            &self.rough_forcing_prime.sample(grid)?,
        )?;
        Ok(LqData {
            grid: grid.clone(),
            a: self.state_drift.sample(grid)?,
            b: self.control_drift.sample(grid)?,
            c: self.state_vol.sample(grid)?,
            d: self.control_vol.sample(grid)?,
            b0: self.drift_offset.sample(grid)?,
            s0: self.vol_offset.sample(grid)?,
            m,
            n,
            g: self.terminal_cost,
            x0: self.x0,
            rough,
            bounds: self.control_bounds,
            n_min: self.n_min,
            closed_form: self.scope_violation().map(str::to_string),
        })
    }
}

/// An [`LqSpec`] sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LqData {
    pub grid: TimeGrid,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub b0: Vec<f64>,
    pub s0: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub g: f64,
    pub x0: f64,
    pub rough: RoughCoefficients,
    pub bounds: Option<(f64, f64)>,
    pub n_min: f64,
    /// `None` inside closed-form scope, else the first offending coefficient.
    closed_form: Option<String>,
}

impl LqData {
    pub fn in_closed_form_scope(&self) -> bool {
        self.closed_form.is_none()
    }

    pub fn require_closed_form(&self) -> Result<()> {
        match &self.closed_form {
            None => Ok(()),
            Some(name) => Err(Error::Scope(format!("{name} must vanish for the Riccati ansatz"))),
        }
    }

    /// Running cost `1/2 (M~ x^2 + N~ u^2)` at node `k`.
    pub fn running_cost(&self, k: usize, x: f64, u: f64) -> f64 {
        0.5 * (self.m[k] * x * x + self.n[k] * u * u)
    }

    pub fn terminal_cost(&self, x: f64) -> f64 {
        self.g * x * x
    }

    /// FNV-1a fingerprint of all sampled coefficients.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::stats::Fnv::default();
        for v in [&self.a, &self.b, &self.c, &self.d, &self.b0, &self.s0, &self.m, &self.n] {
            h.write_f64s(v);
        }
        h.write_f64s(&[self.g, self.x0]);
        h.write_f64s(self.grid.times());
        for k in 0..self.rough.nodes() {
            h.write_f64s(self.rough.linear(k)[0].as_slice());
            h.write_f64s(self.rough.forcing(k).as_slice());
        }
        h.finish()
    }
}

/// `hB = A^{-1} B~`, `hD = A^{-1} D~`, `hM = A M~` per node and `hG = A_T G~`.
#[derive(Debug, Clone, PartialEq)]
pub struct HatCoefficients {
    pub hat_b: Vec<f64>,
    pub hat_d: Vec<f64>,
    pub hat_m: Vec<f64>,
    pub hat_g: f64,
}

pub fn hat_coefficients(data: &LqData, transform: &TransformData) -> Result<HatCoefficients> {
    if !data.grid.same_as(&transform.grid) || transform.dim() != 1 {
        return Err(Error::Dimension("transform does not match the LQ grid".into()));
    }
    let n = data.grid.len();
    Ok(HatCoefficients {
        hat_b: (0..n).map(|k| transform.ainv_scalar(k) * data.b[k]).collect(),
        hat_d: (0..n).map(|k| transform.ainv_scalar(k) * data.d[k]).collect(),
        hat_m: (0..n).map(|k| transform.a_scalar(k) * data.m[k]).collect(),
        hat_g: transform.a_scalar(n - 1) * data.g,
    })
}

/// Backward Riccati pair with everything the feedback law needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Constant term of the value function.
    pub r: Vec<f64>,
    pub hat_b: Vec<f64>,
    pub hat_d: Vec<f64>,
    pub hat_m: Vec<f64>,
    pub hat_g: f64,
    /// `N~` per node.
    pub n: Vec<f64>,
    /// `min_k N~ + hD^2 P`.
    pub denom_min: f64,
    pub bounds: Option<(f64, f64)>,
}

/// Feedback value, clamped when control bounds are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackValue {
    pub raw: f64,
    pub applied: f64,
    pub saturated: bool,
}

impl RiccatiSolution {
    pub fn denominator(&self, k: usize) -> f64 {
        self.n[k] + self.hat_d[k] * self.hat_d[k] * self.p[k]
    }

    /// Unclamped `u* = -(hB P x~ + hB q) / (N~ + hD^2 P)`.
    pub fn feedback_raw(&self, k: usize, xtilde: f64) -> f64 {
        -self.hat_b[k] * (self.p[k] * xtilde + self.q[k]) / self.denominator(k)
    }

    /// Value of the rough problem started from `x0` at time zero.
    pub fn value(&self, x0: f64) -> f64 {
        0.5 * self.p[0] * x0 * x0 + self.q[0] * x0 + self.r[0]
    }
}

fn interp(v: &[f64], k: usize, theta: f64) -> f64 {
    if theta == 0.0 {
        v[k]
    } else if theta == 1.0 {
        v[k + 1]
    } else {
        v[k] + theta * (v[k + 1] - v[k])
    }
}

/// Integrate `(P, q, r)` backward from `T` with classical RK4 on the grid.
///
/// Coefficients (which contain `A`, `zeta` from the rough solve) are known at
/// nodes only and are interpolated linearly inside each interval.
pub fn riccati_backward(data: &LqData, transform: &TransformData) -> Result<RiccatiSolution> {
    data.require_closed_form()?;
    let hats = hat_coefficients(data, transform)?;
    let grid = &data.grid;
    let last = grid.len() - 1;
    let a: Vec<f64> = (0..grid.len()).map(|k| transform.a_scalar(k)).collect();
    let zeta: Vec<f64> = (0..grid.len()).map(|k| transform.zeta_scalar(k)).collect();
    let source_p: Vec<f64> = (0..grid.len()).map(|k| hats.hat_m[k] * a[k]).collect();
    let source_q: Vec<f64> = (0..grid.len()).map(|k| hats.hat_m[k] * zeta[k]).collect();
    let source_r: Vec<f64> = (0..grid.len()).map(|k| 0.5 * data.m[k] * zeta[k] * zeta[k]).collect();
    let hb2: Vec<f64> = hats.hat_b.iter().map(|x| x * x).collect();
    let hd2: Vec<f64> = hats.hat_d.iter().map(|x| x * x).collect();

    let mut p = vec![0.0; grid.len()];
    let mut q = vec![0.0; grid.len()];
    let mut r = vec![0.0; grid.len()];
    p[last] = 2.0 * hats.hat_g * a[last];
    q[last] = 2.0 * hats.hat_g * zeta[last];
    r[last] = data.g * zeta[last] * zeta[last];

    let n_min = data.n_min;
    // derivative of (P, q, r) at fractional position theta of interval k
    let rhs = |k: usize, theta: f64, state: [f64; 3]| -> Result<[f64; 3]> {
        let [pp, qq, _] = state;
        let den = interp(&data.n, k, theta) + interp(&hd2, k, theta) * pp;
        if !(den > n_min) {
            return Err(Error::RiccatiSingular { time: grid.t(k) + theta * grid.dt(k), denominator: den });
        }
        let b2 = interp(&hb2, k, theta);
        Ok([
            b2 * pp * pp / den - interp(&source_p, k, theta),
            pp * b2 * qq / den - interp(&source_q, k, theta),
            b2 * qq * qq / (2.0 * den) - interp(&source_r, k, theta),
        ])
    };
    let axpy = |s: [f64; 3], c: f64, d: [f64; 3]| [s[0] + c * d[0], s[1] + c * d[1], s[2] + c * d[2]];

    for k in (0..last).rev() {
        let h = -grid.dt(k);
        let y = [p[k + 1], q[k + 1], r[k + 1]];
        let k1 = rhs(k, 1.0, y)?;
        let k2 = rhs(k, 0.5, axpy(y, 0.5 * h, k1))?;
        let k3 = rhs(k, 0.5, axpy(y, 0.5 * h, k2))?;
        let k4 = rhs(k, 0.0, axpy(y, h, k3))?;
        for i in 0..3 {
            let next = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            match i {
                0 => p[k] = next,
                1 => q[k] = next,
                _ => r[k] = next,
            }
        }
        if !p[k].is_finite() || !q[k].is_finite() {
            return Err(Error::Blowup { interval: k });
        }
        if p[k] < -POSITIVITY_SLACK {
            return Err(Error::Positivity { time: grid.t(k), value: p[k] });
        }
    }
    let denom_min = (0..grid.len())
        .map(|k| data.n[k] + hd2[k] * p[k])
        .fold(f64::INFINITY, f64::min);
    if !(denom_min > n_min) {
        return Err(Error::RiccatiSingular { time: 0.0, denominator: denom_min });
    }
    Ok(RiccatiSolution {
        grid: grid.clone(),
        p,
        q,
        r,
        hat_b: hats.hat_b,
        hat_d: hats.hat_d,
        hat_m: hats.hat_m,
        hat_g: hats.hat_g,
        n: data.n.clone(),
        denom_min,
        bounds: data.bounds,
    })
}

/// Optimal feedback at node `k` for transformed state `xtilde`.
pub fn optimal_feedback(ric: &RiccatiSolution, k: usize, xtilde: f64) -> Result<FeedbackValue> {
    if k >= ric.grid.len() {
        return Err(Error::Index(format!("node {k} out of range")));
    }
    let raw = ric.feedback_raw(k, xtilde);
    Ok(match ric.bounds {
        Some((lo, hi)) => {
            let applied = raw.clamp(lo, hi);
            FeedbackValue { raw, applied, saturated: applied != raw }
        }
        None => FeedbackValue { raw, applied: raw, saturated: false },
    })
}

/// The rough Hamiltonian
/// `1/2 N~ u^2 + A^{-1}(B~ y + D~ z) u + A^{-1}(A~ x y + b~ y + C~ x z + s~ z) + 1/2 M~ x^2`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_eval(
    data: &LqData,
    transform: &TransformData,
    k: usize,
    x: f64,
    ytilde: f64,
    ztilde: f64,
    u: f64,
) -> Result<f64> {
    if k >= data.grid.len() {
        return Err(Error::Index(format!("node {k} out of range")));
    }
    let ainv = transform.ainv_scalar(k);
    Ok(0.5 * data.n[k] * u * u
        + ainv * (data.b[k] * ytilde + data.d[k] * ztilde) * u
        + ainv * (data.a[k] * x * ytilde + data.b0[k] * ytilde + data.c[k] * x * ztilde + data.s0[k] * ztilde)
        + 0.5 * data.m[k] * x * x)
}

/// `dH/du = N~ u + A^{-1}(B~ y + D~ z)`.
pub fn hamiltonian_du(data: &LqData, transform: &TransformData, k: usize, ytilde: f64, ztilde: f64, u: f64) -> f64 {
    data.n[k] * u + transform.ainv_scalar(k) * (data.b[k] * ytilde + data.d[k] * ztilde)
}

/// Adjoint ansatz `Y~ = P X~ + q`, `Z~ = P hD u` node by node.
pub fn adjoint_pair_lq(ric: &RiccatiSolution, xtilde: &[f64], control: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ric.grid.len();
    if xtilde.len() != n || control.len() != n {
        return Err(Error::Dimension("trajectories must live on the Riccati grid".into()));
    }
    let y = (0..n).map(|k| ric.p[k] * xtilde[k] + ric.q[k]).collect();
    let z = (0..n).map(|k| ric.p[k] * ric.hat_d[k] * control[k]).collect();
    Ok((y, z))
}

/// Base control process for simulations.
#[derive(Debug, Clone, Copy)]
pub enum ControlLaw<'a> {
    Zero,
    /// Deterministic control, one value per node.
    OpenLoop(&'a [f64]),
    /// The optimal feedback, clamped to the bounds if set.
    Optimal(&'a RiccatiSolution),
}

/// The process `scale * law(X~_ref) + offset`, where `X~_ref` follows the
/// unperturbed law on the same Brownian sample. With `scale = 1` and no
/// offset the process is the law itself applied in closed loop.
#[derive(Debug, Clone)]
pub struct ControlProcess<'a> {
    pub law: ControlLaw<'a>,
    pub scale: f64,
    pub offset: Option<Vec<f64>>,
    /// Applied after scale and offset.
    pub clamp: Option<(f64, f64)>,
}

impl<'a> ControlProcess<'a> {
    pub fn new(law: ControlLaw<'a>) -> Self {
        Self { law, scale: 1.0, offset: None, clamp: None }
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_clamp(mut self, bounds: Option<(f64, f64)>) -> Self {
        self.clamp = bounds;
        self
    }

    fn is_unperturbed(&self) -> bool {
        self.scale == 1.0 && self.offset.is_none() && self.clamp.is_none()
    }

    fn compose(&self, k: usize, base: f64) -> f64 {
        let u = self.scale * base + self.offset.as_ref().map_or(0.0, |o| o[k]);
        match self.clamp {
            Some((lo, hi)) => u.clamp(lo, hi),
            None => u,
        }
    }

    fn law_value(&self, k: usize, xref: f64) -> f64 {
        match self.law {
            ControlLaw::Zero => 0.0,
            ControlLaw::OpenLoop(v) => v[k],
            ControlLaw::Optimal(ric) => {
                let raw = ric.feedback_raw(k, xref);
                match ric.bounds {
                    Some((lo, hi)) => raw.clamp(lo, hi),
                    None => raw,
                }
            }
        }
    }
}

/// Paths of one simulated sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplePath {
    pub xtilde: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Base-law control along the reference path (before scale and offset).
    pub u_base: Vec<f64>,
    pub dw: Vec<f64>,
    pub cost: f64,
}

/// Scalar Brownian increments on `grid` from `seed`.
pub fn scalar_increments(seed: u64, grid: &TimeGrid) -> Vec<f64> {
    let mut rng = rng_for(seed, STREAM_W);
    (0..grid.intervals()).map(|k| grid.dt(k).sqrt() * standard_normal(&mut rng)).collect()
}

/// Euler–Maruyama in transformed coordinates
/// `dX~ = A^{-1} b(A X~ + zeta, u) dt + A^{-1} sigma(A X~ + zeta, u) dW`,
/// mapped back with `X = A X~ + zeta`. Running cost uses left-point quadrature.
pub fn simulate_path(
    data: &LqData,
    transform: &TransformData,
    control: &ControlProcess<'_>,
    dw: &[f64],
) -> Result<SamplePath> {
    let grid = &data.grid;
    if dw.len() != grid.intervals() || !grid.same_as(&transform.grid) {
        return Err(Error::Dimension("increments or transform do not match the grid".into()));
    }
    if let Some(off) = &control.offset {
        if off.len() != grid.len() {
            return Err(Error::Dimension("control offset needs one value per node".into()));
        }
    }
    if let ControlLaw::OpenLoop(v) = control.law {
        if v.len() != grid.len() {
            return Err(Error::Dimension("open-loop control needs one value per node".into()));
        }
    }
    let n = grid.len();
    let mut out = SamplePath {
        xtilde: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        u_base: Vec::with_capacity(n),
        dw: dw.to_vec(),
        cost: 0.0,
    };
    let track_ref = !control.is_unperturbed() && matches!(control.law, ControlLaw::Optimal(_));
    let mut xt = data.x0;
    let mut xref = data.x0;
    let mut running = Vec::with_capacity(n);
    for k in 0..n {
        let (a, ainv, zeta) = (transform.a_scalar(k), transform.ainv_scalar(k), transform.zeta_scalar(k));
        let base = control.law_value(k, if track_ref { xref } else { xt });
        let u = control.compose(k, base);
        let x = a * xt + zeta;
        out.xtilde.push(xt);
        out.x.push(x);
        out.u.push(u);
        out.u_base.push(base);
        if k == n - 1 {
            break;
        }
        let h = grid.dt(k);
        running.push(h * data.running_cost(k, x, u));
        let drift = ainv * (data.a[k] * x + data.b[k] * u + data.b0[k]);
        let vol = ainv * (data.c[k] * x + data.d[k] * u + data.s0[k]);
        xt += drift * h + vol * dw[k];
        if track_ref {
            let xr = a * xref + zeta;
            let dr = ainv * (data.a[k] * xr + data.b[k] * base + data.b0[k]);
            let vr = ainv * (data.c[k] * xr + data.d[k] * base + data.s0[k]);
            xref += dr * h + vr * dw[k];
        }
        if !xt.is_finite() || !xref.is_finite() {
            return Err(Error::Blowup { interval: k });
        }
    }
    out.cost = crate::stats::compensated_sum(&running) + data.terminal_cost(*out.x.last().unwrap());
    Ok(out)
}

/// One closed-loop run under the optimal feedback with `W` drawn from `seed`.
pub fn simulate_closed_loop(
    data: &LqData,
    transform: &TransformData,
    ric: &RiccatiSolution,
    seed: u64,
) -> Result<SamplePath> {
    data.require_closed_form()?;
    let dw = scalar_increments(seed, &data.grid);
    simulate_path(data, transform, &ControlProcess::new(ControlLaw::Optimal(ric)), &dw)
}

//! Monte Carlo experiments around the rough stochastic maximum principle.
//!
//! Every estimator is a deterministic function of its inputs and a master
//! seed: per-sample seeds come from [`mix`], samples are evaluated in
//! parallel but collected in index order, and means use compensated sums.
//! Comparative estimators (finite differences, perturbations) reuse the same
//! Brownian samples on every leg.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doss_sussmann::{build_transform, TransformData, TransformOptions};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::{
    riccati_backward, scalar_increments, simulate_path, ControlLaw, ControlProcess, LqData, LqSpec,
    RiccatiSolution, SamplePath,
};
use crate::rng::{mix, rng_for, standard_normal, STREAM_DIRECTION};
use crate::rough_path::{holder_distance, lift_brownian_stratonovich, GridRoughPath};
use crate::rsde::{solve_sample, solve_with_increments, AffineRoughSystem, ControlFn};
use crate::stats::MeanEstimate;

/// Tags for the independent seed families of the equivalence experiment.
const FAMILY_NESTED_DRIVER: u64 = 1;
const FAMILY_NESTED_W: u64 = 2;
const FAMILY_JOINT_DRIVER: u64 = 3;
const FAMILY_JOINT_W: u64 = 4;

fn par_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// An LQ problem bound to one driver: sampled data, transform and (inside
/// closed-form scope) the Riccati solution.
#[derive(Debug, Clone)]
pub struct LqContext {
    pub data: LqData,
    pub transform: TransformData,
    pub ric: Option<RiccatiSolution>,
    pub driver_hash: u64,
}

impl LqContext {
    pub fn new(spec: &LqSpec, driver: &GridRoughPath, options: &TransformOptions) -> Result<Self> {
        if driver.dim() != 1 {
            return Err(Error::Dimension("scalar LQ needs a one-dimensional driver".into()));
        }
        let data = spec.discretize(driver.grid())?;
        let transform = build_transform(&data.rough, driver, options)?;
        let ric = if data.in_closed_form_scope() { Some(riccati_backward(&data, &transform)?) } else { None };
        Ok(Self { data, transform, ric, driver_hash: driver.fingerprint() })
    }

    pub fn riccati(&self) -> Result<&RiccatiSolution> {
        match &self.ric {
            Some(r) => Ok(r),
            None => self.data.require_closed_form().and(Err(Error::Scope("no Riccati solution".into()))),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.data.grid
    }

    /// The optimal feedback as a control process.
    pub fn optimal(&self) -> Result<ControlProcess<'_>> {
        Ok(ControlProcess::new(ControlLaw::Optimal(self.riccati()?)))
    }

    fn sample(&self, control: &ControlProcess<'_>, seed: u64) -> Result<SamplePath> {
        simulate_path(&self.data, &self.transform, control, &scalar_increments(seed, self.grid()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub mesh: f64,
    pub driver_hash: u64,
    pub spec_hash: u64,
}

/// Monte Carlo cost estimate with failure bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_samples: usize,
    pub estimate: MeanEstimate,
    pub seeds: Vec<u64>,
    /// Indices of excluded samples.
    pub failed: Vec<usize>,
    pub failure_count: usize,
    pub meta: EnsembleMeta,
}

impl EnsembleReport {
    pub fn mean(&self) -> f64 {
        self.estimate.mean
    }

    pub fn std_err(&self) -> f64 {
        self.estimate.std_err
    }
}

fn summarize(results: Vec<Result<f64>>, seeds: Vec<u64>, meta: EnsembleMeta) -> Result<EnsembleReport> {
    let n = results.len();
    let mut values = Vec::with_capacity(n);
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) if v.is_finite() => values.push(v),
            _ => failed.push(i),
        }
    }
    if values.is_empty() {
        return Err(Error::EnsembleFailure(n));
    }
    Ok(EnsembleReport {
        n_samples: n,
        estimate: MeanEstimate::from_samples(&values),
        seeds,
        failure_count: failed.len(),
        failed,
        meta,
    })
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Parameter("at least two Monte Carlo samples are required".into()));
    }
    Ok(())
}

fn sample_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| mix(master, i)).collect()
}

/// Monte Carlo estimate of the LQ cost of `control`.
pub fn cost_monte_carlo(
    ctx: &LqContext,
    control: &ControlProcess<'_>,
    n_samples: usize,
    master_seed: u64,
) -> Result<EnsembleReport> {
    check_samples(n_samples)?;
    let seeds = sample_seeds(master_seed, n_samples);
    let results = par_indexed(n_samples, |i| ctx.sample(control, seeds[i]).map(|p| p.cost));
    let meta = EnsembleMeta { mesh: ctx.grid().mesh(), driver_hash: ctx.driver_hash, spec_hash: ctx.data.fingerprint() };
    summarize(results, seeds, meta)
}

/// Running cost `h(t, x, u)` for general systems.
pub type RunningCost<'a> = &'a (dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Sync);
/// Terminal cost `g(x)` for general systems.
pub type TerminalCost<'a> = &'a (dyn Fn(&DVector<f64>) -> f64 + Sync);

/// Monte Carlo cost of a general affine rough system solved directly.
#[allow(clippy::too_many_arguments)]
pub fn cost_monte_carlo_system(
    system: &AffineRoughSystem,
    driver: &GridRoughPath,
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    running: RunningCost<'_>,
    terminal: TerminalCost<'_>,
    n_samples: usize,
    master_seed: u64,
) -> Result<EnsembleReport> {
    check_samples(n_samples)?;
    let seeds = sample_seeds(master_seed, n_samples);
    let grid = driver.grid();
    let results = par_indexed(n_samples, |i| {
        let traj = solve_sample(system, driver, x0, control, seeds[i])?;
        let terms: Vec<f64> = (0..grid.intervals())
            .map(|k| grid.dt(k) * running(grid.t(k), &traj.x[k], &traj.controls[k]))
            .collect();
        Ok(crate::stats::compensated_sum(&terms) + terminal(traj.terminal()))
    });
    let meta = EnsembleMeta { mesh: grid.mesh(), driver_hash: driver.fingerprint(), spec_hash: 0 };
    summarize(results, seeds, meta)
}

/// A perturbation direction `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbDirection {
    /// Deterministic, one value per node.
    Path(Vec<f64>),
    /// `v = c * (base law along the reference path)`; `c = -1` scales the
    /// base control toward zero.
    Proportional(f64),
}

impl PerturbDirection {
    pub fn is_zero(&self) -> bool {
        match self {
            PerturbDirection::Path(v) => v.iter().all(|&x| x == 0.0),
            PerturbDirection::Proportional(c) => *c == 0.0,
        }
    }

    /// `base + eps v` as a control process.
    pub fn apply<'a>(&self, base: &ControlProcess<'a>, eps: f64) -> ControlProcess<'a> {
        let mut out = base.clone();
        match self {
            PerturbDirection::Path(v) => {
                let offset = match &base.offset {
                    Some(o) => o.iter().zip(v).map(|(a, b)| a + eps * b).collect(),
                    None => v.iter().map(|b| eps * b).collect(),
                };
                out.offset = Some(offset);
            }
            PerturbDirection::Proportional(c) => out.scale += eps * c,
        }
        out
    }

    fn value(&self, k: usize, path: &SamplePath) -> f64 {
        match self {
            PerturbDirection::Path(v) => v[k],
            PerturbDirection::Proportional(c) => c * path.u_base[k],
        }
    }

    fn check(&self, grid: &TimeGrid) -> Result<()> {
        match self {
            PerturbDirection::Path(v) if v.len() != grid.len() => {
                Err(Error::Dimension("direction needs one value per node".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Seeded smooth bounded direction: a random combination of the first
/// `modes` Fourier modes on `[0, T]`, scaled to unit sup norm on the grid.
pub fn random_direction(grid: &TimeGrid, modes: usize, seed: u64) -> PerturbDirection {
    let mut rng = rng_for(seed, STREAM_DIRECTION);
    let coef: Vec<(f64, f64)> =
        (0..=modes).map(|_| (standard_normal(&mut rng), standard_normal(&mut rng))).collect();
    let phase: f64 = rng.random::<f64>();
    let horizon = grid.horizon();
    let mut v: Vec<f64> = grid
        .times()
        .iter()
        .map(|&t| {
            let s = std::f64::consts::PI * (t / horizon + phase);
            coef.iter().enumerate().map(|(m, (a, b))| a * (m as f64 * s).cos() + b * (m as f64 * s).sin()).sum()
        })
        .collect();
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sup > 0.0 {
        v.iter_mut().for_each(|x| *x /= sup);
    }
    PerturbDirection::Path(v)
}

/// Per-sample adjoint estimator of `dJ(u)[v]`.
///
/// Along the controlled path, `N~ u + hB Y~ + hD Z~ = (N~ + hD^2 P) delta`
/// with `delta = u - u*(X~)` and the ansatz `Y~ = P X~ + q`, `Z~ = P hD u`.
/// Away from the optimum the ansatz is not the true adjoint, so the sample
/// also carries the response of the feedback term to the state perturbation,
/// `int hB rho v dt + int hD rho v dW` with `rho_t = int_t^T P hB delta dr`.
/// At `u = u*` both parts vanish identically.
fn adjoint_sample(ric: &RiccatiSolution, dir: &PerturbDirection, path: &SamplePath) -> f64 {
    let grid = &ric.grid;
    let m = grid.intervals();
    let delta: Vec<f64> = (0..m).map(|k| path.u[k] - ric.feedback_raw(k, path.xtilde[k])).collect();
    let mut tail = 0.0;
    let mut terms = Vec::with_capacity(2 * m);
    for k in (0..m).rev() {
        let h = grid.dt(k);
        let v = dir.value(k, path);
        terms.push(h * v * (ric.denominator(k) * delta[k] + ric.hat_b[k] * tail));
        terms.push(ric.hat_d[k] * v * path.dw[k] * tail);
        tail += h * ric.p[k] * ric.hat_b[k] * delta[k];
    }
    crate::stats::compensated_sum(&terms)
}

/// Adjoint estimate of the Gateaux derivative of the cost at `base` along `v`.
pub fn adjoint_gradient(
    ctx: &LqContext,
    base: &ControlProcess<'_>,
    direction: &PerturbDirection,
    n_samples: usize,
    master_seed: u64,
) -> Result<MeanEstimate> {
    check_samples(n_samples)?;
    direction.check(ctx.grid())?;
    let ric = ctx.riccati()?;
    if direction.is_zero() {
        return Ok(MeanEstimate::from_samples(&vec![0.0; n_samples]));
    }
    let seeds = sample_seeds(master_seed, n_samples);
    let results = par_indexed(n_samples, |i| ctx.sample(base, seeds[i]).map(|p| adjoint_sample(ric, direction, &p)));
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MeanEstimate::from_samples(&values))
}

fn fd_samples(
    ctx: &LqContext,
    base: &ControlProcess<'_>,
    direction: &PerturbDirection,
    eps: f64,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    let plus = direction.apply(base, eps);
    let minus = direction.apply(base, -eps);
    par_indexed(seeds.len(), |i| {
        let dw = scalar_increments(seeds[i], ctx.grid());
        let jp = simulate_path(&ctx.data, &ctx.transform, &plus, &dw)?.cost;
        let jm = simulate_path(&ctx.data, &ctx.transform, &minus, &dw)?.cost;
        Ok((jp - jm) / (2.0 * eps))
    })
    .into_iter()
    .collect()
}

/// Central difference `(J(u + eps v) - J(u - eps v)) / (2 eps)` with both legs
/// on identical Brownian samples. Perturbations are open loop: the base
/// control process is recorded along its own path and `eps v` added to it.
pub fn finite_difference_gradient(
    ctx: &LqContext,
    base: &ControlProcess<'_>,
    direction: &PerturbDirection,
    eps: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<MeanEstimate> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {eps}")));
    }
    check_samples(n_samples)?;
    direction.check(ctx.grid())?;
    let seeds = sample_seeds(master_seed, n_samples);
    Ok(MeanEstimate::from_samples(&fd_samples(ctx, base, direction, eps, &seeds)?))
}

/// One direction of a gradient comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEntry {
    pub adjoint: MeanEstimate,
    pub fd: MeanEstimate,
    pub fd_half: MeanEstimate,
    /// `|adjoint - fd| / |fd|`, when `|fd| > 10 stderr`.
    pub relative_mismatch: Option<f64>,
    /// The two finite-difference steps agree up to noise.
    pub richardson_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub eps: f64,
    pub entries: Vec<GradientEntry>,
    pub max_relative_mismatch: f64,
    pub flagged: usize,
}

/// Adjoint versus finite-difference derivatives (steps `eps`, `eps/2`) over
/// several directions, all on the same Brownian samples.
pub fn gradient_check(
    ctx: &LqContext,
    base: &ControlProcess<'_>,
    directions: &[PerturbDirection],
    eps: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<GradientReport> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {eps}")));
    }
    let seeds = sample_seeds(master_seed, n_samples);
    let mut entries = Vec::with_capacity(directions.len());
    for dir in directions {
        let adjoint = adjoint_gradient(ctx, base, dir, n_samples, master_seed)?;
        let a = fd_samples(ctx, base, dir, eps, &seeds)?;
        let b = fd_samples(ctx, base, dir, 0.5 * eps, &seeds)?;
        let fd = MeanEstimate::from_samples(&a);
        let fd_half = MeanEstimate::from_samples(&b);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let diff = MeanEstimate::from_samples(&diff);
        let scale = 1.0 + fd.mean.abs();
        let richardson_consistent = diff.mean.abs() <= 3.0 * diff.std_err + 1e-9 * scale;
        let relative_mismatch =
            (fd.mean.abs() > 10.0 * fd.std_err).then(|| (adjoint.mean - fd.mean).abs() / fd.mean.abs());
        entries.push(GradientEntry { adjoint, fd, fd_half, relative_mismatch, richardson_consistent });
    }
    let max_relative_mismatch = entries.iter().filter_map(|e| e.relative_mismatch).fold(0.0, f64::max);
    let flagged = entries.iter().filter(|e| !e.richardson_consistent).count();
    Ok(GradientReport { eps, entries, max_relative_mismatch, flagged })
}

/// Perturbations to try around the optimal feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub n_directions: usize,
    pub eps: Vec<f64>,
    /// Number of Fourier modes in the random directions.
    pub modes: usize,
    /// Also try `v = -u*`.
    pub adversarial: bool,
}

impl Default for PerturbationFamily {
    fn default() -> Self {
        Self { n_directions: 20, eps: vec![0.01, 0.1, 0.5], modes: 4, adversarial: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEntry {
    /// Index of the random direction; `None` for the adversarial one.
    pub direction: Option<usize>,
    pub eps: f64,
    pub cost: MeanEstimate,
    /// Paired per-sample difference `J(u* + eps v) - J(u*)`.
    pub paired_gap: MeanEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub baseline: MeanEstimate,
    pub entries: Vec<PerturbationEntry>,
    pub all_pass: bool,
}

/// Checks that no perturbation `u* + eps v` (clamped to the control bounds)
/// has a Monte Carlo cost below that of `u*` by more than two combined
/// standard errors.
pub fn perturbation_test(
    ctx: &LqContext,
    family: &PerturbationFamily,
    n_samples: usize,
    master_seed: u64,
) -> Result<PerturbationReport> {
    check_samples(n_samples)?;
    let optimal = ctx.optimal()?;
    let seeds = sample_seeds(master_seed, n_samples);
    let base_costs = par_indexed(n_samples, |i| ctx.sample(&optimal, seeds[i]).map(|p| p.cost))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let baseline = MeanEstimate::from_samples(&base_costs);
    let mut dirs: Vec<(Option<usize>, PerturbDirection)> = (0..family.n_directions)
        .map(|j| (Some(j), random_direction(ctx.grid(), family.modes, mix(master_seed, j as u64))))
        .collect();
    if family.adversarial {
        dirs.push((None, PerturbDirection::Proportional(-1.0)));
    }
    let mut entries = Vec::new();
    for (id, dir) in &dirs {
        for &eps in &family.eps {
            let control = dir.apply(&optimal, eps).with_clamp(ctx.data.bounds);
            let costs = par_indexed(n_samples, |i| ctx.sample(&control, seeds[i]).map(|p| p.cost))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let cost = MeanEstimate::from_samples(&costs);
            let gaps: Vec<f64> = costs.iter().zip(&base_costs).map(|(a, b)| a - b).collect();
            let pass = cost.mean >= baseline.mean - 2.0 * cost.combined_err(&baseline);
            entries.push(PerturbationEntry {
                direction: *id,
                eps,
                cost,
                paired_gap: MeanEstimate::from_samples(&gaps),
                pass,
            });
        }
    }
    let all_pass = entries.iter().all(|e| e.pass);
    Ok(PerturbationReport { baseline, entries, all_pass })
}

/// Numerical setup of the equivalence experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSetup {
    pub mesh: f64,
    pub fine_mesh: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub transform: TransformOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// Mean over drivers of the inner Monte Carlo value `V(B)`.
    pub nested: MeanEstimate,
    /// Mean cost over independent `(B, W)` pairs.
    pub joint: MeanEstimate,
    pub combined_err: f64,
    pub pass: bool,
    /// `V(B)` per driver (failed drivers excluded).
    pub values: Vec<f64>,
    /// `1/2 P_0 x0^2 + q_0 x0 + r_0` per driver.
    pub analytic_values: Vec<f64>,
    pub value_variance: f64,
    pub quantiles: [f64; 5],
    pub nested_failures: usize,
    pub joint_failures: usize,
}

fn quantiles(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [f64::NAN; 5];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    [at(0.0), at(0.05), at(0.5), at(0.95), at(1.0)]
}

/// Nested estimate `E_B[V(B)]` against the joint estimate over `(B, W)`.
///
/// The nested leg reuses one set of inner Brownian samples for every driver,
/// so a driver-independent problem gives exactly the same `V(B)` for all `B`.
/// The joint leg draws a fresh driver for every pair; sharing drivers with the
/// nested leg would make the two estimators coincide by construction.
pub fn pathwise_equivalence(spec: &LqSpec, setup: &EquivalenceSetup, master_seed: u64) -> Result<EquivalenceReport> {
    check_samples(setup.n_outer)?;
    check_samples(setup.n_inner)?;
    if !spec.in_closed_form_scope() {
        return Err(Error::Scope("pathwise equivalence needs the closed-form LQ scope".into()));
    }
    let grid = TimeGrid::with_mesh(spec.horizon, setup.mesh)?;
    let context = |seed: u64| -> Result<LqContext> {
        let driver = lift_brownian_stratonovich(seed, 1, setup.fine_mesh, &grid)?;
        LqContext::new(spec, &driver, &setup.transform)
    };
    let inner_seeds = sample_seeds(mix(master_seed, FAMILY_NESTED_W), setup.n_inner);
    let inner_dw: Vec<Vec<f64>> = inner_seeds.iter().map(|&s| scalar_increments(s, &grid)).collect();

    let nested: Vec<Result<(f64, f64)>> = par_indexed(setup.n_outer, |i| {
        let ctx = context(mix(mix(master_seed, FAMILY_NESTED_DRIVER), i as u64))?;
        let ric = ctx.riccati()?;
        let control = ControlProcess::new(ControlLaw::Optimal(ric));
        let costs = inner_dw
            .iter()
            .map(|dw| simulate_path(&ctx.data, &ctx.transform, &control, dw).map(|p| p.cost))
            .collect::<Result<Vec<_>>>()?;
        Ok((MeanEstimate::from_samples(&costs).mean, ric.value(spec.x0)))
    });
    let n_pairs = setup.n_outer * setup.n_inner;
    let joint: Vec<Result<f64>> = par_indexed(n_pairs, |p| {
        let ctx = context(mix(mix(master_seed, FAMILY_JOINT_DRIVER), p as u64))?;
        let control = ctx.optimal()?;
        ctx.sample(&control, mix(mix(master_seed, FAMILY_JOINT_W), p as u64)).map(|s| s.cost)
    });

    let (mut values, mut analytic_values) = (Vec::new(), Vec::new());
    for (v, a) in nested.iter().flatten() {
        values.push(*v);
        analytic_values.push(*a);
    }
    let joint_values: Vec<f64> = joint.iter().flatten().copied().collect();
    let nested_failures = setup.n_outer - values.len();
    let joint_failures = n_pairs - joint_values.len();
    if values.len() < 2 || joint_values.len() < 2 {
        return Err(Error::EnsembleFailure(nested_failures + joint_failures));
    }
    let nested_est = MeanEstimate::from_samples(&values);
    let joint_est = MeanEstimate::from_samples(&joint_values);
    let combined_err = nested_est.combined_err(&joint_est);
    Ok(EquivalenceReport {
        pass: (nested_est.mean - joint_est.mean).abs() <= 2.0 * combined_err,
        nested: nested_est,
        joint: joint_est,
        combined_err,
        value_variance: nested_est.std_dev * nested_est.std_dev,
        quantiles: quantiles(&values),
        values,
        analytic_values,
        nested_failures,
        joint_failures,
    })
}

/// One row of a continuity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub distance: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    /// Gaps nonincreasing (10% slack) as the distance decreases.
    pub monotone: bool,
}

/// Relative slack allowed in the monotonicity check.
pub const MONOTONE_SLACK: f64 = 0.1;

/// Solve against every driver with identical Brownian increments and tabulate
/// `rho_alpha` distance to the last driver against the sup-node state gap.
pub fn ito_lyons_convergence(
    system: &AffineRoughSystem,
    drivers: &[GridRoughPath],
    x0: &DVector<f64>,
    control: ControlFn<'_>,
    seed: u64,
    alpha: f64,
) -> Result<ContinuityTable> {
    let Some(reference) = drivers.last() else {
        return Err(Error::Parameter("driver sequence is empty".into()));
    };
    if drivers.iter().any(|d| !d.grid().same_as(reference.grid())) {
        return Err(Error::Dimension("all drivers must share the reference grid".into()));
    }
    let dw = crate::rng::brownian_increments(seed, system.dim_w, reference.grid());
    let solutions = drivers
        .par_iter()
        .map(|d| solve_with_increments(system, d, x0, control, dw.clone()))
        .collect::<Result<Vec<_>>>()?;
    let last = solutions.last().unwrap();
    let rows = drivers
        .par_iter()
        .zip(&solutions)
        .map(|(d, s)| {
            Ok(ContinuityRow { distance: holder_distance(d, reference, alpha)?.total(), gap: s.sup_distance(last) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContinuityTable { monotone: is_monotone(&rows), rows })
}

/// Ordering by decreasing distance, each gap is at most `1 + slack` times
/// the previous one (up to roundoff).
pub fn is_monotone(rows: &[ContinuityRow]) -> bool {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| b.distance.total_cmp(&a.distance));
    sorted.windows(2).all(|w| w[1].gap <= (1.0 + MONOTONE_SLACK) * w[0].gap + 1e-13)
}

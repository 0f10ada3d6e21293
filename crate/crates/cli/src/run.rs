//! Subcommand dispatch. Every run computes all artifacts in memory first and
//! only then touches the output directory, so a failing run leaves no files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use roughctl_core::integral::{ItoDecomposition, ScalarField};
use roughctl_core::io::{write_closed_loop, write_riccati, write_table, write_trajectories_long, write_transform};
use roughctl_core::lq::{adjoint_pair_lq, hamiltonian_du, simulate_closed_loop, LqSpec};
use roughctl_core::rng::{brownian_increments, mix};
use roughctl_core::rough_path::brownian_samples;
use roughctl_core::rsde::{self_convergence_order, solve_with_increments};
use roughctl_core::smp::{
    cost_monte_carlo, gradient_check, ito_lyons_convergence, pathwise_equivalence, perturbation_test, random_direction,
    EquivalenceSetup, LqContext, PerturbDirection, PerturbationFamily,
};
use roughctl_core::{
    build_transform, crosscheck_transform, lift_brownian_stratonovich, lift_piecewise_linear, rough_ito_residual,
    solve_sample, GridRoughPath, TimeGrid,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{stride_of, RunConfig, Subcommand, SystemSpec};
use crate::CliError;

/// Seed family tags derived from the master seed.
const FAMILY_DRIVER: u64 = 1;
const FAMILY_SAMPLES: u64 = 2;

/// Slack on the decrease of the Itô residual under mesh halving.
const ITO_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Everything a run produces, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub subcommand: Subcommand,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    /// CSV and text artifacts by file name.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new(subcommand: Subcommand, config: &RunConfig) -> Self {
        let seeds = BTreeMap::from([
            ("master".to_string(), config.master_seed),
            ("driver".to_string(), mix(config.master_seed, FAMILY_DRIVER)),
            ("samples".to_string(), mix(config.master_seed, FAMILY_SAMPLES)),
        ]);
        Self { subcommand, checks: Vec::new(), metrics: BTreeMap::new(), seeds, files: Vec::new() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// `value <= threshold` passes; NaN never does.
    fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), pass: value <= threshold, value, threshold });
    }

    fn at_least(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), pass: value >= threshold, value, threshold });
    }

    fn metric(&mut self, name: &str, value: impl Serialize) {
        self.metrics.insert(name.into(), serde_json::to_value(value).expect("metrics serialize"));
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn seed(&self, family: &str) -> u64 {
        self.seeds[family]
    }

    pub fn summary_json(&self) -> Vec<u8> {
        let failures: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let v = json!({
            "subcommand": self.subcommand.name(),
            "pass": self.pass(),
            "failures": failures,
            "checks": self.checks,
            "metrics": self.metrics,
        });
        pretty(&v)
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json serializes");
    bytes.push(b'\n');
    bytes
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn table(columns: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    write_table(&mut out, columns, rows)?;
    Ok(out)
}

/// Manifest: config echo, seeds, version and SHA-256 of every artifact.
/// Thread count and output directory are left out so that the bytes depend
/// only on the config proper and the seed.
pub fn manifest_json(config: &RunConfig, output: &RunOutput, summary: &[u8]) -> Vec<u8> {
    let echo = RunConfig { output: None, ..config.clone() };
    let mut files: BTreeMap<&str, String> =
        output.files.iter().map(|(name, bytes)| (name.as_str(), hex_sha256(bytes))).collect();
    files.insert("summary.json", hex_sha256(summary));
    pretty(&json!({
        "tool": "roughctl",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": config.subcommand.name(),
        "config": echo,
        "seeds": output.seeds,
        "files": files,
    }))
}

/// Write all artifacts plus `summary.json` and `manifest.json` into `dir`.
pub fn write_outputs(config: &RunConfig, output: &RunOutput, dir: &Path) -> Result<(), CliError> {
    let summary = output.summary_json();
    let manifest = manifest_json(config, output, &summary);
    fs::create_dir_all(dir)?;
    for (name, bytes) in &output.files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(dir.join("summary.json"), summary)?;
    fs::write(dir.join("manifest.json"), manifest)?;
    Ok(())
}

/// Validate, compute, then write. Returns whether every check passed.
pub fn run(config: &RunConfig, dir: &Path, verbose: bool) -> Result<bool, CliError> {
    config.validate()?;
    let output = execute(config, verbose)?;
    write_outputs(config, &output, dir)?;
    Ok(output.pass())
}

pub fn execute(config: &RunConfig, verbose: bool) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::new(config.subcommand, config);
    if verbose {
        eprintln!("roughctl: {} with master seed {}", config.subcommand.name(), config.master_seed);
    }
    match config.subcommand {
        Subcommand::Lift => lift(config, &mut out)?,
        Subcommand::Rsde => rsde(config, &mut out)?,
        Subcommand::TransformCheck => transform_check(config, &mut out)?,
        Subcommand::Lq => lq(config, &mut out)?,
        Subcommand::SmpCheck => smp_check(config, &mut out)?,
        Subcommand::Equivalence => equivalence(config, &mut out)?,
        Subcommand::Convergence => convergence(config, &mut out)?,
        Subcommand::ItoCheck => ito_check(config, &mut out)?,
    }
    if verbose {
        for c in &out.checks {
            eprintln!("roughctl: {} {} (value {}, threshold {})", c.name, if c.pass { "ok" } else { "FAILED" }, c.value, c.threshold);
        }
    }
    Ok(out)
}

fn driver(config: &RunConfig, seed: u64, dims: usize, grid: &TimeGrid) -> Result<GridRoughPath, CliError> {
    Ok(lift_brownian_stratonovich(seed, dims, config.numerics.fine_mesh, grid)?.with_alpha(config.numerics.alpha))
}

fn system(config: &RunConfig) -> &SystemSpec {
    config.system.as_ref().expect("validated system block")
}

fn lq_spec(config: &RunConfig) -> &LqSpec {
    config.lq.as_ref().expect("validated lq block")
}

fn zero_control(_t: f64, _x: &DVector<f64>) -> DVector<f64> {
    DVector::zeros(1)
}

fn lift(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let d = config.experiment.dims;
    let path = driver(config, out.seed("driver"), d, &config.grid())?;
    let mut text = Vec::new();
    path.write_to(&mut text)?;
    out.file("driver.txt", text);
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=d).map(|i| format!("eta_{i}")));
    columns.extend((1..=d).flat_map(|i| (1..=d).map(move |j| format!("area_{i}{j}"))));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..path.grid().len())
        .map(|k| {
            let area = if k == 0 { DMatrix::zeros(d, d) } else { path.chen_area(0, k).expect("valid nodes") };
            let mut row = vec![path.grid().t(k)];
            row.extend(path.value(k).iter());
            row.extend((0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| area[(i, j)]));
            row
        })
        .collect();
    out.file("lift.csv", table(&cols, &rows)?);
    out.metric("nodes", path.grid().len());
    out.metric("fingerprint", format!("{:016x}", path.fingerprint()));
    out.at_most("geometricity_defect", path.geometricity_defect(), config.numerics.tolerances.defect);
    Ok(())
}

fn rsde(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let grid = config.grid();
    let spec = system(config);
    let sys = spec.build(grid.len());
    let x0 = DVector::from_element(1, spec.x0);
    let path = driver(config, out.seed("driver"), 1, &grid)?;
    let samples = out.seed("samples");
    let n = config.experiment.n_samples;
    let terminals = (0..n)
        .into_par_iter()
        .map(|i| solve_sample(&sys, &path, &x0, &zero_control, mix(samples, i as u64)).map(|t| t.terminal()[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = roughctl_core::MeanEstimate::from_samples(&terminals);
    let shown = (0..config.experiment.n_paths.min(n))
        .map(|i| solve_sample(&sys, &path, &x0, &zero_control, mix(samples, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = Vec::new();
    write_trajectories_long(&mut csv, &shown)?;
    out.file("trajectories.csv", csv);
    out.metric("terminal", stats);
    let finite = terminals.iter().filter(|v| !v.is_finite()).count();
    out.at_most("nonfinite_terminals", finite as f64, 0.0);

    // self-convergence against the fine lift of the same driver
    let fine_grid = TimeGrid::with_mesh(config.numerics.horizon, config.numerics.fine_mesh)?;
    let stride = stride_of(config.numerics.mesh, config.numerics.fine_mesh).expect("validated");
    if stride >= 2 && grid.intervals() >= 4 {
        let fine_path = driver(config, out.seed("driver"), 1, &fine_grid)?;
        let fine_sys = spec.build(fine_grid.len());
        let h = config.numerics.mesh;
        let meshes = [4.0 * h, 2.0 * h, h];
        let meshes: Vec<f64> = meshes.into_iter().filter(|&m| m <= config.numerics.horizon / 2.0).collect();
        if meshes.len() == 3 {
            let order = self_convergence_order(&fine_sys, &fine_path, &x0, &zero_control, samples, &meshes)?;
            out.metric("self_convergence", &order);
            out.at_least("self_convergence_order", order.order(), 0.4);
        }
    }
    Ok(())
}

fn transform_check(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let grid = config.grid();
    let spec = system(config);
    let sys = spec.build(grid.len());
    let x0 = DVector::from_element(1, spec.x0);
    let opts = config.transform_options();
    let (drivers, samples) = (out.seed("driver"), out.seed("samples"));
    let n = config.experiment.n_samples;
    let reports = (0..n)
        .into_par_iter()
        .map(|i| {
            let path = driver(config, mix(drivers, i as u64), 1, &grid)?;
            Ok(crosscheck_transform(&sys, &path, &x0, &zero_control, mix(samples, i as u64), &opts)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i as f64, r.discrepancy, r.relative, r.product_defect])
        .collect();
    out.file("crosscheck.csv", table(&["sample", "discrepancy", "relative", "product_defect"], &rows)?);
    let first = build_transform(&sys.rough, &driver(config, mix(drivers, 0), 1, &grid)?, &opts)?;
    let mut csv = Vec::new();
    write_transform(&mut csv, &first)?;
    out.file("transform.csv", csv);
    let rel: Vec<f64> = reports.iter().map(|r| r.relative).collect();
    let mean = roughctl_core::MeanEstimate::from_samples(&rel);
    out.metric("relative_gap", mean);
    out.metric("max_relative_gap", rel.iter().copied().fold(0.0, f64::max));
    out.at_most("mean_relative_gap", mean.mean, config.numerics.tolerances.crosscheck);
    let defect = reports.iter().map(|r| r.product_defect).fold(0.0, f64::max);
    out.at_most("product_defect", defect, config.numerics.tolerances.defect);
    Ok(())
}

fn lq_context(config: &RunConfig, out: &RunOutput) -> Result<LqContext, CliError> {
    let path = driver(config, out.seed("driver"), 1, &config.grid())?;
    Ok(LqContext::new(lq_spec(config), &path, &config.transform_options())?)
}

/// Max `|dH/du|` over `n_paths` closed-loop runs, which are also returned.
fn stationarity(ctx: &LqContext, n_paths: usize, seed: u64) -> Result<(f64, Vec<roughctl_core::lq::SamplePath>), CliError> {
    let ric = ctx.riccati()?;
    let runs = (0..n_paths as u64)
        .map(|i| simulate_closed_loop(&ctx.data, &ctx.transform, ric, mix(seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst: f64 = 0.0;
    for run in &runs {
        let (y, z) = adjoint_pair_lq(ric, &run.xtilde, &run.u)?;
        for k in 0..y.len() {
            worst = worst.max(hamiltonian_du(&ctx.data, &ctx.transform, k, y[k], z[k], run.u[k]).abs());
        }
    }
    Ok((worst, runs))
}

fn lq(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let ctx = lq_context(config, out)?;
    let ric = ctx.riccati()?;
    let mut csv = Vec::new();
    write_riccati(&mut csv, ric)?;
    out.file("riccati.csv", csv);
    let (worst, runs) = stationarity(&ctx, config.experiment.n_paths.max(1), out.seed("samples"))?;
    let mut csv = Vec::new();
    write_closed_loop(&mut csv, ctx.grid().times(), &runs)?;
    out.file("closedloop.csv", csv);
    let report = cost_monte_carlo(&ctx, &ctx.optimal()?, config.experiment.n_samples, out.seed("samples"))?;
    let value = ric.value(lq_spec(config).x0);
    out.metric("value", value);
    out.metric("cost", report.estimate);
    out.metric("failed_samples", report.failure_count);
    out.metric("min_p", ric.p.iter().copied().fold(f64::INFINITY, f64::min));
    out.metric("denominator_min", ric.denom_min);
    out.at_most("stationarity", worst, config.numerics.tolerances.stationarity);
    // distribution-type comparison: three standard errors
    out.at_most("value_vs_monte_carlo_in_se", (value - report.mean()).abs() / report.std_err(), 3.0);
    Ok(())
}

fn smp_check(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let ctx = lq_context(config, out)?;
    let e = &config.experiment;
    let samples = out.seed("samples");
    let (worst, _) = stationarity(&ctx, e.n_paths.max(1), samples)?;
    out.at_most("stationarity", worst, config.numerics.tolerances.stationarity);

    let optimal = ctx.optimal()?;
    let n = ctx.grid().len();
    let mut dirs: Vec<PerturbDirection> =
        (0..e.directions).map(|j| random_direction(ctx.grid(), e.modes, mix(samples, 1000 + j as u64))).collect();
    dirs.push(PerturbDirection::Path(vec![1.0; n]));
    let mut rows = Vec::new();
    let mut mismatch: f64 = 0.0;
    for (shift, base) in [
        (0.0, PerturbDirection::Path(vec![0.0; n]).apply(&optimal, 0.0)),
        (e.shift, PerturbDirection::Path(vec![e.shift; n]).apply(&optimal, 1.0)),
    ] {
        let rep = gradient_check(&ctx, &base, &dirs, e.fd_eps, e.n_samples, samples)?;
        for (j, g) in rep.entries.iter().enumerate() {
            rows.push(vec![
                shift,
                j as f64,
                g.adjoint.mean,
                g.adjoint.std_err,
                g.fd.mean,
                g.fd.std_err,
                g.fd_half.mean,
                g.relative_mismatch.unwrap_or(f64::NAN),
                if g.richardson_consistent { 1.0 } else { 0.0 },
            ]);
        }
        mismatch = mismatch.max(rep.max_relative_mismatch);
    }
    out.file(
        "gradients.csv",
        table(
            &["shift", "direction", "adjoint", "adjoint_se", "fd", "fd_se", "fd_half", "relative_mismatch", "richardson_consistent"],
            &rows,
        )?,
    );
    out.at_most("gradient_mismatch", mismatch, config.numerics.tolerances.gradient);

    let family = PerturbationFamily { n_directions: e.directions, eps: e.eps.clone(), modes: e.modes, adversarial: true };
    let rep = perturbation_test(&ctx, &family, e.n_samples, samples)?;
    let rows: Vec<Vec<f64>> = rep
        .entries
        .iter()
        .map(|p| {
            vec![
                p.direction.map_or(-1.0, |d| d as f64),
                p.eps,
                p.cost.mean,
                p.cost.std_err,
                p.paired_gap.mean,
                p.paired_gap.std_err,
                if p.pass { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    out.file("perturbations.csv", table(&["direction", "eps", "cost", "cost_se", "paired_gap", "paired_gap_se", "pass"], &rows)?);
    out.metric("baseline_cost", rep.baseline);
    let failing = rep.entries.iter().filter(|p| !p.pass).count();
    out.at_most("perturbations_beating_optimum", failing as f64, 0.0);
    Ok(())
}

fn equivalence(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let e = &config.experiment;
    let setup = EquivalenceSetup {
        mesh: config.numerics.mesh,
        fine_mesh: config.numerics.fine_mesh,
        n_outer: e.n_outer,
        n_inner: e.n_inner,
        transform: config.transform_options(),
    };
    let rep = pathwise_equivalence(lq_spec(config), &setup, out.seed("samples"))?;
    let rows: Vec<Vec<f64>> =
        rep.values.iter().zip(&rep.analytic_values).enumerate().map(|(i, (v, a))| vec![i as f64, *v, *a]).collect();
    out.file("values.csv", table(&["driver", "value_monte_carlo", "value_riccati"], &rows)?);
    out.metric("nested", rep.nested);
    out.metric("joint", rep.joint);
    out.metric("value_variance", rep.value_variance);
    out.metric("value_quantiles_0_5_50_95_100", rep.quantiles);
    out.metric("nested_failures", rep.nested_failures);
    out.metric("joint_failures", rep.joint_failures);
    out.at_most("nested_vs_joint_in_combined_se", (rep.nested.mean - rep.joint.mean).abs() / rep.combined_err, 2.0);
    Ok(())
}

fn convergence(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let grid = config.grid();
    let spec = system(config);
    let sys = spec.build(grid.len());
    let w = brownian_samples(out.seed("driver"), 1, &grid);
    let last = grid.len() - 1;
    let mut drivers = Vec::new();
    let mut meshes = Vec::new();
    for &level in &config.experiment.levels {
        let h = 0.5f64.powi(level as i32);
        let stride = stride_of(h, config.numerics.mesh).expect("validated level");
        let s: Vec<DVector<f64>> = (0..grid.len())
            .map(|k| {
                let lo = k / stride * stride;
                let frac = (k - lo) as f64 / stride as f64;
                &w[lo] * (1.0 - frac) + &w[(lo + stride).min(last)] * frac
            })
            .collect();
        drivers.push(lift_piecewise_linear(&s, &grid)?);
        meshes.push(h);
    }
    drivers.push(lift_piecewise_linear(&w, &grid)?);
    meshes.push(config.numerics.mesh);
    let x0 = DVector::from_element(1, spec.x0);
    let tab = ito_lyons_convergence(&sys, &drivers, &x0, &zero_control, out.seed("samples"), config.numerics.alpha)?;
    let rows: Vec<Vec<f64>> = meshes.iter().zip(&tab.rows).map(|(h, r)| vec![*h, r.distance, r.gap]).collect();
    out.file("convergence.csv", table(&["interpolation_mesh", "distance", "gap"], &rows)?);
    out.metric("rows", &tab.rows);
    out.at_least("monotone", if tab.monotone { 1.0 } else { 0.0 }, 1.0);
    Ok(())
}

/// Mean rough Itô residual of `x^2` at meshes `4h, 2h, h`.
fn ito_check(config: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let spec = system(config);
    let h = config.numerics.mesh;
    let (drivers, samples) = (out.seed("driver"), out.seed("samples"));
    let f = |x: &DVector<f64>| x[0] * x[0];
    let g = |x: &DVector<f64>| 2.0 * x;
    let hess = |_x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0);
    let field = ScalarField { f: &f, gradient: Some(&g), hessian: Some(&hess) };
    let (a, b, c, s) = (spec.drift_linear, spec.drift_offset, spec.vol_linear, spec.vol_offset);
    let (big_f, small_f) = (spec.rough_linear, spec.rough_forcing);
    let x0 = DVector::from_element(1, spec.x0);
    let mut rows = Vec::new();
    for mesh in [4.0 * h, 2.0 * h, h] {
        let grid = TimeGrid::with_mesh(config.numerics.horizon, mesh)?;
        let sys = spec.build(grid.len());
        let residuals = (0..config.experiment.n_samples)
            .into_par_iter()
            .map(|i| {
                let path = driver(config, mix(drivers, i as u64), 1, &grid)?;
                let dw = brownian_increments(mix(samples, i as u64), 1, &grid);
                let traj = solve_with_increments(&sys, &path, &x0, &zero_control, dw.clone())?;
                let n = traj.x.len();
                let dec = ItoDecomposition {
                    drift: traj.x[..n - 1].iter().map(|x| DVector::from_element(1, a * x[0] + b)).collect(),
                    diffusion: traj.x[..n - 1].iter().map(|x| DMatrix::from_element(1, 1, c * x[0] + s)).collect(),
                    dw,
                    xprime: traj.zprime.clone(),
                    xsecond: traj
                        .x
                        .iter()
                        .map(|x| vec![DMatrix::from_element(1, 1, big_f * (big_f * x[0] + small_f))])
                        .collect(),
                    x: traj.x,
                };
                Ok(rough_ito_residual(&field, &dec, &path)?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let est = roughctl_core::MeanEstimate::from_samples(&residuals);
        rows.push(vec![mesh, est.mean, est.std_err]);
    }
    out.file("ito.csv", table(&["mesh", "mean_residual", "std_err"], &rows)?);
    out.metric("residual_at_mesh", rows[2][1]);
    let ratio = |i: usize| if rows[i][1] <= 1e-12 { 0.0 } else { rows[i + 1][1] / rows[i][1] };
    out.metric("halving_ratios", [ratio(0), ratio(1)]);
    out.at_most("residual_ratio_first_halving", ratio(0), 1.0 + ITO_SLACK);
    out.at_most("residual_ratio_second_halving", ratio(1), 1.0 + ITO_SLACK);
    Ok(())
}

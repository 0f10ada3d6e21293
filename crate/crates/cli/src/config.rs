//! Run configuration: one TOML file per run, parsed strictly.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use roughctl_core::rsde::{DiffusionFn, DriftFn};
use roughctl_core::{AffineRoughSystem, LinearScheme, LqSpec, RoughCoefficients, TimeGrid, TransformOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Lift,
    Rsde,
    TransformCheck,
    Lq,
    SmpCheck,
    Equivalence,
    Convergence,
    ItoCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lift => "lift",
            Self::Rsde => "rsde",
            Self::TransformCheck => "transform-check",
            Self::Lq => "lq",
            Self::SmpCheck => "smp-check",
            Self::Equivalence => "equivalence",
            Self::Convergence => "convergence",
            Self::ItoCheck => "ito-check",
        }
    }

    fn needs_lq(self) -> bool {
        matches!(self, Self::Lq | Self::SmpCheck | Self::Equivalence)
    }

    fn needs_system(self) -> bool {
        matches!(self, Self::Rsde | Self::TransformCheck | Self::Convergence | Self::ItoCheck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on `|A^-1 A - I|`.
    #[serde(default = "d_defect")]
    pub defect: f64,
    /// Mean relative gap of the direct vs transformed solve.
    #[serde(default = "d_crosscheck")]
    pub crosscheck: f64,
    /// Bound on `|dH/du|` along the closed loop.
    #[serde(default = "d_stationarity")]
    pub stationarity: f64,
    /// Relative adjoint vs finite-difference mismatch.
    #[serde(default = "d_gradient")]
    pub gradient: f64,
}

fn d_defect() -> f64 {
    1e-6
}
fn d_crosscheck() -> f64 {
    1e-2
}
fn d_stationarity() -> f64 {
    1e-6
}
fn d_gradient() -> f64 {
    0.05
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { defect: d_defect(), crosscheck: d_crosscheck(), stationarity: d_stationarity(), gradient: d_gradient() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    pub mesh: f64,
    /// Mesh of the Brownian sample underlying each driver lift.
    pub fine_mesh: f64,
    /// Hölder exponent of the rough path distance.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub scheme: LinearScheme,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn d_horizon() -> f64 {
    1.0
}
fn d_alpha() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    /// Trajectories written to CSV.
    #[serde(default = "d_paths")]
    pub n_paths: usize,
    #[serde(default = "d_outer")]
    pub n_outer: usize,
    #[serde(default = "d_inner")]
    pub n_inner: usize,
    /// Perturbation sizes.
    #[serde(default = "d_eps")]
    pub eps: Vec<f64>,
    /// Finite-difference step.
    #[serde(default = "d_fd_eps")]
    pub fd_eps: f64,
    #[serde(default = "d_directions")]
    pub directions: usize,
    /// Fourier modes of the random directions.
    #[serde(default = "d_modes")]
    pub modes: usize,
    /// Constant control offset of the second gradient base point.
    #[serde(default = "d_shift")]
    pub shift: f64,
    /// Driver dimension for `lift`.
    #[serde(default = "d_dims")]
    pub dims: usize,
    /// Dyadic levels `l` of the interpolation meshes `2^-l` for `convergence`.
    #[serde(default = "d_levels")]
    pub levels: Vec<u32>,
}

fn d_samples() -> usize {
    1000
}
fn d_paths() -> usize {
    10
}
fn d_outer() -> usize {
    200
}
fn d_inner() -> usize {
    500
}
fn d_eps() -> Vec<f64> {
    vec![0.01, 0.1, 0.5]
}
fn d_fd_eps() -> f64 {
    0.1
}
fn d_directions() -> usize {
    20
}
fn d_modes() -> usize {
    4
}
fn d_shift() -> f64 {
    0.4
}
fn d_dims() -> usize {
    1
}
fn d_levels() -> Vec<u32> {
    vec![4, 6, 8]
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            n_samples: d_samples(),
            n_paths: d_paths(),
            n_outer: d_outer(),
            n_inner: d_inner(),
            eps: d_eps(),
            fd_eps: d_fd_eps(),
            directions: d_directions(),
            modes: d_modes(),
            shift: d_shift(),
            dims: d_dims(),
            levels: d_levels(),
        }
    }
}

/// Scalar system `dX = (a X + b) dt + (c X + s) dW + (F X + f) d eta` with
/// constant coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default)]
    pub drift_linear: f64,
    #[serde(default)]
    pub drift_offset: f64,
    #[serde(default)]
    pub vol_linear: f64,
    #[serde(default)]
    pub vol_offset: f64,
    #[serde(default)]
    pub rough_linear: f64,
    #[serde(default)]
    pub rough_forcing: f64,
    pub x0: f64,
}

impl SystemSpec {
    pub fn build(&self, nodes: usize) -> AffineRoughSystem {
        let (a, b, c, s) = (self.drift_linear, self.drift_offset, self.vol_linear, self.vol_offset);
        let drift: DriftFn =
            Arc::new(move |_t, x: &DVector<f64>, _u: &DVector<f64>| DVector::from_element(1, a * x[0] + b));
        let diffusion: DiffusionFn =
            Arc::new(move |_t, x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_element(1, 1, c * x[0] + s));
        let rough = RoughCoefficients::scalar_constant(self.rough_linear, self.rough_forcing, nodes);
        AffineRoughSystem::new(1, 1, drift, diffusion, rough).expect("scalar system dimensions are consistent")
    }

    fn check(&self) -> Result<(), String> {
        let all = [
            self.drift_linear,
            self.drift_offset,
            self.vol_linear,
            self.vol_offset,
            self.rough_linear,
            self.rough_forcing,
            self.x0,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err("system coefficients must be finite".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub master_seed: u64,
    /// Output directory, overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub numerics: Numerics,
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq: Option<LqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<(), String> {
    if v >= min {
        Ok(())
    } else {
        Err(format!("{name} must be at least {min}, got {v}"))
    }
}

/// `coarse` is an integer multiple of `fine`, up to roundoff.
pub fn stride_of(coarse: f64, fine: f64) -> Option<usize> {
    let r = coarse / fine;
    let k = r.round();
    (k >= 1.0 && (r - k).abs() <= 1e-9 * r).then_some(k as usize)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn transform_options(&self) -> TransformOptions {
        TransformOptions { scheme: self.numerics.scheme, defect_tolerance: self.numerics.tolerances.defect }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::with_mesh(self.numerics.horizon, self.numerics.mesh).expect("validated mesh")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.check().map_err(CliError::Config)
    }

    fn check(&self) -> Result<(), String> {
        let n = &self.numerics;
        positive("numerics.horizon", n.horizon)?;
        positive("numerics.mesh", n.mesh)?;
        positive("numerics.fine_mesh", n.fine_mesh)?;
        let grid = TimeGrid::with_mesh(n.horizon, n.mesh).map_err(|e| format!("numerics.mesh: {e}"))?;
        if stride_of(n.mesh, n.fine_mesh).is_none() {
            return Err(format!("numerics.mesh {} is not a multiple of fine_mesh {}", n.mesh, n.fine_mesh));
        }
        if !(n.alpha > 1.0 / 3.0 && n.alpha <= 0.5) {
            return Err(format!("numerics.alpha must lie in (1/3, 1/2], got {}", n.alpha));
        }
        let t = &n.tolerances;
        positive("tolerances.defect", t.defect)?;
        positive("tolerances.crosscheck", t.crosscheck)?;
        positive("tolerances.stationarity", t.stationarity)?;
        positive("tolerances.gradient", t.gradient)?;

        let e = &self.experiment;
        at_least("experiment.n_samples", e.n_samples, 2)?;
        at_least("experiment.n_outer", e.n_outer, 2)?;
        at_least("experiment.n_inner", e.n_inner, 2)?;
        at_least("experiment.directions", e.directions, 1)?;
        at_least("experiment.modes", e.modes, 1)?;
        if e.eps.is_empty() {
            return Err("experiment.eps must not be empty".into());
        }
        for &v in &e.eps {
            positive("experiment.eps entries", v)?;
        }
        positive("experiment.fd_eps", e.fd_eps)?;
        if !e.shift.is_finite() {
            return Err("experiment.shift must be finite".into());
        }
        if !(1..=3).contains(&e.dims) {
            return Err(format!("experiment.dims must be 1, 2 or 3, got {}", e.dims));
        }
        if self.subcommand == Subcommand::Convergence {
            if e.levels.is_empty() || e.levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err("experiment.levels must be nonempty and strictly increasing".into());
            }
            for &l in &e.levels {
                let h = 0.5f64.powi(l as i32);
                if h <= n.mesh || stride_of(h, n.mesh).is_none() || stride_of(n.horizon, h).is_none() {
                    return Err(format!("level {l}: 2^-{l} must be a coarser divisor-compatible mesh than {}", n.mesh));
                }
            }
        }
        if self.subcommand == Subcommand::ItoCheck && stride_of(n.mesh, n.fine_mesh).is_some_and(|s| s < 4) {
            return Err("ito-check halves the mesh twice: fine_mesh must be at most mesh / 4".into());
        }

        match (&self.lq, self.subcommand.needs_lq()) {
            (None, true) => return Err(format!("{} needs an [lq] block", self.subcommand.name())),
            (Some(_), false) => return Err(format!("{} does not take an [lq] block", self.subcommand.name())),
            (Some(spec), true) => {
                if (spec.horizon - n.horizon).abs() > 1e-12 * n.horizon {
                    return Err(format!("lq.horizon {} differs from numerics.horizon {}", spec.horizon, n.horizon));
                }
                spec.discretize(&grid).map_err(|e| format!("lq: {e}"))?;
                if !spec.in_closed_form_scope() {
                    return Err("lq: the problem is outside the closed-form scope".into());
                }
            }
            (None, false) => {}
        }
        match (&self.system, self.subcommand.needs_system()) {
            (None, true) => Err(format!("{} needs a [system] block", self.subcommand.name())),
            (Some(_), false) => Err(format!("{} does not take a [system] block", self.subcommand.name())),
            (Some(s), true) => s.check(),
            (None, false) => Ok(()),
        }
    }
}

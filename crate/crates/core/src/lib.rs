//! Rough stochastic differential equations with affine rough drivers, the
//! affine rough Doss–Sussmann transform, and the scalar rough and pathwise
//! linear-quadratic control pipeline built on top of them.
//!
//! The modules build on each other bottom-up:
//!
//! - [`rough_path`]: discrete geometric rough paths, Brownian lifts, Chen
//!   reconstruction and discrete Hölder distances.
//! - [`integral`]: compensated Riemann sums for controlled samples and the
//!   rough Itô formula check.
//! - [`rsde`]: the second-order one-step solver for affine rough SDEs.
//! - [`doss_sussmann`]: the pathwise transform `x -> A x + zeta` and its
//!   cross-check against the direct solver.
//! - [`lq`]: Riccati pair, optimal feedback and closed-loop simulation.
//! - [`smp`]: Monte Carlo experiments (costs, gradients, perturbations,
//!   rough/pathwise value equivalence, continuity of the solution map).

pub mod doss_sussmann;
pub mod error;
pub mod grid;
pub mod integral;
pub mod io;
pub mod lq;
pub mod rng;
pub mod rough_path;
pub mod rsde;
pub mod smp;
pub mod stats;

pub use doss_sussmann::{build_transform, crosscheck_transform, Direction, TransformData, TransformOptions};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use integral::{controlled_product, rough_integral, rough_ito_residual, ControlledSample};
pub use lq::{LqSpec, RiccatiSolution, TimeFn};
pub use rough_path::{holder_distance, lift_brownian_stratonovich, lift_piecewise_linear, GridRoughPath, RoughDistanceReport};
pub use rsde::{davie_step, solve_linear_rde, solve_sample, AffineRoughSystem, LinearScheme, RoughCoefficients, Trajectory};
pub use stats::MeanEstimate;

//! Seed derivation and Gaussian increment generation.
//!
//! Every random quantity in the crate is a pure function of a `u64` seed.
//! Per-sample seeds are derived with [`mix`], so ensemble results do not
//! depend on scheduling or thread count.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::TimeGrid;

/// Stream tag for driver (rough path) sampling.
pub const STREAM_DRIVER: u64 = 0x6472_6976_6572;
/// Stream tag for the Brownian motion `W` entering the SDE.
pub const STREAM_W: u64 = 0x0000_0000_0077;
/// Stream tag for random perturbation directions.
pub const STREAM_DIRECTION: u64 = 0x0064_6972_6563;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sample `index` from a master seed.
///
/// `mix(m, i) = splitmix64(splitmix64(m) ^ splitmix64(i + golden))`.
pub fn mix(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Brownian increments of dimension `dim` over every interval of `grid`.
pub fn brownian_increments(seed: u64, dim: usize, grid: &TimeGrid) -> Vec<DVector<f64>> {
    let mut rng = rng_for(seed, STREAM_W);
    (0..grid.intervals())
        .map(|k| {
            let s = grid.dt(k).sqrt();
            DVector::from_fn(dim, |_, _| s * standard_normal(&mut rng))
        })
        .collect()
}

/// Sum consecutive blocks of `stride` increments (fine path to coarse grid).
pub fn aggregate_increments(fine: &[DVector<f64>], stride: usize) -> Vec<DVector<f64>> {
    fine.chunks(stride)
        .map(|c| c.iter().skip(1).fold(c[0].clone(), |acc, v| acc + v))
        .collect()
}

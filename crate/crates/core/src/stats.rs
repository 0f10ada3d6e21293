//! Order-insensitive accumulation and Monte Carlo summaries.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated sum of a slice, evaluated in index order.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error `stdev / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, std_dev: f64::NAN, std_err: f64::NAN };
        }
        let mean = compensated_sum(values) / n as f64;
        if n < 2 {
            return Self { n, mean, std_dev: 0.0, std_err: 0.0 };
        }
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = compensated_sum(&sq) / (n as f64 - 1.0);
        let std_dev = var.max(0.0).sqrt();
        Self { n, mean, std_dev, std_err: std_dev / (n as f64).sqrt() }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_err(&self, other: &MeanEstimate) -> f64 {
        self.std_err.hypot(other.std_err)
    }
}

/// 64-bit FNV-1a over the bit patterns of `f64` values, used to tag reports.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn write_f64s(&mut self, values: &[f64]) {
        for v in values {
            self.write_bytes(&v.to_bits().to_le_bytes());
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

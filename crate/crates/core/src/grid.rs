use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing discretisation `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    mesh: f64,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Parameter("a grid needs at least two nodes".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Parameter(format!("grid must start at 0, got {}", times[0])));
        }
        let mut mesh = 0.0_f64;
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            if !(gap > 0.0) || !gap.is_finite() {
                return Err(Error::Parameter("grid times must be strictly increasing".into()));
            }
            mesh = mesh.max(gap);
        }
        Ok(Self { times, mesh })
    }

    /// Uniform grid with `steps` intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Parameter("need at least one step".into()));
        }
        let h = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        times[steps] = horizon;
        Self::new(times)
    }

    /// Uniform grid whose mesh is `mesh`; `horizon / mesh` must be an integer.
    pub fn with_mesh(horizon: f64, mesh: f64) -> Result<Self> {
        if !(mesh > 0.0) || !mesh.is_finite() {
            return Err(Error::Parameter(format!("mesh must be positive, got {mesh}")));
        }
        let ratio = horizon / mesh;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Parameter(format!(
                "mesh {mesh} does not divide horizon {horizon}"
            )));
        }
        Self::uniform(horizon, steps as usize)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Every `stride`-th node; the interval count must be divisible by `stride`.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.intervals() % stride != 0 {
            return Err(Error::Parameter(format!(
                "stride {stride} does not divide {} intervals",
                self.intervals()
            )));
        }
        Self::new(self.times.iter().copied().step_by(stride).collect())
    }

    /// Node index holding time `t` exactly (up to a relative 1e-12).
    pub fn node_of(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(t >= -1e-12 * horizon && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::Range { time: t, horizon });
        }
        let k = self.times.partition_point(|&s| s < t - 1e-12 * horizon.max(1.0));
        let k = k.min(self.len() - 1);
        if (self.times[k] - t).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Range { time: t, horizon });
        }
        Ok(k)
    }

    /// Whether both grids hold the same nodes (bitwise up to 1e-12 relative).
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.len() == other.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_invariants() {
        let g = TimeGrid::uniform(2.0, 8).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.horizon(), 2.0);
        assert_eq!(g.intervals(), 8);
        assert!((g.mesh() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mesh_is_max_gap() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.5, 0.6]).unwrap();
        assert!((g.mesh() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::with_mesh(1.0, 0.3).is_err());
        assert!(TimeGrid::with_mesh(1.0, -0.5).is_err());
    }

    #[test]
    fn node_lookup() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.node_of(0.5).unwrap(), 2);
        assert_eq!(g.node_of(1.0).unwrap(), 4);
        assert!(g.node_of(0.3).is_err());
        assert!(matches!(g.node_of(1.5), Err(Error::Range { .. })));
    }

    #[test]
    fn coarsening_keeps_endpoints() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let c = g.coarsen(4).unwrap();
        assert_eq!(c.intervals(), 4);
        assert_eq!(c.horizon(), 1.0);
        assert!(g.coarsen(3).is_err());
    }
}

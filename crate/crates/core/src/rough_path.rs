//! Discrete geometric rough paths on a time grid.
//!
//! A [`GridRoughPath`] stores the first level `eta(t_k)` at every node and the
//! second level `eta2_{t_k, t_{k+1}}` on consecutive intervals only. The
//! second level between arbitrary nodes is rebuilt with Chen's relation
//!
//! ```text
//! eta2_{s,t} = eta2_{s,u} + eta2_{u,t} + d eta_{s,u} (x) d eta_{u,t}
//! ```
//!
//! Entry `(i, j)` of a second-level matrix is the iterated integral
//! `int d eta^i d eta^j`.
//!
//! # File format
//!
//! [`GridRoughPath::write_to`] emits comma separated text:
//!
//! ```text
//! d,n,alpha,T
//! <d>,<n>,<alpha>,<T>
//! t,eta_1,...,eta_d                 (header, then n node rows)
//! l2_11,l2_12,...,l2_dd             (header, then n-1 interval rows, row-major)
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written file
//! reproduces the path bit for bit.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{rng_for, standard_normal, STREAM_DRIVER};

/// Default Hölder exponent attached to Brownian lifts.
pub const BROWNIAN_ALPHA: f64 = 0.45;

/// Default fine mesh, as a fraction of the horizon, for Brownian lifts.
pub const DEFAULT_FINE_FRACTION: f64 = 1.0 / 16384.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridRoughPath {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
    level2: Vec<DMatrix<f64>>,
    alpha: f64,
}

/// Discrete `rho_alpha` components over all grid pairs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoughDistanceReport {
    pub first_level: f64,
    pub second_level: f64,
}

impl RoughDistanceReport {
    pub fn total(&self) -> f64 {
        self.first_level + self.second_level
    }
}

fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

impl GridRoughPath {
    pub fn new(
        grid: TimeGrid,
        values: Vec<DVector<f64>>,
        level2: Vec<DMatrix<f64>>,
        alpha: f64,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if level2.len() != grid.intervals() {
            return Err(Error::Dimension(format!(
                "{} second-level entries for {} intervals",
                level2.len(),
                grid.intervals()
            )));
        }
        let d = values[0].len();
        if d == 0 {
            return Err(Error::Dimension("path dimension must be positive".into()));
        }
        if values.iter().any(|v| v.len() != d) || level2.iter().any(|m| m.shape() != (d, d)) {
            return Err(Error::Dimension("inconsistent path dimension".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("alpha {alpha} outside (0, 1]")));
        }
        Ok(Self { grid, values, level2, alpha })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn level2(&self) -> &[DMatrix<f64>] {
        &self.level2
    }

    /// `eta(t_{k+1}) - eta(t_k)`.
    pub fn step(&self, k: usize) -> DVector<f64> {
        &self.values[k + 1] - &self.values[k]
    }

    pub fn increment(&self, i: usize, j: usize) -> DVector<f64> {
        &self.values[j] - &self.values[i]
    }

    /// Second level between nodes `i < j`, rebuilt from consecutive intervals.
    pub fn chen_area(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        if i >= j {
            return Err(Error::Index(format!("chen_area needs i < j, got ({i}, {j})")));
        }
        if j >= self.grid.len() {
            return Err(Error::Index(format!("node {j} out of range")));
        }
        let mut area = self.level2[i].clone();
        for k in i + 1..j {
            let before = self.increment(i, k);
            area += &self.level2[k] + outer(&before, &self.step(k));
        }
        Ok(area)
    }

    /// Max over intervals of `|sym(eta2_k) - 1/2 d eta_k (x) d eta_k|`.
    pub fn geometricity_defect(&self) -> f64 {
        (0..self.grid.intervals())
            .map(|k| {
                let l = &self.level2[k];
                let sym = (l + l.transpose()) * 0.5;
                let dx = self.step(k);
                (sym - outer(&dx, &dx) * 0.5).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Keep every `stride`-th node, merging second levels with Chen's relation.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.coarsen(stride)?;
        let values = self.values.iter().step_by(stride).cloned().collect();
        let level2 = (0..grid.intervals())
            .map(|c| self.chen_area(c * stride, (c + 1) * stride))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values, level2, self.alpha)
    }

    /// Itô-type second level: subtract `1/2 I dt` on every interval.
    pub fn to_ito(&self) -> Self {
        let d = self.dim();
        let level2 = self
            .level2
            .iter()
            .enumerate()
            .map(|(k, l)| l - DMatrix::identity(d, d) * (0.5 * self.grid.dt(k)))
            .collect();
        Self { level2, ..self.clone() }
    }

    /// Node values translated by a constant vector (second level unchanged).
    pub fn shifted(&self, c: &DVector<f64>) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            ..self.clone()
        }
    }

    /// FNV-1a fingerprint of grid, node values and second levels.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::stats::Fnv::default();
        h.write_f64s(self.grid.times());
        for v in &self.values {
            h.write_f64s(v.as_slice());
        }
        for l in &self.level2 {
            h.write_f64s(l.as_slice());
        }
        h.finish()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        writeln!(out, "d,n,alpha,T")?;
        writeln!(out, "{},{},{},{}", d, self.grid.len(), self.alpha, self.grid.horizon())?;
        let head: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("eta_{i}")))
            .collect();
        writeln!(out, "{}", head.join(","))?;
        for (k, v) in self.values.iter().enumerate() {
            let row: Vec<String> = std::iter::once(self.grid.t(k))
                .chain(v.iter().copied())
                .map(|x| x.to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        let head: Vec<String> = (1..=d)
            .flat_map(|i| (1..=d).map(move |j| format!("l2_{i}{j}")))
            .collect();
        writeln!(out, "{}", head.join(","))?;
        for l in &self.level2 {
            let row: Vec<String> = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| l[(i, j)].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of rough path file".into()))?
                .map_err(Error::from)
        };
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
        };
        if next()?.trim() != "d,n,alpha,T" {
            return Err(Error::Format("missing rough path header".into()));
        }
        let meta = next()?;
        let meta: Vec<&str> = meta.split(',').collect();
        if meta.len() != 4 {
            return Err(Error::Format("header needs d,n,alpha,T".into()));
        }
        let d: usize = meta[0].trim().parse().map_err(|_| Error::Format("bad d".into()))?;
        let n: usize = meta[1].trim().parse().map_err(|_| Error::Format("bad n".into()))?;
        let alpha = parse(meta[2])?;
        next()?;
        let mut times = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let row = next()?;
            let nums = row.split(',').map(parse).collect::<Result<Vec<_>>>()?;
            if nums.len() != d + 1 {
                return Err(Error::Format(format!("node row has {} fields", nums.len())));
            }
            times.push(nums[0]);
            values.push(DVector::from_column_slice(&nums[1..]));
        }
        next()?;
        let mut level2 = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let row = next()?;
            let nums = row.split(',').map(parse).collect::<Result<Vec<_>>>()?;
            if nums.len() != d * d {
                return Err(Error::Format(format!("interval row has {} fields", nums.len())));
            }
            level2.push(DMatrix::from_row_slice(d, d, &nums));
        }
        Self::new(TimeGrid::new(times)?, values, level2, alpha)
    }
}

/// Canonical lift of the piecewise-linear interpolation of `samples`.
pub fn lift_piecewise_linear(samples: &[DVector<f64>], grid: &TimeGrid) -> Result<GridRoughPath> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} samples for {} grid nodes",
            samples.len(),
            grid.len()
        )));
    }
    let level2 = samples
        .windows(2)
        .map(|w| {
            let dx = &w[1] - &w[0];
            outer(&dx, &dx) * 0.5
        })
        .collect();
    GridRoughPath::new(grid.clone(), samples.to_vec(), level2, 0.5)
}

/// Piecewise-linear lift of fine samples, coarsened to every `stride`-th node
/// without materialising the fine second level.
pub fn lift_and_coarsen(
    samples: &[DVector<f64>],
    fine: &TimeGrid,
    coarse: &TimeGrid,
    alpha: f64,
) -> Result<GridRoughPath> {
    if samples.len() != fine.len() {
        return Err(Error::Dimension("sample count differs from fine grid".into()));
    }
    let d = samples[0].len();
    let mut coarse_nodes = Vec::with_capacity(coarse.len());
    for &t in coarse.times() {
        coarse_nodes.push(fine.node_of(t)?);
    }
    let mut values = Vec::with_capacity(coarse.len());
    let mut level2 = Vec::with_capacity(coarse.intervals());
    values.push(samples[coarse_nodes[0]].clone());
    let mut area = vec![0.0; d * d];
    let mut rel = vec![0.0; d];
    let mut dx = vec![0.0; d];
    for w in coarse_nodes.windows(2) {
        area.iter_mut().for_each(|a| *a = 0.0);
        rel.iter_mut().for_each(|r| *r = 0.0);
        for k in w[0]..w[1] {
            for i in 0..d {
                dx[i] = samples[k + 1][i] - samples[k][i];
            }
            for i in 0..d {
                let ri = rel[i] + 0.5 * dx[i];
                for j in 0..d {
                    area[i * d + j] += ri * dx[j];
                }
            }
            for i in 0..d {
                rel[i] += dx[i];
            }
        }
        values.push(samples[w[1]].clone());
        level2.push(DMatrix::from_row_slice(d, d, &area));
    }
    GridRoughPath::new(coarse.clone(), values, level2, alpha)
}

/// Refinement of `coarse` in which every interval is split into equal pieces
/// no longer than `fine_mesh`.
pub fn refine_grid(coarse: &TimeGrid, fine_mesh: f64) -> Result<TimeGrid> {
    if !(fine_mesh > 0.0) || !fine_mesh.is_finite() {
        return Err(Error::Parameter(format!("fine mesh must be positive, got {fine_mesh}")));
    }
    if fine_mesh > coarse.mesh() * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "fine mesh {fine_mesh} exceeds coarse mesh {}",
            coarse.mesh()
        )));
    }
    let mut times = vec![0.0];
    for k in 0..coarse.intervals() {
        let (a, b) = (coarse.t(k), coarse.t(k + 1));
        let m = ((b - a) / fine_mesh - 1e-9).ceil().max(1.0) as usize;
        for s in 1..m {
            times.push(a + (b - a) * s as f64 / m as f64);
        }
        times.push(b);
    }
    TimeGrid::new(times)
}

/// Standard Brownian sample path of dimension `dims` on `grid`, `B_0 = 0`.
pub fn brownian_samples(seed: u64, dims: usize, grid: &TimeGrid) -> Vec<DVector<f64>> {
    let mut rng = rng_for(seed, STREAM_DRIVER);
    let mut out = Vec::with_capacity(grid.len());
    let mut cur = DVector::zeros(dims);
    out.push(cur.clone());
    for k in 0..grid.intervals() {
        let s = grid.dt(k).sqrt();
        for i in 0..dims {
            cur[i] += s * standard_normal(&mut rng);
        }
        out.push(cur.clone());
    }
    out
}

/// Stratonovich Brownian rough path on `coarse_grid`: a Brownian sample on a
/// refinement with mesh at most `fine_mesh`, lifted piecewise-linearly and
/// merged onto the coarse nodes with Chen's relation.
pub fn lift_brownian_stratonovich(
    seed: u64,
    dims: usize,
    fine_mesh: f64,
    coarse_grid: &TimeGrid,
) -> Result<GridRoughPath> {
    if dims < 1 {
        return Err(Error::Parameter("Brownian lift needs dims >= 1".into()));
    }
    let fine = refine_grid(coarse_grid, fine_mesh)?;
    let samples = brownian_samples(seed, dims, &fine);
    lift_and_coarsen(&samples, &fine, coarse_grid, BROWNIAN_ALPHA)
}

/// Translation `eta + eps * gamma` by a path `gamma` sampled on the grid.
///
/// Cross iterated integrals over each interval are taken from straight-line
/// interpolation, so the result stays geometric.
pub fn translate(path: &GridRoughPath, gamma: &[DVector<f64>], eps: f64) -> Result<GridRoughPath> {
    if gamma.len() != path.grid.len() || gamma.iter().any(|g| g.len() != path.dim()) {
        return Err(Error::Dimension("translation needs one value of matching dimension per node".into()));
    }
    let values = path.values.iter().zip(gamma).map(|(v, g)| v + g * eps).collect();
    let level2 = (0..path.grid.intervals())
        .map(|k| {
            let dx = path.step(k);
            let dg = (&gamma[k + 1] - &gamma[k]) * eps;
            &path.level2[k] + (outer(&dx, &dg) + outer(&dg, &dx) + outer(&dg, &dg)) * 0.5
        })
        .collect();
    GridRoughPath::new(path.grid.clone(), values, level2, path.alpha)
}

/// Discrete `rho_alpha` between two paths on the same grid, maximised over
/// every node pair `i < j`.
pub fn holder_distance(
    a: &GridRoughPath,
    b: &GridRoughPath,
    alpha: f64,
) -> Result<RoughDistanceReport> {
    if !a.grid.same_as(&b.grid) || a.dim() != b.dim() {
        return Err(Error::Dimension("holder_distance needs identical grids and dimensions".into()));
    }
    let d = a.dim();
    let n = a.grid.len();
    let flat = |p: &GridRoughPath| -> (Vec<f64>, Vec<f64>) {
        let v = p.values.iter().flat_map(|x| x.iter().copied()).collect();
        let l = p
            .level2
            .iter()
            .flat_map(|m| (0..d).flat_map(move |i| (0..d).map(move |j| m[(i, j)])))
            .collect();
        (v, l)
    };
    let (va, la) = flat(a);
    let (vb, lb) = flat(b);
    let times = a.grid.times();
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    let mut diff = vec![0.0; d * d];
    for i in 0..n - 1 {
        diff.iter_mut().for_each(|x| *x = 0.0);
        for j in i + 1..n {
            let k = j - 1;
            // running second-level difference over [t_i, t_j]
            for p in 0..d {
                let ra = va[k * d + p] - va[i * d + p];
                let rb = vb[k * d + p] - vb[i * d + p];
                for q in 0..d {
                    let sa = va[j * d + q] - va[k * d + q];
                    let sb = vb[j * d + q] - vb[k * d + q];
                    diff[p * d + q] += la[k * d * d + p * d + q] - lb[k * d * d + p * d + q]
                        + ra * sa
                        - rb * sb;
                }
            }
            let span = times[j] - times[i];
            let mut inc = 0.0;
            for p in 0..d {
                let e = (va[j * d + p] - va[i * d + p]) - (vb[j * d + p] - vb[i * d + p]);
                inc += e * e;
            }
            let l2: f64 = diff.iter().map(|x| x * x).sum();
            first = first.max(inc.sqrt() / span.powf(alpha));
            second = second.max(l2.sqrt() / span.powf(2.0 * alpha));
        }
    }
    Ok(RoughDistanceReport { first_level: first, second_level: second })
}

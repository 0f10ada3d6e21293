//! CSV emission for trajectories, transforms, Riccati solutions and
//! closed-loop runs. Floats use Rust's shortest round-trip formatting, so
//! equal values always produce equal bytes.

use std::io::Write;

use crate::doss_sussmann::TransformData;
use crate::error::{Error, Result};
use crate::lq::{RiccatiSolution, SamplePath};
use crate::rsde::Trajectory;

fn row<W: Write>(out: &mut W, cells: impl IntoIterator<Item = f64>) -> Result<()> {
    let line: Vec<String> = cells.into_iter().map(|v| v.to_string()).collect();
    writeln!(out, "{}", line.join(","))?;
    Ok(())
}

fn header<W: Write>(out: &mut W, cols: &[String]) -> Result<()> {
    writeln!(out, "{}", cols.join(","))?;
    Ok(())
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// `t,x_1..x_n[,u_1..u_m]`, one row per node.
pub fn write_trajectory<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    let n = traj.x[0].len();
    let m = traj.controls.first().map_or(0, |u| u.len());
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("x", n));
    cols.extend(indexed("u", m));
    header(out, &cols)?;
    for (k, x) in traj.x.iter().enumerate() {
        let mut cells = vec![traj.grid.t(k)];
        cells.extend(x.iter());
        if let Some(u) = traj.controls.get(k) {
            cells.extend(u.iter());
        }
        row(out, cells)?;
    }
    Ok(())
}

/// Long format `sample_id,t,x_1..x_n` for an ensemble of trajectories.
pub fn write_trajectories_long<W: Write>(out: &mut W, trajs: &[Trajectory]) -> Result<()> {
    let Some(first) = trajs.first() else {
        return Err(Error::Format("no trajectories to write".into()));
    };
    let mut cols = vec!["sample_id".to_string(), "t".to_string()];
    cols.extend(indexed("x", first.x[0].len()));
    header(out, &cols)?;
    for (id, traj) in trajs.iter().enumerate() {
        for (k, x) in traj.x.iter().enumerate() {
            let mut cells = vec![id as f64, traj.grid.t(k)];
            cells.extend(x.iter());
            row(out, cells)?;
        }
    }
    Ok(())
}

/// `t, a_ij.., ainv_ij.., zeta_i.., defect` with matrices row-major.
pub fn write_transform<W: Write>(out: &mut W, tr: &TransformData) -> Result<()> {
    let n = tr.dim();
    let mut cols = vec!["t".to_string()];
    for name in ["a", "ainv"] {
        for i in 1..=n {
            cols.extend((1..=n).map(|j| format!("{name}_{i}{j}")));
        }
    }
    cols.extend(indexed("zeta", n));
    cols.push("defect".into());
    header(out, &cols)?;
    let defects = tr.node_defects();
    for k in 0..tr.grid.len() {
        let mut cells = vec![tr.grid.t(k)];
        for m in [&tr.a[k], &tr.ainv[k]] {
            for i in 0..n {
                cells.extend((0..n).map(|j| m[(i, j)]));
            }
        }
        cells.extend(tr.zeta[k].iter());
        cells.push(defects[k]);
        row(out, cells)?;
    }
    Ok(())
}

/// `t,P,q,r,hat_b,hat_d,hat_m,denominator`.
pub fn write_riccati<W: Write>(out: &mut W, ric: &RiccatiSolution) -> Result<()> {
    let cols: Vec<String> = ["t", "P", "q", "r", "hat_b", "hat_d", "hat_m", "denominator"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header(out, &cols)?;
    for k in 0..ric.grid.len() {
        row(
            out,
            [ric.grid.t(k), ric.p[k], ric.q[k], ric.r[k], ric.hat_b[k], ric.hat_d[k], ric.hat_m[k], ric.denominator(k)],
        )?;
    }
    Ok(())
}

/// Long format `sample_id,t,xtilde,x,u` for closed-loop runs.
pub fn write_closed_loop<W: Write>(out: &mut W, grid_times: &[f64], runs: &[SamplePath]) -> Result<()> {
    header(out, &["sample_id", "t", "xtilde", "x", "u"].map(String::from))?;
    for (id, run) in runs.iter().enumerate() {
        if run.x.len() != grid_times.len() {
            return Err(Error::Dimension("closed-loop run does not match the grid".into()));
        }
        for (k, &t) in grid_times.iter().enumerate() {
            row(out, [id as f64, t, run.xtilde[k], run.x[k], run.u[k]])?;
        }
    }
    Ok(())
}

/// Generic table: a header and rows of equal width.
pub fn write_table<W: Write>(out: &mut W, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    header(out, &columns.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    for r in rows {
        if r.len() != columns.len() {
            return Err(Error::Dimension(format!("row has {} cells, header {}", r.len(), columns.len())));
        }
        row(out, r.iter().copied())?;
    }
    Ok(())
}

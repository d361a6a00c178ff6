//! CSV and JSON artifacts.
//!
//! | file kind | columns |
//! |-----------|---------|
//! | curves    | `iter,algorithm,msd_db` |
//! | nodes     | `node,algorithm,msd_db_sim,msd_db_theory` |
//! | sweep     | `axis_value,algorithm,msd_db` |
//! | tracking  | `iter,component_index,estimate,truth` |
//! | gain      | `nu,kappa,gain_db_sim,gain_db_theory` |
//! | summary   | `algorithm,steady_msd_db,mean_comm_entries,dense_comm_entries,diverged_runs` |
//! | layout    | `node,x,y,regressor_power` and `kind,i,j` |

use std::fs::File;
use std::io::Write;
use std::path::Path;

use gmrflms::analysis::to_db;
use serde::Serialize;

use crate::analyze::AlgorithmTheory;
use crate::error::Result;
use crate::instance::Instance;
use crate::runner::RunSet;
use crate::sweep::{GainRecord, SweepRecord};

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    iter: usize,
    algorithm: &'a str,
    msd_db: f64,
}

pub fn write_curves(path: &Path, res: &RunSet) -> Result<()> {
    let rows = res.algorithms.iter().flat_map(|a| {
        a.msd_curve.iter().enumerate().map(move |(k, m)| CurveRow { iter: k, algorithm: &a.name, msd_db: to_db(*m) })
    });
    write_rows(path, rows, &["iter", "algorithm", "msd_db"])
}

#[derive(Serialize)]
struct NodeRow<'a> {
    node: usize,
    algorithm: &'a str,
    msd_db_sim: f64,
    msd_db_theory: Option<f64>,
}

/// Per-node steady state, with theory where the algorithm has one.
pub fn write_nodes(path: &Path, res: &RunSet, theory: &[AlgorithmTheory]) -> Result<()> {
    let rows = res.algorithms.iter().flat_map(|a| {
        let th = theory.iter().find(|t| t.name == a.name).and_then(|t| t.msd_per_node.as_ref());
        a.node_steady.iter().enumerate().map(move |(i, m)| NodeRow {
            node: i,
            algorithm: &a.name,
            msd_db_sim: to_db(*m),
            msd_db_theory: th.map(|t| to_db(t[i])),
        })
    });
    write_rows(path, rows, &["node", "algorithm", "msd_db_sim", "msd_db_theory"])
}

pub fn write_sweep(path: &Path, records: &[SweepRecord]) -> Result<()> {
    write_rows(path, records, &["axis_value", "algorithm", "msd_db"])
}

pub fn write_gain(path: &Path, records: &[GainRecord]) -> Result<()> {
    write_rows(path, records, &["nu", "kappa", "gain_db_sim", "gain_db_theory"])
}

#[derive(Serialize)]
struct TrackRow {
    iter: usize,
    component_index: usize,
    estimate: f64,
    truth: f64,
}

/// Writes the traced node; returns `false` if the run set has no trace.
pub fn write_tracking(path: &Path, res: &RunSet) -> Result<bool> {
    let Some(tr) = &res.tracking else {
        return Ok(false);
    };
    let rows = tr.components.iter().enumerate().flat_map(|(ci, &c)| {
        tr.estimate
            .iter()
            .zip(&tr.truth)
            .enumerate()
            .map(move |(k, (e, t))| TrackRow { iter: k, component_index: c, estimate: e[ci], truth: t[ci] })
    });
    write_rows(path, rows, &["iter", "component_index", "estimate", "truth"])?;
    Ok(true)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    algorithm: &'a str,
    steady_msd_db: f64,
    mean_comm_entries: f64,
    dense_comm_entries: usize,
    diverged_runs: usize,
}

pub fn write_summary(path: &Path, res: &RunSet) -> Result<()> {
    let rows = res.algorithms.iter().map(|a| SummaryRow {
        algorithm: &a.name,
        steady_msd_db: a.steady_msd_db(),
        mean_comm_entries: a.mean_comm_entries,
        dense_comm_entries: a.dense_comm_entries,
        diverged_runs: a.diverged_runs,
    });
    write_rows(
        path,
        rows,
        &["algorithm", "steady_msd_db", "mean_comm_entries", "dense_comm_entries", "diverged_runs"],
    )
}

#[derive(Serialize)]
struct LayoutNode {
    node: usize,
    x: f64,
    y: f64,
    regressor_power: f64,
}

#[derive(Serialize)]
struct LayoutEdge {
    kind: &'static str,
    i: usize,
    j: usize,
}

/// Node positions with regressor powers, and the communication and dependency edges.
pub fn write_layout(nodes: &Path, edges: &Path, inst: &Instance) -> Result<()> {
    let rows = inst.topology.positions().iter().enumerate().map(|(i, p)| LayoutNode {
        node: i,
        x: p[0],
        y: p[1],
        regressor_power: inst.stats.power(i),
    });
    write_rows(nodes, rows, &["node", "x", "y", "regressor_power"])?;
    let comm = inst.topology.comm_edges().map(|(i, j)| LayoutEdge { kind: "communication", i, j });
    let dep = inst.topology.dep_edges().map(|(i, j)| LayoutEdge { kind: "dependency", i, j });
    write_rows(edges, comm.chain(dep), &["kind", "i", "j"])
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

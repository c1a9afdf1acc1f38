use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::{SimError, TrialMetrics};
use crate::basis::{density, icb_update, mcb, CycleBasis, TeamBasis};
use crate::graph::{replay_g2o, G2oError, PoseGraph};
use crate::solver::{solve_cycle_pgo, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Mcb,
    Icb,
    MaIcb,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Mcb => "mcb",
            BasisKind::Icb => "icb",
            BasisKind::MaIcb => "ma-icb",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mcb" => Ok(BasisKind::Mcb),
            "icb" => Ok(BasisKind::Icb),
            "ma-icb" => Ok(BasisKind::MaIcb),
            other => Err(format!("unknown basis kind `{other}` (expected mcb, icb or ma-icb)")),
        }
    }
}

/// One CSV row. Missing values are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub dataset: String,
    pub edges: usize,
    pub basis: String,
    pub density: f64,
    pub update_ms: Option<f64>,
    pub optimize_ms: Option<f64>,
    pub rot_rmse_deg: Option<f64>,
    pub trans_rmse_m: Option<f64>,
    pub ate_m: Option<f64>,
    pub seed: u64,
}

impl BenchRecord {
    pub fn from_trial(dataset: &str, edges: usize, kind: BasisKind, m: &TrialMetrics, seed: u64, timing: bool) -> Self {
        Self {
            dataset: dataset.to_string(),
            edges,
            basis: kind.to_string(),
            density: m.density,
            update_ms: timing.then_some(m.update_ms),
            optimize_ms: timing.then_some(m.optimize_ms),
            rot_rmse_deg: Some(m.rot_rmse_deg),
            trans_rmse_m: Some(m.trans_rmse_m),
            ate_m: Some(m.ate_m),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub seed: u64,
    /// Record wall-clock columns; without them the output is reproducible
    /// byte for byte.
    pub timing: bool,
    /// Run the optimizer at every checkpoint.
    pub solve: bool,
    pub first_checkpoint: usize,
    /// Edge-count ratio between consecutive checkpoints.
    pub growth: f64,
    pub solver: SolverOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            timing: true,
            solve: true,
            first_checkpoint: 16,
            growth: 1.25,
            solver: SolverOptions::default(),
        }
    }
}

struct Replay<'a> {
    kind: BasisKind,
    opts: &'a BenchOptions,
    name: String,
    basis: CycleBasis,
    team: TeamBasis,
    next: usize,
    /// Update times of insertions that added a cycle since the last row.
    pending: Vec<f64>,
    rows: Vec<BenchRecord>,
}

impl Replay<'_> {
    fn on_edge(&mut self, graph: &PoseGraph, e: crate::graph::EdgeId) -> Result<(), SimError> {
        let t = Instant::now();
        let added = match self.kind {
            BasisKind::Icb => icb_update(&mut self.basis, graph, e)?,
            BasisKind::MaIcb => self.team.insert(graph, e)?.is_some(),
            BasisKind::Mcb => false,
        };
        if added {
            self.pending.push(t.elapsed().as_secs_f64() * 1e3);
        }
        if graph.edge_count() >= self.next {
            self.checkpoint(graph)?;
            self.next = ((graph.edge_count() as f64 * self.opts.growth).ceil() as usize).max(graph.edge_count() + 1);
        }
        Ok(())
    }

    fn checkpoint(&mut self, graph: &PoseGraph) -> Result<(), SimError> {
        let update_ms = match self.kind {
            BasisKind::Mcb => {
                let t = Instant::now();
                self.basis = mcb(graph);
                Some(t.elapsed().as_secs_f64() * 1e3)
            }
            _ => (!self.pending.is_empty()).then(|| self.pending.iter().sum::<f64>() / self.pending.len() as f64),
        };
        self.pending.clear();
        let basis = match self.kind {
            BasisKind::MaIcb => self.team.basis(),
            _ => &self.basis,
        };
        let optimize_ms =
            if self.opts.solve { Some(solve_cycle_pgo(graph, basis, &self.opts.solver)?.report.time_ms) } else { None };
        self.rows.push(BenchRecord {
            dataset: self.name.clone(),
            edges: graph.edge_count(),
            basis: self.kind.to_string(),
            density: density(basis, graph)?,
            update_ms: update_ms.filter(|_| self.opts.timing),
            optimize_ms: optimize_ms.filter(|_| self.opts.timing),
            rot_rmse_deg: None,
            trans_rmse_m: None,
            ate_m: None,
            seed: self.opts.seed,
        });
        Ok(())
    }
}

/// Replays a g2o file edge by edge, maintaining the chosen basis, and emits
/// a row at geometrically spaced edge counts and at the end. For `icb` and
/// `ma-icb`, `update_ms` is the mean time of the insertions that added a
/// cycle since the previous row; for `mcb` it is one full recomputation.
pub fn bench_replay(path: &Path, kind: BasisKind, opts: &BenchOptions) -> Result<Vec<BenchRecord>, SimError> {
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    let mut r = Replay {
        kind,
        opts,
        name,
        basis: CycleBasis::new(),
        team: TeamBasis::new(),
        next: opts.first_checkpoint.max(1),
        pending: Vec::new(),
        rows: Vec::new(),
    };
    let graph = match replay_g2o(path, |g, e| r.on_edge(g, e)) {
        Ok(g) => g,
        Err(G2oError::Callback { source, .. }) => {
            return Err(*source.downcast::<SimError>().expect("callback errors are SimError"))
        }
        Err(e) => return Err(e.into()),
    };
    if r.rows.last().is_none_or(|row| row.edges != graph.edge_count()) {
        r.checkpoint(&graph)?;
    }
    Ok(r.rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "dataset",
            "edges",
            "basis",
            "density",
            "update_ms",
            "optimize_ms",
            "rot_rmse_deg",
            "trans_rmse_m",
            "ate_m",
            "seed",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

//! Synthetic scenarios, accuracy metrics and dataset replay.

mod bench;
mod manhattan;
mod metrics;
mod sinewave;

pub use bench::{bench_replay, write_csv, BasisKind, BenchOptions, BenchRecord};
pub use manhattan::{
    evaluate, gen_manhattan, manhattan_trial, ManhattanConfig, ManhattanSim, TrialMetrics, M3500_INFORMATION,
};
pub use metrics::{ate, mean_std, rmse};
pub use sinewave::{condense, gen_sinewave, sinewave_trial, LowDofError, SinewaveConfig, SinewaveSim};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::basis::BasisError;
use crate::graph::{Edge, EdgeKind, G2oError, GraphError, PoseGraph, VertexId};
use crate::lie::{Information, LieError, Pose};
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0} estimates for {1} reference poses")]
    SizeMismatch(usize, usize),
    #[error("no ground truth for vertex {0}")]
    NoTruth(VertexId),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] G2oError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// True world-frame poses, indexed by agent tag then local vertex index.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub poses: Vec<Vec<Pose>>,
}

impl GroundTruth {
    pub fn pose(&self, graph: &PoseGraph, v: VertexId) -> Result<Pose, SimError> {
        let vert = graph.vertex(v);
        self.poses.get(vert.agent as usize).and_then(|p| p.get(vert.local)).copied().ok_or(SimError::NoTruth(v))
    }

    /// True transform of every edge, `T_from⁻¹ · T_to`.
    pub fn edge_transforms(&self, graph: &PoseGraph) -> Result<Vec<Pose>, SimError> {
        graph.edges().iter().map(|e| Ok(self.pose(graph, e.from)?.between(&self.pose(graph, e.to)?)?)).collect()
    }

    /// Every vertex pose expressed in the frame of `root`.
    pub fn relative_vertex_poses(&self, graph: &PoseGraph, root: VertexId) -> Result<Vec<Pose>, SimError> {
        let r = self.pose(graph, root)?;
        graph.vertex_ids().map(|v| Ok(r.between(&self.pose(graph, v)?)?)).collect()
    }
}

/// Planar graph with `edges` uniformly drawn vertex pairs (no self-loops,
/// parallel edges allowed) and unit-step measurements.
pub fn random_graph(vertices: usize, edges: usize, seed: u64) -> PoseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = PoseGraph::new();
    for _ in 0..vertices {
        g.add_vertex(0);
    }
    if vertices < 2 {
        return g;
    }
    for _ in 0..edges {
        let a = rng.gen_range(0..vertices);
        let b = (a + rng.gen_range(1..vertices)) % vertices;
        let m = Pose::se2(1.0, 0.0, 0.0);
        g.add_edge(Edge::new(VertexId(a), VertexId(b), m, Information::identity(3), EdgeKind::Odometry))
            .expect("distinct endpoints");
    }
    g
}

//! Append-only pose graph with stable vertex and edge indices.

mod g2o;
mod merge;

pub use g2o::{load_g2o, parse_g2o, replay_g2o, write_g2o, G2oError};
pub use merge::{connect_graphs, merge_agents, InterEdge, MergedGraph};

use std::collections::VecDeque;

use thiserror::Error;

use crate::lie::{Information, LieError, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Traversal direction of an edge: `Forward` goes `from → to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    LoopClosure,
    InterAgent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub agent: u32,
    /// Dense index within the owning agent.
    pub local: usize,
    /// Identifier used in the source file, if any.
    pub external: Option<u64>,
    /// Initial pose estimate carried by the source file, if any.
    pub initial: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    /// Measured transform of `to` expressed in the frame of `from`.
    pub measurement: Pose,
    pub info: Information,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(from: VertexId, to: VertexId, measurement: Pose, info: Information, kind: EdgeKind) -> Self {
        Self { from, to, measurement, info, kind }
    }

    /// The endpoint opposite to `v`.
    pub fn other(&self, v: VertexId) -> VertexId {
        if self.from == v {
            self.to
        } else {
            self.from
        }
    }

    /// Endpoints in traversal order for the given direction.
    pub fn oriented(&self, dir: Direction) -> (VertexId, VertexId) {
        match dir {
            Direction::Forward => (self.from, self.to),
            Direction::Backward => (self.to, self.from),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge {0} -> {1} is a self-loop")]
    SelfLoop(VertexId, VertexId),
    #[error("edge kind {kind:?} inconsistent with agents {from_agent} and {to_agent}")]
    KindMismatch { kind: EdgeKind, from_agent: u32, to_agent: u32 },
    #[error("measurement has {found} degrees of freedom, graph uses {expected}")]
    DofMismatch { expected: usize, found: usize },
    #[error("{0} and {1} are not connected")]
    Disconnected(VertexId, VertexId),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Ordered, oriented edge sequence between two vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Path {
    pub steps: Vec<(EdgeId, Direction)>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn edge_ids(&self) -> Vec<EdgeId> {
        self.steps.iter().map(|(e, _)| *e).collect()
    }

    pub fn reversed(&self) -> Path {
        Path { steps: self.steps.iter().rev().map(|(e, d)| (*e, d.reversed())).collect() }
    }
}

#[derive(Debug, Clone, Default)]
struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn push(&mut self) {
        self.parent.push(self.parent.len());
        self.rank.push(0);
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    /// Returns true if the two sets were distinct.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    /// Incident edges per vertex, in ascending `EdgeId` order.
    adjacency: Vec<Vec<EdgeId>>,
    per_agent: Vec<usize>,
    sets: DisjointSets,
    components: usize,
    dof: Option<usize>,
}

impl PartialEq for PoseGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, agent: u32) -> VertexId {
        self.push_vertex(agent, None, None)
    }

    pub fn push_vertex(&mut self, agent: u32, external: Option<u64>, initial: Option<Pose>) -> VertexId {
        let a = agent as usize;
        if self.per_agent.len() <= a {
            self.per_agent.resize(a + 1, 0);
        }
        let local = self.per_agent[a];
        self.per_agent[a] += 1;
        let id = VertexId(self.vertices.len());
        self.vertices.push(Vertex { agent, local, external, initial });
        self.adjacency.push(Vec::new());
        self.sets.push();
        self.components += 1;
        id
    }

    /// Appends an edge, validating endpoints, kind and information.
    pub fn add_edge(&mut self, edge: Edge) -> Result<EdgeId, GraphError> {
        let n = self.vertices.len();
        for v in [edge.from, edge.to] {
            if v.0 >= n {
                return Err(GraphError::UnknownVertex(v));
            }
        }
        if edge.from == edge.to {
            return Err(GraphError::SelfLoop(edge.from, edge.to));
        }
        let (fa, ta) = (self.vertices[edge.from.0].agent, self.vertices[edge.to.0].agent);
        if (fa != ta) != (edge.kind == EdgeKind::InterAgent) {
            return Err(GraphError::KindMismatch { kind: edge.kind, from_agent: fa, to_agent: ta });
        }
        let dof = edge.measurement.dof();
        if edge.info.dim() != dof {
            return Err(LieError::DimensionMismatch { expected: dof, found: edge.info.dim() }.into());
        }
        match self.dof {
            Some(d) if d != dof => return Err(GraphError::DofMismatch { expected: d, found: dof }),
            _ => self.dof = Some(dof),
        }
        let id = EdgeId(self.edges.len());
        self.adjacency[edge.from.0].push(id);
        self.adjacency[edge.to.0].push(id);
        if self.sets.union(edge.from.0, edge.to.0) {
            self.components -= 1;
        }
        self.edges.push(edge);
        Ok(id)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    /// Dimension of the cycle space: `|E| - |V| + #components`.
    pub fn cycle_rank(&self) -> usize {
        self.edges.len() + self.components - self.vertices.len()
    }

    /// Tangent dimension of the measurements (3 or 6), once an edge exists.
    pub fn dof(&self) -> Option<usize> {
        self.dof
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0]
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len()).map(VertexId)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incident(&self, v: VertexId) -> &[EdgeId] {
        &self.adjacency[v.0]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v.0].len()
    }

    pub fn agent_count(&self) -> usize {
        self.per_agent.len()
    }

    pub fn connected(&self, a: VertexId, b: VertexId) -> bool {
        self.sets.find(a.0) == self.sets.find(b.0)
    }

    /// Component label per vertex (smallest vertex index of the component).
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.vertices.len()];
        for v in 0..self.vertices.len() {
            let r = self.sets.find(v);
            if label[r] == usize::MAX {
                label[r] = v;
            }
            label[v] = label[r];
        }
        label
    }

    /// Looks up a vertex by its source-file identifier.
    pub fn find_external(&self, external: u64) -> Option<VertexId> {
        self.vertices.iter().position(|v| v.external == Some(external)).map(VertexId)
    }

    /// Minimum-hop path from `from` to `to`, optionally ignoring one edge.
    ///
    /// Neighbors are expanded in ascending `EdgeId` order, which makes the
    /// returned path the lexicographically smallest edge sequence among all
    /// shortest ones.
    pub fn shortest_path(&self, from: VertexId, to: VertexId, exclude: Option<EdgeId>) -> Result<Path, GraphError> {
        self.shortest_path_where(from, to, |e| Some(e) != exclude)
    }

    /// [`PoseGraph::shortest_path`] restricted to edges accepted by `allow`.
    pub fn shortest_path_where(
        &self,
        from: VertexId,
        to: VertexId,
        allow: impl Fn(EdgeId) -> bool,
    ) -> Result<Path, GraphError> {
        let n = self.vertices.len();
        for v in [from, to] {
            if v.0 >= n {
                return Err(GraphError::UnknownVertex(v));
            }
        }
        if from == to {
            return Ok(Path::default());
        }
        let mut parent: Vec<Option<EdgeId>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[from.0] = true;
        queue.push_back(from);
        'bfs: while let Some(u) = queue.pop_front() {
            for &e in &self.adjacency[u.0] {
                if !allow(e) {
                    continue;
                }
                let w = self.edges[e.0].other(u);
                if !seen[w.0] {
                    seen[w.0] = true;
                    parent[w.0] = Some(e);
                    if w == to {
                        break 'bfs;
                    }
                    queue.push_back(w);
                }
            }
        }
        if !seen[to.0] {
            return Err(GraphError::Disconnected(from, to));
        }
        let mut steps = Vec::new();
        let mut v = to;
        while v != from {
            let e = parent[v.0].expect("every reached vertex but the source has a parent");
            let edge = &self.edges[e.0];
            let prev = edge.other(v);
            let dir = if edge.from == prev { Direction::Forward } else { Direction::Backward };
            steps.push((e, dir));
            v = prev;
        }
        steps.reverse();
        Ok(Path { steps })
    }

    /// Vertex sequence visited by `path` starting from `start`.
    pub fn path_vertices(&self, start: VertexId, path: &Path) -> Vec<VertexId> {
        let mut out = vec![start];
        let mut cur = start;
        for (e, _) in &path.steps {
            cur = self.edges[e.0].other(cur);
            out.push(cur);
        }
        out
    }

    /// Checks adjacency against the edge list and the cycle-rank identity.
    pub fn audit(&self) -> Result<(), String> {
        let mut expected: Vec<Vec<EdgeId>> = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            expected[e.from.0].push(EdgeId(i));
            expected[e.to.0].push(EdgeId(i));
        }
        if expected != self.adjacency {
            return Err("adjacency lists disagree with edge list".into());
        }
        let labels = self.component_labels();
        let mut roots: Vec<usize> = labels.clone();
        roots.sort_unstable();
        roots.dedup();
        if roots.len() != self.components {
            return Err(format!("component count {} but {} labels", self.components, roots.len()));
        }
        if self.edges.len() + self.components < self.vertices.len() {
            return Err("fewer edges than a spanning forest needs".into());
        }
        Ok(())
    }
}

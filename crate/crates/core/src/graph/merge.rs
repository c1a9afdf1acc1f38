use super::{Edge, EdgeId, EdgeKind, GraphError, PoseGraph, VertexId};
use crate::lie::{Information, Pose};

/// A measured edge joining vertices that live in two different agent graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct InterEdge {
    pub from_graph: usize,
    pub from: VertexId,
    pub to_graph: usize,
    pub to: VertexId,
    pub measurement: Pose,
    pub info: Information,
}

/// Union of several agent graphs plus their connecting edges.
///
/// Vertices and edges of graph `k` keep their relative order and are shifted
/// by `vertex_offsets[k]` / `edge_offsets[k]`; connectors follow all agent
/// edges in arrival order.
#[derive(Debug, Clone)]
pub struct MergedGraph {
    pub graph: PoseGraph,
    pub vertex_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    /// Merged ids of the connecting edges, in arrival order.
    pub connectors: Vec<EdgeId>,
}

impl MergedGraph {
    pub fn vertex(&self, graph: usize, v: VertexId) -> VertexId {
        VertexId(self.vertex_offsets[graph] + v.0)
    }

    pub fn edge(&self, graph: usize, e: EdgeId) -> EdgeId {
        EdgeId(self.edge_offsets[graph] + e.0)
    }

    /// Index of the source graph that owns merged vertex `v`.
    pub fn owner(&self, v: VertexId) -> usize {
        self.vertex_offsets.partition_point(|&o| o <= v.0) - 1
    }
}

pub fn merge_agents(graphs: &[&PoseGraph], inter: &[InterEdge]) -> Result<MergedGraph, GraphError> {
    let mut merged = PoseGraph::new();
    let mut vertex_offsets = Vec::with_capacity(graphs.len());
    let mut edge_offsets = Vec::with_capacity(graphs.len());
    let mut agent_offset = 0u32;
    for g in graphs {
        vertex_offsets.push(merged.vertex_count());
        for v in g.vertices() {
            merged.push_vertex(agent_offset + v.agent, v.external, v.initial);
        }
        agent_offset += g.agent_count().max(1) as u32;
    }
    for (k, g) in graphs.iter().enumerate() {
        edge_offsets.push(merged.edge_count());
        let off = vertex_offsets[k];
        for e in g.edges() {
            let shifted = Edge { from: VertexId(e.from.0 + off), to: VertexId(e.to.0 + off), ..e.clone() };
            merged.add_edge(shifted)?;
        }
    }
    let mut connectors = Vec::with_capacity(inter.len());
    for c in inter {
        let endpoint = |gi: usize, v: VertexId| -> Result<VertexId, GraphError> {
            let g = graphs.get(gi).ok_or(GraphError::UnknownVertex(v))?;
            if v.0 >= g.vertex_count() {
                return Err(GraphError::UnknownVertex(v));
            }
            Ok(VertexId(vertex_offsets[gi] + v.0))
        };
        let (from, to) = (endpoint(c.from_graph, c.from)?, endpoint(c.to_graph, c.to)?);
        let e = Edge::new(from, to, c.measurement, c.info.clone(), EdgeKind::InterAgent);
        connectors.push(merged.add_edge(e)?);
    }
    Ok(MergedGraph { graph: merged, vertex_offsets, edge_offsets, connectors })
}

/// Joins two agent graphs with connecting edges (`from` in `gi`, `to` in `gj`).
pub fn connect_graphs(gi: &PoseGraph, gj: &PoseGraph, edges: &[InterEdge]) -> Result<MergedGraph, GraphError> {
    for e in edges {
        if e.from_graph != 0 || e.to_graph != 1 {
            return Err(GraphError::KindMismatch {
                kind: EdgeKind::InterAgent,
                from_agent: e.from_graph as u32,
                to_agent: e.to_graph as u32,
            });
        }
    }
    merge_agents(&[gi, gj], edges)
}

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use super::{BasisError, Cycle, CycleBasis};
use crate::graph::{connect_graphs, EdgeId, EdgeKind, GraphError, InterEdge, MergedGraph, PoseGraph, VertexId};

/// Copies a per-graph basis into merged edge indices.
fn shift(basis: &CycleBasis, offset: usize) -> impl Iterator<Item = Cycle> + '_ {
    basis
        .cycles()
        .iter()
        .map(move |c| Cycle { steps: c.steps.iter().map(|&(e, d)| (EdgeId(e.0 + offset), d)).collect() })
}

/// Intra-graph shortest path, returned as merged edge ids.
fn leg(
    merged: &MergedGraph,
    graphs: &[&PoseGraph],
    g: usize,
    from: VertexId,
    to: VertexId,
) -> Result<Vec<EdgeId>, BasisError> {
    let off = merged.vertex_offsets[g];
    let path = graphs[g].shortest_path(VertexId(from.0 - off), VertexId(to.0 - off), None)?;
    Ok(path.steps.iter().map(|(e, _)| merged.edge(g, *e)).collect())
}

/// Evaluates path legs concurrently and joins them with the given connectors.
fn assemble(
    merged: &MergedGraph,
    graphs: &[&PoseGraph],
    legs: &[(usize, VertexId, VertexId)],
    connectors: &[EdgeId],
) -> Result<Cycle, BasisError> {
    let paths: Vec<Vec<EdgeId>> = if legs.len() == 2 {
        let (l0, l1) = (legs[0], legs[1]);
        let (p0, p1) = rayon::join(|| leg(merged, graphs, l0.0, l0.1, l0.2), || leg(merged, graphs, l1.0, l1.1, l1.2));
        vec![p0?, p1?]
    } else {
        legs.par_iter().map(|&(g, a, b)| leg(merged, graphs, g, a, b)).collect::<Result<_, _>>()?
    };
    let mut edges: Vec<EdgeId> = paths.into_iter().flatten().collect();
    edges.extend_from_slice(connectors);
    Cycle::from_edges(&merged.graph, &edges)
}

/// Connected cycle basis of two agent graphs joined by `inter` (arrival order).
///
/// The result holds `bi`, `bj`, and one cycle per consecutive connector pair
/// `(k, k+1)`: the path between their endpoints in `gi`, both connectors, and
/// the path between their endpoints in `gj`.
pub fn ma_icb(
    gi: &PoseGraph,
    gj: &PoseGraph,
    inter: &[InterEdge],
    bi: &CycleBasis,
    bj: &CycleBasis,
) -> Result<(MergedGraph, CycleBasis), BasisError> {
    let merged = connect_graphs(gi, gj, inter)?;
    let graphs = [gi, gj];
    let mut basis = CycleBasis::new();
    for c in shift(bi, merged.edge_offsets[0]).chain(shift(bj, merged.edge_offsets[1])) {
        basis.push(c)?;
    }
    for k in 1..merged.connectors.len() {
        let (prev, next) = (merged.connectors[k - 1], merged.connectors[k]);
        let (ep, en) = (merged.graph.edge(prev), merged.graph.edge(next));
        let legs = [(0, ep.from, en.from), (1, en.to, ep.to)];
        basis.push(assemble(&merged, &graphs, &legs, &[prev, next])?)?;
    }
    Ok((merged, basis))
}

/// Incrementally maintained basis of a multi-agent graph, driven by edge
/// insertions and the vertices' agent tags.
///
/// Intra-agent edges extend the basis as in [`icb_update`](super::icb_update)
/// with paths kept inside the agent. A connector between two agents that
/// already share one pairs with the latest of them, as in [`ma_icb`]. The
/// first connector of an agent pair closes a cycle only when the two agents
/// are already linked through others; that cycle follows the chain of first
/// connectors found by a breadth-first search over agents.
#[derive(Debug, Clone, Default)]
pub struct TeamBasis {
    basis: CycleBasis,
    latest: HashMap<(u32, u32), EdgeId>,
    /// First connector of each agent pair, per agent, in arrival order.
    links: HashMap<u32, Vec<(u32, EdgeId)>>,
}

fn agent_path(graph: &PoseGraph, agent: u32, from: VertexId, to: VertexId) -> Result<Vec<EdgeId>, BasisError> {
    let inside = |e: EdgeId| {
        let edge = graph.edge(e);
        graph.vertex(edge.from).agent == agent && graph.vertex(edge.to).agent == agent
    };
    Ok(graph.shortest_path_where(from, to, inside)?.edge_ids())
}

impl TeamBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays every edge of `graph` in id order.
    pub fn build(graph: &PoseGraph) -> Result<CycleBasis, BasisError> {
        let mut partial = PoseGraph::new();
        for v in graph.vertices() {
            partial.push_vertex(v.agent, v.external, v.initial);
        }
        let mut team = TeamBasis::new();
        for e in graph.edges() {
            let id = partial.add_edge(e.clone())?;
            team.insert(&partial, id)?;
        }
        Ok(team.into_basis())
    }

    pub fn basis(&self) -> &CycleBasis {
        &self.basis
    }

    pub fn into_basis(self) -> CycleBasis {
        self.basis
    }

    fn end_in(graph: &PoseGraph, e: EdgeId, agent: u32) -> VertexId {
        let edge = graph.edge(e);
        if graph.vertex(edge.from).agent == agent {
            edge.from
        } else {
            edge.to
        }
    }

    /// Agent-level route from `p` to `q` over first connectors.
    fn route(&self, p: u32, q: u32) -> Option<Vec<(u32, EdgeId)>> {
        let mut prev: HashMap<u32, (u32, EdgeId)> = HashMap::new();
        let mut queue = VecDeque::from([p]);
        let mut seen = std::collections::HashSet::from([p]);
        while let Some(g) = queue.pop_front() {
            if g == q {
                let mut hops = Vec::new();
                let mut at = q;
                while let Some(&(from, e)) = prev.get(&at) {
                    hops.push((at, e));
                    at = from;
                }
                hops.reverse();
                return Some(hops);
            }
            for &(h, e) in self.links.get(&g).into_iter().flatten() {
                if seen.insert(h) {
                    prev.insert(h, (g, e));
                    queue.push_back(h);
                }
            }
        }
        None
    }

    fn link(&mut self, p: u32, q: u32, e: EdgeId) {
        self.links.entry(p).or_default().push((q, e));
        self.links.entry(q).or_default().push((p, e));
    }

    /// Extends the basis after `e` was inserted into `graph`; returns the
    /// index of the new cycle, if any.
    pub fn insert(&mut self, graph: &PoseGraph, e: EdgeId) -> Result<Option<usize>, BasisError> {
        let edge = graph.edge(e);
        let (af, at) = (graph.vertex(edge.from).agent, graph.vertex(edge.to).agent);
        let nu = graph.cycle_rank();
        let closing = if af == at { Self::intra(graph, e, af)? } else { self.connector(graph, e, af, at)? };
        let Some(mut edges) = closing else {
            if self.basis.len() != nu {
                return Err(BasisError::Stale { expected: nu, cycles: self.basis.len(), rank: self.basis.rank() });
            }
            return Ok(None);
        };
        if self.basis.len() + 1 != nu {
            return Err(BasisError::Stale { expected: nu - 1, cycles: self.basis.len(), rank: self.basis.rank() });
        }
        edges.push(e);
        self.basis.push(Cycle::from_edges(graph, &edges)?)?;
        Ok(Some(self.basis.len() - 1))
    }

    fn intra(graph: &PoseGraph, e: EdgeId, agent: u32) -> Result<Option<Vec<EdgeId>>, BasisError> {
        let edge = graph.edge(e);
        let inside = |k: EdgeId| {
            let x = graph.edge(k);
            k != e && graph.vertex(x.from).agent == agent && graph.vertex(x.to).agent == agent
        };
        match graph.shortest_path_where(edge.to, edge.from, inside) {
            Ok(p) => return Ok(Some(p.edge_ids())),
            Err(GraphError::Disconnected(..)) => {}
            Err(err) => return Err(err.into()),
        }
        // Joined only through other agents.
        match graph.shortest_path(edge.to, edge.from, Some(e)) {
            Ok(p) => Ok(Some(p.edge_ids())),
            Err(GraphError::Disconnected(..)) if edge.kind == EdgeKind::LoopClosure => {
                Err(BasisError::DisconnectedLoop { edge: e, from: edge.from, to: edge.to })
            }
            Err(GraphError::Disconnected(..)) => Ok(None),
            Err(err) => Err(err.into()),
        }
    }

    fn connector(&mut self, graph: &PoseGraph, e: EdgeId, af: u32, at: u32) -> Result<Option<Vec<EdgeId>>, BasisError> {
        let key = (af.min(at), af.max(at));
        let (p, q) = key;
        let (a, b) = (Self::end_in(graph, e, p), Self::end_in(graph, e, q));
        let legs: Vec<(u32, VertexId, VertexId)>;
        let mut connectors = Vec::new();
        if let Some(&prev) = self.latest.get(&key) {
            legs = vec![(p, Self::end_in(graph, prev, p), a), (q, b, Self::end_in(graph, prev, q))];
            connectors.push(prev);
        } else if let Some(hops) = self.route(p, q) {
            self.link(p, q, e);
            let mut l = Vec::with_capacity(hops.len() + 1);
            let (mut g, mut at_v) = (p, a);
            for (h, c) in hops {
                l.push((g, at_v, Self::end_in(graph, c, g)));
                connectors.push(c);
                at_v = Self::end_in(graph, c, h);
                g = h;
            }
            l.push((q, at_v, b));
            legs = l;
        } else {
            self.link(p, q, e);
            self.latest.insert(key, e);
            return Ok(None);
        }
        self.latest.insert(key, e);
        let paths: Vec<Vec<EdgeId>> = if legs.len() == 2 {
            let (l0, l1) = (legs[0], legs[1]);
            let (p0, p1) = rayon::join(|| agent_path(graph, l0.0, l0.1, l0.2), || agent_path(graph, l1.0, l1.1, l1.2));
            vec![p0?, p1?]
        } else {
            legs.par_iter().map(|&(g, x, y)| agent_path(graph, g, x, y)).collect::<Result<_, _>>()?
        };
        let mut edges: Vec<EdgeId> = paths.into_iter().flatten().collect();
        edges.extend(connectors);
        Ok(Some(edges))
    }
}

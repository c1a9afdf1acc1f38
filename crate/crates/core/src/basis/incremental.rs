use super::{BasisError, Cycle, CycleBasis};
use crate::graph::{EdgeId, EdgeKind, GraphError, PoseGraph};

/// Extends `basis` after `new_edge` was inserted into `graph`.
///
/// If the edge closes a loop, the cycle formed by the edge and the shortest
/// path between its endpoints (not using the edge) is appended and `true` is
/// returned. A loop closure between disconnected vertices is an error.
pub fn icb_update(basis: &mut CycleBasis, graph: &PoseGraph, new_edge: EdgeId) -> Result<bool, BasisError> {
    if new_edge.0 >= graph.edge_count() {
        return Err(GraphError::UnknownEdge(new_edge).into());
    }
    let edge = graph.edge(new_edge);
    let path = match graph.shortest_path(edge.to, edge.from, Some(new_edge)) {
        Ok(p) => Some(p),
        Err(GraphError::Disconnected(..)) => None,
        Err(e) => return Err(e.into()),
    };
    let nu = graph.cycle_rank();
    let expected = nu - usize::from(path.is_some());
    if basis.len() != expected || basis.rank() != basis.len() {
        return Err(BasisError::Stale { expected, cycles: basis.len(), rank: basis.rank() });
    }
    let Some(path) = path else {
        if edge.kind == EdgeKind::LoopClosure {
            return Err(BasisError::DisconnectedLoop { edge: new_edge, from: edge.from, to: edge.to });
        }
        return Ok(false);
    };
    let mut edges = path.edge_ids();
    edges.push(new_edge);
    basis.push(Cycle::from_edges(graph, &edges)?)?;
    Ok(true)
}

/// Incremental basis of `graph` obtained by inserting its edges in id order.
pub fn icb_replay(graph: &PoseGraph) -> Result<CycleBasis, BasisError> {
    let mut partial = PoseGraph::new();
    for v in graph.vertices() {
        partial.push_vertex(v.agent, v.external, v.initial);
    }
    let mut basis = CycleBasis::new();
    for e in graph.edges() {
        let id = partial.add_edge(e.clone())?;
        icb_update(&mut basis, &partial, id)?;
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{density, mcb};
    use crate::graph::tests::{graph_from_pairs, unit_edge};
    use crate::graph::{Edge, VertexId};
    use crate::lie::{Information, Pose};
    use proptest::prelude::*;

    #[test]
    fn odometry_leaves_basis_unchanged() {
        let mut g = graph_from_pairs(3, &[(0, 1)]);
        let mut b = CycleBasis::new();
        let e = g.add_edge(unit_edge(&g, 1, 2)).unwrap();
        assert!(!icb_update(&mut b, &g, e).unwrap());
        assert!(b.is_empty());
    }

    #[test]
    fn chain_closure_gives_weight_four() {
        let mut g = graph_from_pairs(4, &[(0, 1), (1, 2), (2, 3)]);
        let mut b = CycleBasis::new();
        let e = g.add_edge(unit_edge(&g, 0, 3)).unwrap();
        assert!(icb_update(&mut b, &g, e).unwrap());
        assert_eq!(b.cycles()[0].weight(), 4);
        assert_eq!(b.cycles()[0].to_line(), "+0 +1 +2 -3");
    }

    #[test]
    fn parallel_edge_gives_two_cycle() {
        let mut g = graph_from_pairs(2, &[(0, 1)]);
        let mut b = CycleBasis::new();
        let e = g.add_edge(unit_edge(&g, 1, 0)).unwrap();
        icb_update(&mut b, &g, e).unwrap();
        assert_eq!(b.cycles()[0].to_line(), "+0 +1");
    }

    #[test]
    fn stale_basis_is_reported() {
        let mut g = graph_from_pairs(3, &[(0, 1), (1, 2), (2, 0)]);
        let e = g.add_edge(unit_edge(&g, 0, 2)).unwrap();
        let mut b = CycleBasis::new();
        assert!(matches!(icb_update(&mut b, &g, e), Err(BasisError::Stale { expected: 1, cycles: 0, rank: 0 })));
        assert!(icb_update(&mut b, &g, EdgeId(99)).is_err());
    }

    #[test]
    fn disconnected_loop_closure_is_an_error() {
        let mut g = graph_from_pairs(4, &[(0, 1), (2, 3)]);
        let e = g.add_edge(unit_edge(&g, 0, 3)).unwrap();
        assert!(matches!(icb_update(&mut CycleBasis::new(), &g, e), Err(BasisError::DisconnectedLoop { .. })));
        // The same bridge between two agents is accepted.
        let mut g = PoseGraph::new();
        g.add_vertex(0);
        g.add_vertex(1);
        let inter = Edge::new(
            VertexId(0),
            VertexId(1),
            Pose::se2(1.0, 0.0, 0.0),
            Information::identity(3),
            EdgeKind::InterAgent,
        );
        let e = g.add_edge(inter).unwrap();
        assert!(!icb_update(&mut CycleBasis::new(), &g, e).unwrap());
    }

    fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..15).prop_flat_map(|n| {
            let pair = (0..n, 0..n).prop_filter("no self-loops", |(a, b)| a != b);
            (Just(n), prop::collection::vec(pair, 0..20)).prop_map(|(n, extra)| {
                let mut pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
                pairs.extend(extra);
                (n, pairs)
            })
        })
    }

    proptest! {
        #[test]
        fn replay_keeps_full_rank_and_dominates_mcb((n, pairs) in connected_graph()) {
            let g = graph_from_pairs(n, &pairs);
            let icb = icb_replay(&g).unwrap();
            prop_assert!(icb.verify(&g).is_ok());
            let m = mcb(&g);
            prop_assert!(density(&icb, &g).unwrap() >= density(&m, &g).unwrap());
        }
    }
}

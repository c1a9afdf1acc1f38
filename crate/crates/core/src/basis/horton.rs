use rayon::prelude::*;

use super::{BitRow, Cycle, CycleBasis, Eliminator};
use crate::graph::{EdgeId, PoseGraph, VertexId};

const NONE: u32 = u32::MAX;
const FIELD: u64 = (1 << 24) - 1;

/// Breadth-first tree rooted at one vertex.
struct Tree {
    parent: Vec<u32>,
    /// Child of the root whose subtree contains the vertex.
    branch: Vec<u32>,
    dist: Vec<u32>,
}

fn bfs(graph: &PoseGraph, root: usize) -> Tree {
    let n = graph.vertex_count();
    let mut t = Tree { parent: vec![NONE; n], branch: vec![NONE; n], dist: vec![NONE; n] };
    let mut queue = std::collections::VecDeque::new();
    t.dist[root] = 0;
    t.branch[root] = root as u32;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &e in graph.incident(VertexId(u)) {
            let w = graph.edge(e).other(VertexId(u)).0;
            if t.dist[w] == NONE {
                t.dist[w] = t.dist[u] + 1;
                t.parent[w] = e.0 as u32;
                t.branch[w] = if u == root { w as u32 } else { t.branch[u] };
                queue.push_back(w);
            }
        }
    }
    t
}

/// Packs (weight, root, edge) so that sorting orders by weight first.
fn pack(weight: usize, root: usize, edge: usize) -> u64 {
    (weight as u64) << 48 | (root as u64) << 24 | edge as u64
}

fn unpack(c: u64) -> (usize, usize, usize) {
    ((c >> 48) as usize, (c >> 24 & FIELD) as usize, (c & FIELD) as usize)
}

/// Horton candidates of one root: every non-tree edge whose two tree paths
/// meet only at the root.
fn candidates(graph: &PoseGraph, root: usize, tree: &Tree) -> Vec<u64> {
    let mut out = Vec::new();
    for (i, e) in graph.edges().iter().enumerate() {
        let (x, y) = (e.from.0, e.to.0);
        if tree.dist[x] == NONE || tree.parent[x] == i as u32 || tree.parent[y] == i as u32 {
            continue;
        }
        if x != root && y != root && tree.branch[x] == tree.branch[y] {
            continue;
        }
        let w = tree.dist[x] + tree.dist[y] + 1;
        out.push(pack(w as usize, root, i));
    }
    out
}

fn walk_up(graph: &PoseGraph, parents: &[u32], mut v: usize, out: &mut Vec<u32>) {
    while parents[v] != NONE {
        let e = parents[v];
        out.push(e);
        v = graph.edge(EdgeId(e as usize)).other(VertexId(v)).0;
    }
}

/// Minimum cycle basis by Horton's construction with hop-count weights.
///
/// Candidate cycles `SP(v,x) + (x,y) + SP(y,v)` from every root `v` are
/// ordered by (weight, largest edge id, sorted edge list) and kept greedily
/// while independent over GF(2).
pub fn mcb(graph: &PoseGraph) -> CycleBasis {
    let nu = graph.cycle_rank();
    let mut basis = CycleBasis::new();
    if nu == 0 {
        return basis;
    }
    let n = graph.vertex_count();
    assert!(n as u64 <= FIELD && graph.edge_count() as u64 <= FIELD, "graph too large for packed candidates");

    let per_root: Vec<(Vec<u32>, Vec<u64>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let t = bfs(graph, r);
            let c = candidates(graph, r, &t);
            (t.parent, c)
        })
        .collect();
    let mut all: Vec<u64> = Vec::with_capacity(per_root.iter().map(|p| p.1.len()).sum());
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(n);
    for (p, c) in per_root {
        parents.push(p);
        all.extend(c);
    }
    all.par_sort_unstable();

    let mut start = 0;
    while start < all.len() && basis.len() < nu {
        let weight = unpack(all[start]).0;
        let end = start + all[start..].partition_point(|&c| unpack(c).0 == weight);
        let mut class: Vec<Vec<u32>> = all[start..end]
            .par_iter()
            .map(|&c| {
                let (_, root, edge) = unpack(c);
                let e = graph.edge(EdgeId(edge));
                let mut ids = vec![edge as u32];
                walk_up(graph, &parents[root], e.from.0, &mut ids);
                walk_up(graph, &parents[root], e.to.0, &mut ids);
                ids.sort_unstable();
                ids
            })
            .collect();
        class.par_sort_unstable_by(|a, b| a.last().cmp(&b.last()).then_with(|| a.cmp(b)));
        class.dedup();
        // Rows dependent on the basis as it stands remain dependent later.
        let survivors: Vec<(Vec<u32>, BitRow)> = class
            .into_par_iter()
            .filter_map(|ids| {
                let row = BitRow::from_indices(ids.iter().map(|&i| i as usize));
                (!basis.spans(&row)).then_some((ids, row))
            })
            .collect();
        for (ids, row) in survivors {
            if basis.len() == nu {
                break;
            }
            if basis.spans(&row) {
                continue;
            }
            let edges: Vec<EdgeId> = ids.iter().map(|&i| EdgeId(i as usize)).collect();
            let cycle = Cycle::from_edges(graph, &edges).expect("Horton candidates are simple cycles");
            basis.push(cycle).expect("independence checked");
        }
        start = end;
    }
    debug_assert_eq!(basis.len(), nu);
    basis
}

/// All simple cycles of a small graph as sorted edge lists.
fn simple_cycles(g: &PoseGraph) -> Vec<Vec<usize>> {
    let m = g.edge_count();
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << m) {
        let ids: Vec<EdgeId> = (0..m).filter(|i| mask >> i & 1 == 1).map(EdgeId).collect();
        if Cycle::from_edges(g, &ids).is_ok() {
            let mut deg = std::collections::HashMap::new();
            for e in &ids {
                *deg.entry(g.edge(*e).from).or_insert(0) += 1;
                *deg.entry(g.edge(*e).to).or_insert(0) += 1;
            }
            // Simple: every touched vertex has degree exactly two.
            if deg.values().all(|&d| d == 2) {
                out.push(ids.iter().map(|e| e.0).collect());
            }
        }
    }
    out
}

/// Weight of a minimum cycle basis found by enumerating every edge subset
/// and keeping the shortest independent simple cycles. Exponential in the
/// edge count, so only graphs with at most 24 edges are accepted.
pub fn brute_force_mcb_weight(g: &PoseGraph) -> Option<usize> {
    if g.edge_count() > 24 {
        return None;
    }
    let mut cycles = simple_cycles(g);
    cycles.sort_by_key(Vec::len);
    let mut e = Eliminator::new();
    let mut total = 0;
    for c in cycles {
        let len = c.len();
        if e.insert(BitRow::from_indices(c)) {
            total += len;
        }
    }
    Some(total)
}

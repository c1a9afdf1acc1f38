//! Cycle bases of pose graphs: exact minimum (Horton), incremental, and
//! multi-agent constructions, plus GF(2) independence checks.

mod gf2;
mod horton;
mod incremental;
mod multi;

pub use gf2::{BitRow, Eliminator};
pub use horton::{brute_force_mcb_weight, mcb};
pub use incremental::{icb_replay, icb_update};
pub use multi::{ma_icb, TeamBasis};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::graph::{Direction, EdgeId, GraphError, PoseGraph, VertexId};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("edge {0} listed twice in a cycle")]
    RepeatedEdge(EdgeId),
    #[error("vertex {0} has odd degree in the cycle")]
    OddDegree(VertexId),
    #[error("edges do not form a single closed walk")]
    NotClosed,
    #[error("empty cycle")]
    Empty,
    #[error("cycle is dependent on the basis")]
    Dependent,
    #[error("basis has {cycles} cycles of GF(2) rank {rank}, expected {expected}")]
    Stale { expected: usize, cycles: usize, rank: usize },
    #[error("loop closure {edge} joins vertices {from} and {to} that are otherwise disconnected")]
    DisconnectedLoop { edge: EdgeId, from: VertexId, to: VertexId },
    #[error("empty graph has no density")]
    EmptyGraph,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Closed, oriented edge sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cycle {
    steps: Vec<(EdgeId, Direction)>,
}

impl Cycle {
    /// Orders an edge set into a closed walk.
    ///
    /// The walk starts at the smallest vertex and leaves along its smallest
    /// incident cycle edge; at every later vertex the smallest unused cycle
    /// edge is taken. Fails unless every vertex has even degree and the
    /// edges form one connected closed walk.
    pub fn from_edges(graph: &PoseGraph, edges: &[EdgeId]) -> Result<Cycle, BasisError> {
        if edges.is_empty() {
            return Err(BasisError::Empty);
        }
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(BasisError::RepeatedEdge(w[0]));
            }
        }
        let mut incident: HashMap<VertexId, Vec<EdgeId>> = HashMap::new();
        for &e in &sorted {
            if e.0 >= graph.edge_count() {
                return Err(GraphError::UnknownEdge(e).into());
            }
            let edge = graph.edge(e);
            incident.entry(edge.from).or_default().push(e);
            incident.entry(edge.to).or_default().push(e);
        }
        if let Some((&v, _)) = incident.iter().filter(|(_, es)| es.len() % 2 == 1).min_by_key(|(v, _)| **v) {
            return Err(BasisError::OddDegree(v));
        }
        let start = *incident.keys().min().expect("nonempty");
        let mut used = vec![false; sorted.len()];
        let index = |e: EdgeId| sorted.binary_search(&e).expect("edge in cycle");
        let mut steps = Vec::with_capacity(sorted.len());
        let mut at = start;
        loop {
            let next = incident[&at].iter().copied().find(|&e| !used[index(e)]);
            let Some(e) = next else { break };
            used[index(e)] = true;
            let edge = graph.edge(e);
            let dir = if edge.from == at { Direction::Forward } else { Direction::Backward };
            steps.push((e, dir));
            at = edge.other(at);
        }
        if at != start || steps.len() != sorted.len() {
            return Err(BasisError::NotClosed);
        }
        Ok(Cycle { steps })
    }

    /// Wraps an already oriented step list after checking closure.
    pub fn from_steps(graph: &PoseGraph, steps: Vec<(EdgeId, Direction)>) -> Result<Cycle, BasisError> {
        let c = Cycle { steps };
        c.validate(graph)?;
        Ok(c)
    }

    pub fn steps(&self) -> &[(EdgeId, Direction)] {
        &self.steps
    }

    /// Number of edges.
    pub fn weight(&self) -> usize {
        self.steps.len()
    }

    /// Edge ids in ascending order.
    pub fn edge_ids(&self) -> Vec<EdgeId> {
        let mut ids: Vec<EdgeId> = self.steps.iter().map(|s| s.0).collect();
        ids.sort_unstable();
        ids
    }

    pub fn to_row(&self) -> BitRow {
        BitRow::from_indices(self.steps.iter().map(|s| s.0 .0))
    }

    /// Checks distinct edges, chained orientation, and closure.
    pub fn validate(&self, graph: &PoseGraph) -> Result<(), BasisError> {
        let Some(&(first, dir)) = self.steps.first() else { return Err(BasisError::Empty) };
        let mut seen = std::collections::HashSet::new();
        for &(e, _) in &self.steps {
            if e.0 >= graph.edge_count() {
                return Err(GraphError::UnknownEdge(e).into());
            }
            if !seen.insert(e) {
                return Err(BasisError::RepeatedEdge(e));
            }
        }
        let start = graph.edge(first).oriented(dir).0;
        let mut at = start;
        for &(e, d) in &self.steps {
            let (a, b) = graph.edge(e).oriented(d);
            if a != at {
                return Err(BasisError::NotClosed);
            }
            at = b;
        }
        if at != start {
            return Err(BasisError::NotClosed);
        }
        Ok(())
    }

    /// Signed edge indices, e.g. `+12 -7 +3`.
    pub fn to_line(&self) -> String {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|(e, d)| format!("{}{}", if *d == Direction::Forward { '+' } else { '-' }, e.0))
            .collect();
        parts.join(" ")
    }

    /// Parses [`Cycle::to_line`] output without graph validation.
    pub fn parse_line(line: &str) -> Result<Cycle, String> {
        let mut steps = Vec::new();
        for tok in line.split_whitespace() {
            let (dir, digits) = if let Some(r) = tok.strip_prefix('+') {
                (Direction::Forward, r)
            } else if let Some(r) = tok.strip_prefix('-').or_else(|| tok.strip_prefix('\u{2212}')) {
                (Direction::Backward, r)
            } else {
                return Err(format!("missing sign in `{tok}`"));
            };
            let id = digits.parse::<usize>().map_err(|e| format!("bad edge id `{tok}`: {e}"))?;
            steps.push((EdgeId(id), dir));
        }
        if steps.is_empty() {
            return Err("empty cycle".into());
        }
        Ok(Cycle { steps })
    }
}

/// Cycles plus the row-echelon form of their edge incidence over GF(2).
#[derive(Debug, Clone, Default)]
pub struct CycleBasis {
    cycles: Vec<Cycle>,
    elim: Eliminator,
}

impl CycleBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `cycle` if it is independent of the current cycles.
    pub fn push(&mut self, cycle: Cycle) -> Result<(), BasisError> {
        if !self.elim.insert(cycle.to_row()) {
            return Err(BasisError::Dependent);
        }
        self.cycles.push(cycle);
        Ok(())
    }

    /// Builds a basis without rejecting dependent cycles, so that
    /// `rank() < len()` exposes them.
    pub fn from_cycles_unchecked(cycles: Vec<Cycle>) -> Self {
        let mut elim = Eliminator::new();
        for c in &cycles {
            elim.insert(c.to_row());
        }
        Self { cycles, elim }
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// GF(2) rank of the cycle-edge incidence matrix.
    pub fn rank(&self) -> usize {
        self.elim.rank()
    }

    pub fn is_independent(&self, cycle: &Cycle) -> bool {
        self.elim.is_independent(&cycle.to_row())
    }

    /// True if `row` (an edge set) lies in the span of the basis.
    pub fn spans(&self, row: &BitRow) -> bool {
        !self.elim.is_independent(row)
    }

    pub fn total_weight(&self) -> usize {
        self.cycles.iter().map(Cycle::weight).sum()
    }

    /// Checks every cycle, independence, and size against the cycle rank.
    pub fn verify(&self, graph: &PoseGraph) -> Result<(), BasisError> {
        for c in &self.cycles {
            c.validate(graph)?;
        }
        let nu = graph.cycle_rank();
        if self.rank() != self.len() || self.len() != nu {
            return Err(BasisError::Stale { expected: nu, cycles: self.len(), rank: self.rank() });
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for c in &self.cycles {
            writeln!(w, "{}", c.to_line())?;
        }
        Ok(())
    }

    /// Reads one cycle per line; blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(r: R) -> Result<CycleBasis, BasisError> {
        let mut cycles = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            cycles.push(Cycle::parse_line(body).map_err(|msg| BasisError::Parse { line: i + 1, msg })?);
        }
        Ok(CycleBasis::from_cycles_unchecked(cycles))
    }
}

/// GF(2) rank of the basis, recomputed from its cycles.
pub fn gf2_rank(basis: &CycleBasis) -> usize {
    gf2::rank_of(basis.cycles.iter().map(Cycle::to_row))
}

pub fn is_independent(basis: &CycleBasis, cycle: &Cycle) -> bool {
    basis.is_independent(cycle)
}

/// Total cycle length divided by the number of graph edges.
pub fn density(basis: &CycleBasis, graph: &PoseGraph) -> Result<f64, BasisError> {
    if graph.edge_count() == 0 {
        return Err(BasisError::EmptyGraph);
    }
    Ok(basis.total_weight() as f64 / graph.edge_count() as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::tests::graph_from_pairs;

    pub const K4: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

    pub fn cycle(g: &PoseGraph, ids: &[usize]) -> Cycle {
        Cycle::from_edges(g, &ids.iter().map(|&i| EdgeId(i)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn canonical_orientation() {
        // Square 0-1-2-3 entered with the edges shuffled.
        let g = graph_from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let c = cycle(&g, &[2, 3, 0, 1]);
        assert_eq!(c.to_line(), "+0 +1 +2 +3");
        // Start vertex 1 is the smallest; its smallest edge is traversed backward.
        let g = graph_from_pairs(4, &[(2, 1), (2, 3), (3, 1)]);
        assert_eq!(cycle(&g, &[1, 0, 2]).to_line(), "-0 +1 +2");
        c.validate(&g).unwrap_err();
    }

    #[test]
    fn parallel_edges_make_a_two_cycle() {
        let g = graph_from_pairs(2, &[(0, 1), (0, 1)]);
        assert_eq!(cycle(&g, &[1, 0]).to_line(), "+0 -1");
    }

    #[test]
    fn rejects_non_cycles() {
        let g = graph_from_pairs(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]);
        assert!(matches!(Cycle::from_edges(&g, &[EdgeId(0), EdgeId(3)]), Err(BasisError::OddDegree(_))));
        assert!(matches!(Cycle::from_edges(&g, &[EdgeId(0), EdgeId(0)]), Err(BasisError::RepeatedEdge(_))));
        assert!(matches!(Cycle::from_edges(&g, &[]), Err(BasisError::Empty)));
        // Two disjoint triangles have even degrees but are not one walk.
        let g = graph_from_pairs(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        let all: Vec<_> = (0..6).map(EdgeId).collect();
        assert!(matches!(Cycle::from_edges(&g, &all), Err(BasisError::NotClosed)));
    }

    #[test]
    fn text_round_trip() {
        let g = graph_from_pairs(4, &K4);
        let mut b = CycleBasis::new();
        for ids in [[0, 1, 3], [0, 2, 4], [1, 2, 5]] {
            b.push(cycle(&g, &ids)).unwrap();
        }
        let mut buf = Vec::new();
        b.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "+0 +3 -1\n+0 +4 -2\n+1 +5 -2\n");
        let back = CycleBasis::read_text(format!("# comment\n{text}\n").as_bytes()).unwrap();
        assert_eq!(back.cycles(), b.cycles());
        back.verify(&g).unwrap();
        assert_eq!(Cycle::parse_line("+12 \u{2212}7 +3").unwrap().to_line(), "+12 -7 +3");
        assert!(Cycle::parse_line("12").is_err());
        assert!(matches!(CycleBasis::read_text("+0 x\n".as_bytes()), Err(BasisError::Parse { line: 1, .. })));
    }

    #[test]
    fn rank_and_independence() {
        let g = graph_from_pairs(4, &K4);
        assert_eq!(gf2_rank(&CycleBasis::new()), 0);
        let tri = cycle(&g, &[0, 1, 3]);
        let dup = CycleBasis::from_cycles_unchecked(vec![tri.clone(), tri.clone()]);
        assert_eq!((gf2_rank(&dup), dup.len()), (1, 2));
        assert!(dup.verify(&g).is_err());
        let mut b = CycleBasis::new();
        for ids in [[0, 1, 3], [0, 2, 4], [1, 2, 5]] {
            b.push(cycle(&g, &ids)).unwrap();
        }
        // The fourth face of K4 is the XOR of the other three.
        let face = cycle(&g, &[3, 4, 5]);
        assert!(!is_independent(&b, &face));
        assert!(matches!(b.push(face), Err(BasisError::Dependent)));
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn density_values() {
        let tree = graph_from_pairs(3, &[(0, 1), (1, 2)]);
        assert_eq!(density(&CycleBasis::new(), &tree).unwrap(), 0.0);
        let sq = graph_from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let mut b = CycleBasis::new();
        b.push(cycle(&sq, &[0, 1, 2, 3])).unwrap();
        assert_eq!(density(&b, &sq).unwrap(), 1.0);
        assert!(matches!(density(&b, &PoseGraph::new()), Err(BasisError::EmptyGraph)));
    }
}

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ate, rmse, GroundTruth, SimError};
use crate::basis::{density, mcb, CycleBasis, TeamBasis};
use crate::graph::{merge_agents, Edge, EdgeKind, InterEdge, MergedGraph, PoseGraph, VertexId};
use crate::lie::{sample_noise_with, Information, Pose, Se2};
use crate::solver::{chain_poses, solve_cycle_pgo, SolverOptions};

/// Diagonal information carried by most M3500 edges (σ ≈ 0.15 m, 0.15 rad).
pub const M3500_INFORMATION: f64 = 44.721360;

#[derive(Debug, Clone, PartialEq)]
pub struct ManhattanConfig {
    pub n_agents: usize,
    pub odom_edges_per_agent: usize,
    pub intra_loop_closures: usize,
    pub inter_loop_closures_per_pair: usize,
    pub odom_info: Information,
    pub loop_info: Information,
    pub seed: u64,
    pub turn_prob: f64,
    /// Side of the square cell box each agent wanders in.
    pub box_size: i32,
}

impl Default for ManhattanConfig {
    fn default() -> Self {
        let info = Information::from_diagonal(&[M3500_INFORMATION; 3]).expect("positive diagonal");
        Self {
            n_agents: 10,
            odom_edges_per_agent: 500,
            intra_loop_closures: 100,
            inter_loop_closures_per_pair: 50,
            odom_info: info.clone(),
            loop_info: info,
            seed: 0,
            turn_prob: 0.25,
            box_size: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManhattanSim {
    pub graphs: Vec<PoseGraph>,
    /// Inter-agent loop closures in arrival order.
    pub inter: Vec<InterEdge>,
    pub truth: GroundTruth,
}

const HEADINGS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Unit-step grid walk with 90° turns, kept inside `[0, size)²`.
fn walk(rng: &mut ChaCha8Rng, steps: usize, size: i32, turn_prob: f64) -> Vec<(i32, i32, usize)> {
    let mut cell = (rng.gen_range(0..size), rng.gen_range(0..size));
    let mut h = rng.gen_range(0..4usize);
    let mut out = vec![(cell.0, cell.1, h)];
    let inside = |c: (i32, i32)| (0..size).contains(&c.0) && (0..size).contains(&c.1);
    for _ in 0..steps {
        if rng.gen_bool(turn_prob) {
            h = if rng.gen_bool(0.5) { (h + 1) % 4 } else { (h + 3) % 4 };
        }
        let ahead = |h: usize| (cell.0 + HEADINGS[h].0, cell.1 + HEADINGS[h].1);
        if !inside(ahead(h)) {
            let turns = if rng.gen_bool(0.5) { [1, 3] } else { [3, 1] };
            h = turns.iter().map(|t| (h + t) % 4).find(|&k| inside(ahead(k))).unwrap_or((h + 2) % 4);
        }
        cell = ahead(h);
        out.push((cell.0, cell.1, h));
    }
    out
}

fn noisy(rng: &mut ChaCha8Rng, truth: &Pose, info: &Information) -> Pose {
    truth.retract(sample_noise_with(info, rng).as_slice()).expect("planar noise")
}

/// Multi-agent grid-world simulation, deterministic per seed.
///
/// Intra-agent loop closures are drawn uniformly among pose pairs at least
/// three steps apart whose cells are equal or adjacent. Inter-agent closures
/// join uniformly drawn poses of each agent pair and arrive ordered by the
/// later of their two pose indices.
pub fn gen_manhattan(cfg: &ManhattanConfig) -> ManhattanSim {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut graphs = Vec::with_capacity(cfg.n_agents);
    let mut poses = Vec::with_capacity(cfg.n_agents);
    for _ in 0..cfg.n_agents {
        let cells = walk(&mut rng, cfg.odom_edges_per_agent, cfg.box_size.max(2), cfg.turn_prob);
        let truth: Vec<Pose> = cells
            .iter()
            .map(|&(x, y, h)| Pose::Se2(Se2::new(x as f64, y as f64, h as f64 * std::f64::consts::FRAC_PI_2)))
            .collect();
        let mut g = PoseGraph::new();
        for _ in &truth {
            g.add_vertex(0);
        }
        for i in 1..truth.len() {
            let m = noisy(&mut rng, &truth[i - 1].between(&truth[i]).expect("planar"), &cfg.odom_info);
            g.add_edge(Edge::new(VertexId(i - 1), VertexId(i), m, cfg.odom_info.clone(), EdgeKind::Odometry))
                .expect("chain edge");
        }
        let mut candidates = Vec::new();
        for j in 0..cells.len() {
            for i in 0..j.saturating_sub(2) {
                if (cells[i].0 - cells[j].0).abs() + (cells[i].1 - cells[j].1).abs() <= 1 {
                    candidates.push((j, i));
                }
            }
        }
        let k = cfg.intra_loop_closures.min(candidates.len());
        let mut chosen: Vec<(usize, usize)> =
            sample(&mut rng, candidates.len(), k).into_iter().map(|c| candidates[c]).collect();
        chosen.sort_unstable();
        for (j, i) in chosen {
            let m = noisy(&mut rng, &truth[i].between(&truth[j]).expect("planar"), &cfg.loop_info);
            g.add_edge(Edge::new(VertexId(i), VertexId(j), m, cfg.loop_info.clone(), EdgeKind::LoopClosure))
                .expect("loop edge");
        }
        graphs.push(g);
        poses.push(truth);
    }
    let mut inter = Vec::new();
    for p in 0..cfg.n_agents {
        for q in p + 1..cfg.n_agents {
            for _ in 0..cfg.inter_loop_closures_per_pair {
                let a = rng.gen_range(0..poses[p].len());
                let b = rng.gen_range(0..poses[q].len());
                let m = noisy(&mut rng, &poses[p][a].between(&poses[q][b]).expect("planar"), &cfg.loop_info);
                inter.push(InterEdge {
                    from_graph: p,
                    from: VertexId(a),
                    to_graph: q,
                    to: VertexId(b),
                    measurement: m,
                    info: cfg.loop_info.clone(),
                });
            }
        }
    }
    // Stable sort keeps the generation order among equal arrival times.
    inter.sort_by_key(|c| c.from.0.max(c.to.0));
    ManhattanSim { graphs, inter, truth: GroundTruth { poses } }
}

/// Accuracy and cost of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub density: f64,
    pub update_ms: f64,
    pub optimize_ms: f64,
    pub rot_rmse_deg: f64,
    pub trans_rmse_m: f64,
    pub ate_m: f64,
    pub converged: bool,
}

/// Solves with `basis` and scores edges and vertex poses against the truth.
pub fn evaluate(
    graph: &PoseGraph,
    truth: &GroundTruth,
    basis: &CycleBasis,
    update_ms: f64,
    opts: &SolverOptions,
) -> Result<TrialMetrics, SimError> {
    let sol = solve_cycle_pgo(graph, basis, opts)?;
    let true_edges = truth.edge_transforms(graph)?;
    let (rot, trans) = rmse(&sol.estimates, &true_edges)?;
    let root = VertexId(0);
    let chained = chain_poses(graph, &sol.estimates, root)?;
    let true_rel = truth.relative_vertex_poses(graph, root)?;
    let (est, tru): (Vec<Pose>, Vec<Pose>) =
        chained.iter().zip(&true_rel).filter_map(|(e, t)| e.map(|e| (e, *t))).unzip();
    Ok(TrialMetrics {
        density: density(basis, graph)?,
        update_ms,
        optimize_ms: sol.report.time_ms,
        rot_rmse_deg: rot,
        trans_rmse_m: trans,
        ate_m: ate(&est, &tru)?,
        converged: sol.report.converged,
    })
}

/// One Manhattan trial solved with the exact minimum basis and with the
/// multi-agent incremental basis of the same merged graph.
pub fn manhattan_trial(
    cfg: &ManhattanConfig,
    opts: &SolverOptions,
) -> Result<(MergedGraph, TrialMetrics, TrialMetrics), SimError> {
    let sim = gen_manhattan(cfg);
    let refs: Vec<&PoseGraph> = sim.graphs.iter().collect();
    let merged = merge_agents(&refs, &sim.inter)?;
    let t = Instant::now();
    let exact = mcb(&merged.graph);
    let mcb_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let team = TeamBasis::build(&merged.graph)?;
    let team_ms = t.elapsed().as_secs_f64() * 1e3;
    let m = evaluate(&merged.graph, &sim.truth, &exact, mcb_ms, opts)?;
    let a = evaluate(&merged.graph, &sim.truth, &team, team_ms, opts)?;
    Ok((merged, m, a))
}

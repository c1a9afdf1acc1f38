//! Relative pose graph optimization over edge transforms with one
//! identity constraint per basis cycle.

mod range_bearing;

pub use range_bearing::{estimate_relative_pose, RangeBearing, RangeBearingOptions};

use std::collections::VecDeque;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{Cycle, CycleBasis};
use crate::graph::{Direction, EdgeId, PoseGraph, VertexId};
use crate::lie::{right_jacobian_inv, wrap_angle, LieError, Pose, Tangent};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cycle basis has rank {rank} but {len} cycles")]
    RankDeficient { rank: usize, len: usize },
    #[error("constraint system is singular")]
    Singular,
    #[error("{0} estimates for {1} edges")]
    SizeMismatch(usize, usize),
    #[error("vertex {0} is not reachable from the root")]
    Disconnected(VertexId),
    #[error("at least two measurements are required, got {0}")]
    TooFewMeasurements(usize),
    #[error("measurement geometry is degenerate")]
    Degenerate,
    #[error("range-bearing estimation supports planar poses only")]
    NotPlanar,
    #[error(transparent)]
    Lie(#[from] LieError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Largest allowed cycle residual, tangent ∞-norm.
    pub constraint_tol: f64,
    pub step_tol: f64,
    /// Relative cost change below which the solve stops.
    pub cost_tol: f64,
    /// First Levenberg damping applied after a rejected step.
    pub damping_init: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 100, constraint_tol: 1e-8, step_tol: 1e-8, cost_tol: 1e-9, damping_init: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// `Σ ‖Log(T̃⁻¹ T)‖²_Ω` at the returned estimates.
    pub cost: f64,
    /// Largest cycle residual, tangent ∞-norm.
    pub violation: f64,
    pub time_ms: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Edge transform estimates indexed by `EdgeId`.
    pub estimates: Vec<Pose>,
    pub report: SolverReport,
}

fn oriented(x: &Pose, dir: Direction) -> Pose {
    match dir {
        Direction::Forward => *x,
        Direction::Backward => x.inverse(),
    }
}

/// Cycle residual with one Jacobian block per edge of the cycle.
pub type Linearized = (Tangent, Vec<(EdgeId, DMatrix<f64>)>);

/// Oriented product of the cycle's edge transforms.
pub fn cycle_product(cycle: &Cycle, estimates: &[Pose]) -> Result<Pose, LieError> {
    let (e0, d0) = cycle.steps()[0];
    let mut p = oriented(&estimates[e0.0], d0);
    for &(e, d) in &cycle.steps()[1..] {
        p = p.compose(&oriented(&estimates[e.0], d))?;
    }
    Ok(p)
}

/// Cycle residual `Log(∏ T^{±1})` and its derivative with respect to a right
/// perturbation of each edge in the cycle.
pub fn residual_and_jacobian(cycle: &Cycle, estimates: &[Pose]) -> Result<Linearized, LieError> {
    let steps = cycle.steps();
    let ys: Vec<Pose> = steps.iter().map(|&(e, d)| oriented(&estimates[e.0], d)).collect();
    // suffix[i] = Y_i ⋯ Y_L; suffix[L] = I.
    let mut suffix = vec![Pose::identity(ys[0].dim()); ys.len() + 1];
    for i in (0..ys.len()).rev() {
        suffix[i] = ys[i].compose(&suffix[i + 1])?;
    }
    let c = suffix[0].log();
    let jinv = right_jacobian_inv(&c);
    let blocks = steps
        .iter()
        .enumerate()
        .map(|(i, &(e, d))| {
            let block = match d {
                Direction::Forward => &jinv * suffix[i + 1].inverse().adjoint(),
                Direction::Backward => -(&jinv * suffix[i].inverse().adjoint()),
            };
            (e, block)
        })
        .collect();
    Ok((c, blocks))
}

/// Per-edge cost terms at `x`: residual, `H = JᵀΩJ`, `g = JᵀΩr`.
struct EdgeTerms {
    cost: f64,
    h: Vec<DMatrix<f64>>,
    g: Vec<DVector<f64>>,
}

fn edge_terms(graph: &PoseGraph, x: &[Pose]) -> Result<EdgeTerms, LieError> {
    let parts: Vec<(f64, DMatrix<f64>, DVector<f64>)> = graph
        .edges()
        .par_iter()
        .zip(x.par_iter())
        .map(|(edge, xk)| {
            let r = edge.measurement.between(xk)?.log();
            let j = right_jacobian_inv(&r);
            let om = edge.info.matrix();
            let jt_om = j.transpose() * om;
            let cost = (r.0.transpose() * om * &r.0)[(0, 0)];
            Ok((cost, &jt_om * &j, jt_om * &r.0))
        })
        .collect::<Result<_, LieError>>()?;
    let mut t = EdgeTerms { cost: 0.0, h: Vec::with_capacity(parts.len()), g: Vec::with_capacity(parts.len()) };
    for (c, h, g) in parts {
        t.cost += c;
        t.h.push(h);
        t.g.push(g);
    }
    Ok(t)
}

fn cost_only(graph: &PoseGraph, x: &[Pose]) -> Result<f64, LieError> {
    graph
        .edges()
        .par_iter()
        .zip(x.par_iter())
        .map(|(edge, xk)| {
            let r = edge.measurement.between(xk)?.log();
            Ok((r.0.transpose() * edge.info.matrix() * &r.0)[(0, 0)])
        })
        .sum()
}

/// Measured planar headings shifted by multiples of 2π to agree with a
/// breadth-first spanning forest of the measurements.
///
/// A cycle constraint taken modulo 2π admits one feasible component per
/// winding number, and which one the solver lands in would depend on how
/// long the basis cycles are. Summing these unwrapped headings instead fixes
/// the winding of every cycle, for any basis.
fn unwrapped_headings(graph: &PoseGraph) -> Option<Vec<f64>> {
    if graph.dof() != Some(3) {
        return None;
    }
    let theta = |e: EdgeId| graph.edge(e).measurement.rotation_angle();
    let mut phi: Vec<Option<f64>> = vec![None; graph.vertex_count()];
    for root in graph.vertex_ids() {
        if phi[root.0].is_some() {
            continue;
        }
        phi[root.0] = Some(0.0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let pu = phi[u.0].expect("queued vertices have headings");
            for &e in graph.incident(u) {
                let w = graph.edge(e).other(u);
                if phi[w.0].is_none() {
                    phi[w.0] = Some(if graph.edge(e).from == u { pu + theta(e) } else { pu - theta(e) });
                    queue.push_back(w);
                }
            }
        }
    }
    let tau = std::f64::consts::TAU;
    Some(
        graph
            .edges()
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let expected = phi[e.to.0].unwrap() - phi[e.from.0].unwrap();
                let m = theta(EdgeId(k));
                m + tau * ((expected - m) / tau).round()
            })
            .collect(),
    )
}

/// Replaces the wrapped heading of a planar cycle residual by the sum of
/// unwrapped edge headings.
fn unwrap_residual(r: &mut Tangent, cycle: &Cycle, graph: &PoseGraph, x: &[Pose], headings: Option<&[f64]>) {
    let Some(u) = headings else { return };
    let sum: f64 = cycle
        .steps()
        .iter()
        .map(|&(e, d)| {
            let drift = wrap_angle(x[e.0].rotation_angle() - graph.edge(e).measurement.rotation_angle());
            f64::from(d.sign()) * (u[e.0] + drift)
        })
        .sum();
    r.0[2] = sum;
}

fn constraint(cycle: &Cycle, graph: &PoseGraph, x: &[Pose], headings: Option<&[f64]>) -> Result<Linearized, LieError> {
    let (mut r, blocks) = residual_and_jacobian(cycle, x)?;
    unwrap_residual(&mut r, cycle, graph, x, headings);
    Ok((r, blocks))
}

/// Cycle residuals at `x` as (L1 sum, ∞-norm max).
fn violation(
    basis: &CycleBasis,
    graph: &PoseGraph,
    x: &[Pose],
    headings: Option<&[f64]>,
) -> Result<(f64, f64), LieError> {
    let rs: Vec<Tangent> = basis
        .cycles()
        .par_iter()
        .map(|c| {
            let mut r = cycle_product(c, x)?.log();
            unwrap_residual(&mut r, c, graph, x, headings);
            Ok(r)
        })
        .collect::<Result<_, LieError>>()?;
    let l1 = rs.iter().map(|r| r.0.iter().map(|v| v.abs()).sum::<f64>()).sum();
    let inf = rs.iter().map(Tangent::inf_norm).fold(0.0, f64::max);
    Ok((l1, inf))
}

/// Equality-constrained Gauss-Newton step via the Schur complement
/// `(A H⁻¹ Aᵀ) λ = c − A H⁻¹ g`, `δ = −H⁻¹ (g + Aᵀ λ)`.
fn sqp_step(
    d: usize,
    hinv: &[DMatrix<f64>],
    g: &[DVector<f64>],
    cons: &[Linearized],
) -> Result<(Vec<DVector<f64>>, f64), SolverError> {
    let m = cons.len() * d;
    let hinv_g: Vec<DVector<f64>> = hinv.iter().zip(g).map(|(h, g)| h * g).collect();
    let mut rhs = vec![0.0; m];
    // Constraint rows touching each edge.
    let mut by_edge: Vec<Vec<(usize, &DMatrix<f64>)>> = vec![Vec::new(); g.len()];
    for (i, (c, blocks)) in cons.iter().enumerate() {
        let mut r = c.0.clone();
        for (e, a) in blocks {
            r -= a * &hinv_g[e.0];
            by_edge[e.0].push((i, a));
        }
        rhs[i * d..(i + 1) * d].copy_from_slice(r.as_slice());
    }
    let mut triplets = Vec::new();
    for (k, rows) in by_edge.iter().enumerate() {
        let ah: Vec<DMatrix<f64>> = rows.iter().map(|(_, a)| *a * &hinv[k]).collect();
        for (p, &(i, _)) in rows.iter().enumerate() {
            for &(j, aj) in rows {
                if j > i {
                    continue;
                }
                let block = &ah[p] * aj.transpose();
                for r in 0..d {
                    for c in 0..d {
                        let (row, col) = (i * d + r, j * d + c);
                        if row >= col {
                            triplets.push(Triplet::new(row, col, block[(r, c)]));
                        }
                    }
                }
            }
        }
    }
    let lambda = if m == 0 {
        Vec::new()
    } else {
        let s =
            SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets).map_err(|_| SolverError::Singular)?;
        let llt = s.sp_cholesky(Side::Lower).map_err(|_| SolverError::Singular)?;
        let sol = llt.solve(Mat::from_fn(m, 1, |i, _| rhs[i]));
        (0..m).map(|i| sol[(i, 0)]).collect::<Vec<f64>>()
    };
    let mut at_lambda: Vec<DVector<f64>> = g.to_vec();
    for (i, (_, blocks)) in cons.iter().enumerate() {
        let l = DVector::from_column_slice(&lambda[i * d..(i + 1) * d]);
        for (e, a) in blocks {
            at_lambda[e.0] += a.transpose() * &l;
        }
    }
    let delta = hinv.iter().zip(&at_lambda).map(|(h, v)| -(h * v)).collect();
    let lmax = lambda.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok((delta, lmax))
}

/// Minimizes `Σ ‖Log(T̃_k⁻¹ T_k)‖²_Ω` over the edge transforms subject to
/// `Log(∏ T^{±1}) = 0` around every cycle of `basis`, starting from the
/// measurements. For planar graphs the heading part of each constraint is
/// the sum of unwrapped edge headings, so the result does not depend on which
/// basis of the cycle space is used.
pub fn solve_cycle_pgo(graph: &PoseGraph, basis: &CycleBasis, opts: &SolverOptions) -> Result<Solution, SolverError> {
    let start = Instant::now();
    if basis.rank() != basis.len() {
        return Err(SolverError::RankDeficient { rank: basis.rank(), len: basis.len() });
    }
    let mut x: Vec<Pose> = graph.edges().iter().map(|e| e.measurement).collect();
    let d = graph.dof().unwrap_or(3);
    let mut terms = edge_terms(graph, &x)?;
    let headings = unwrapped_headings(graph);
    let headings = headings.as_deref();
    let (mut l1, mut viol) = violation(basis, graph, &x, headings)?;
    let mut penalty = 1.0;
    let mut mu = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let cons: Vec<_> =
            basis.cycles().par_iter().map(|c| constraint(c, graph, &x, headings)).collect::<Result<_, _>>()?;
        let merit = 0.5 * terms.cost + penalty * l1;
        let mut accepted = None;
        for _ in 0..12 {
            let hinv: Vec<DMatrix<f64>> = terms
                .h
                .iter()
                .map(|h| {
                    let damped = h + DMatrix::identity(d, d) * mu;
                    damped.try_inverse().ok_or(SolverError::Singular)
                })
                .collect::<Result<_, _>>()?;
            let (delta, lmax) = sqp_step(d, &hinv, &terms.g, &cons)?;
            penalty = penalty.max(1.1 * lmax);
            let trial: Vec<Pose> =
                x.iter().zip(&delta).map(|(p, dk)| p.retract(dk.as_slice())).collect::<Result<_, _>>()?;
            let cost = cost_only(graph, &trial)?;
            let (tl1, tviol) = violation(basis, graph, &trial, headings)?;
            let step = delta.iter().map(|v| v.amax()).fold(0.0, f64::max);
            let trial_merit = 0.5 * cost + penalty * tl1;
            let base = 0.5 * terms.cost + penalty * l1;
            if trial_merit <= base + 1e-12 * base.abs().max(merit.abs()) || step < opts.step_tol {
                accepted = Some((trial, cost, tl1, tviol, step));
                mu *= 0.1;
                if mu < opts.damping_init * 1e-3 {
                    mu = 0.0;
                }
                break;
            }
            mu = if mu == 0.0 { opts.damping_init } else { mu * 10.0 };
        }
        let Some((trial, cost, tl1, tviol, step)) = accepted else { break };
        let rel = (terms.cost - cost).abs() / terms.cost.max(cost).max(f64::MIN_POSITIVE);
        x = trial;
        terms = edge_terms(graph, &x)?;
        (l1, viol) = (tl1, tviol);
        if viol <= opts.constraint_tol && (step < opts.step_tol || rel < opts.cost_tol) {
            converged = true;
            break;
        }
    }
    let report = SolverReport {
        iterations,
        cost: terms.cost,
        violation: viol,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
        converged,
    };
    Ok(Solution { estimates: x, report })
}

/// Vertex poses obtained by composing edge estimates outward from `root`
/// along a breadth-first tree. Unreachable vertices are `None`.
pub fn chain_poses(graph: &PoseGraph, estimates: &[Pose], root: VertexId) -> Result<Vec<Option<Pose>>, SolverError> {
    if estimates.len() != graph.edge_count() {
        return Err(SolverError::SizeMismatch(estimates.len(), graph.edge_count()));
    }
    let dim = graph.dof().map_or(2, |d| if d == 3 { 2 } else { 3 });
    let mut poses: Vec<Option<Pose>> = vec![None; graph.vertex_count()];
    poses[root.0] = Some(Pose::identity(dim));
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let pu = poses[u.0].expect("queued vertices have poses");
        for &e in graph.incident(u) {
            let edge = graph.edge(e);
            let w = edge.other(u);
            if poses[w.0].is_none() {
                let dir = if edge.from == u { Direction::Forward } else { Direction::Backward };
                poses[w.0] = Some(pu.compose(&oriented(&estimates[e.0], dir))?);
                queue.push_back(w);
            }
        }
    }
    Ok(poses)
}

/// Pose of `target` relative to `root`, composed along a single path.
pub fn pose_along(
    graph: &PoseGraph,
    estimates: &[Pose],
    root: VertexId,
    steps: &[(EdgeId, Direction)],
) -> Result<Pose, SolverError> {
    let dim = graph.dof().map_or(2, |d| if d == 3 { 2 } else { 3 });
    let mut p = Pose::identity(dim);
    let mut at = root;
    for &(e, d) in steps {
        let edge = graph.edge(e);
        if edge.oriented(d).0 != at {
            return Err(SolverError::Disconnected(edge.oriented(d).0));
        }
        p = p.compose(&oriented(&estimates[e.0], d))?;
        at = edge.oriented(d).1;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{icb_replay, mcb};
    use crate::graph::tests::graph_from_pairs;
    use crate::graph::{Edge, EdgeKind};
    use crate::lie::Information;
    use proptest::prelude::*;

    fn square(measurements: [Pose; 4]) -> PoseGraph {
        let mut g = PoseGraph::new();
        for _ in 0..4 {
            g.add_vertex(0);
        }
        for (k, m) in measurements.into_iter().enumerate() {
            let kind = if k < 3 { EdgeKind::Odometry } else { EdgeKind::LoopClosure };
            let to = (k + 1) % 4;
            g.add_edge(Edge::new(VertexId(k), VertexId(to), m, Information::identity(3), kind)).unwrap();
        }
        g
    }

    fn unit_square() -> [Pose; 4] {
        let q = std::f64::consts::FRAC_PI_2;
        [Pose::se2(1.0, 0.0, q); 4]
    }

    /// Ring of 24 poses whose heading noise adds up to more than π, with
    /// exact chords (i, i+2). Ring edges come first so the incremental basis
    /// holds the full ring, while the minimum basis uses triangles and the
    /// chord ring.
    fn noisy_ring() -> PoseGraph {
        let n = 24;
        let truth: Vec<Pose> = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Pose::se2(5.0 * a.cos(), 5.0 * a.sin(), a + std::f64::consts::FRAC_PI_2)
            })
            .collect();
        let mut g = PoseGraph::new();
        for _ in 0..n {
            g.add_vertex(0);
        }
        let mut add = |a: usize, b: usize, noise: f64, kind| {
            let t = truth[a].between(&truth[b]).unwrap().retract(&[0.0, 0.0, noise]).unwrap();
            g.add_edge(Edge::new(VertexId(a), VertexId(b), t, Information::identity(3), kind)).unwrap();
        };
        for i in 0..n {
            let kind = if i + 1 < n { EdgeKind::Odometry } else { EdgeKind::LoopClosure };
            add(i, (i + 1) % n, 3.6 / n as f64, kind);
        }
        for i in (0..n).step_by(2) {
            add(i, (i + 2) % n, 0.0, EdgeKind::LoopClosure);
        }
        g
    }

    #[test]
    fn heading_winding_does_not_depend_on_the_basis() {
        let g = noisy_ring();
        let (short, long) = (mcb(&g), icb_replay(&g).unwrap());
        assert!(long.cycles().iter().any(|c| c.weight() == 24));
        assert!(short.cycles().iter().all(|c| c.weight() <= 12));
        let opts = SolverOptions::default();
        let a = solve_cycle_pgo(&g, &short, &opts).unwrap();
        let b = solve_cycle_pgo(&g, &long, &opts).unwrap();
        assert!(a.report.converged && b.report.converged);
        assert!((a.report.cost - b.report.cost).abs() <= 1e-9 * a.report.cost);
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            assert!(x.between(y).unwrap().log().inf_norm() < 1e-6);
        }
    }

    #[test]
    fn triplets_are_summed() {
        let t = [Triplet::new(0usize, 0usize, 1.0), Triplet::new(0, 0, 2.0), Triplet::new(1, 1, 4.0)];
        let s = SparseColMat::<usize, f64>::try_new_from_triplets(2, 2, &t).unwrap();
        assert_eq!(s.to_dense()[(0, 0)], 3.0);
    }

    #[test]
    fn noiseless_square_is_already_optimal() {
        let g = square(unit_square());
        let sol = solve_cycle_pgo(&g, &mcb(&g), &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.iterations <= 2);
        assert!(sol.report.cost <= 1e-12 && sol.report.violation <= 1e-10);
        for (x, e) in sol.estimates.iter().zip(g.edges()) {
            assert!(e.measurement.between(x).unwrap().log().inf_norm() < 1e-12);
        }
    }

    #[test]
    fn noisy_square_becomes_feasible() {
        let mut m = unit_square();
        m[2] = Pose::se2(1.1, -0.05, std::f64::consts::FRAC_PI_2 + 0.08);
        let g = square(m);
        let b = mcb(&g);
        let sol = solve_cycle_pgo(&g, &b, &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert!(sol.report.violation <= 1e-8);
        assert!(sol.report.cost > 0.0);
        // Single cycle with equal weights: the correction spreads over all edges.
        for x in &sol.estimates {
            assert!((x.rotation_angle() - std::f64::consts::FRAC_PI_2).abs() < 0.08);
        }
    }

    #[test]
    fn bridges_keep_their_measurement() {
        let mut g = graph_from_pairs(4, &[(0, 1), (1, 2), (2, 0)]);
        g.add_edge(crate::graph::tests::unit_edge(&g, 2, 3)).unwrap();
        let sol = solve_cycle_pgo(&g, &mcb(&g), &SolverOptions::default()).unwrap();
        assert!(sol.report.converged);
        let bridge = sol.estimates[3];
        assert!(g.edge(EdgeId(3)).measurement.between(&bridge).unwrap().log().inf_norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let g = square(unit_square());
        let c = mcb(&g).cycles()[0].clone();
        let dup = CycleBasis::from_cycles_unchecked(vec![c.clone(), c]);
        assert!(matches!(solve_cycle_pgo(&g, &dup, &SolverOptions::default()), Err(SolverError::RankDeficient { .. })));
    }

    #[test]
    fn chaining_examples() {
        let g = graph_from_pairs(3, &[(0, 1), (1, 2)]);
        let est: Vec<Pose> = g.edges().iter().map(|e| e.measurement).collect();
        let poses = chain_poses(&g, &est, VertexId(0)).unwrap();
        assert_eq!(poses[0], Some(Pose::identity(2)));
        assert!(poses[2].unwrap().between(&Pose::se2(2.0, 0.0, 0.0)).unwrap().log().inf_norm() < 1e-15);
        let g = graph_from_pairs(3, &[(0, 1)]);
        assert!(chain_poses(&g, &est[..1], VertexId(0)).unwrap()[2].is_none());
        assert!(chain_poses(&g, &est, VertexId(0)).is_err());
    }

    #[test]
    fn residual_examples() {
        let g = square(unit_square());
        let b = mcb(&g);
        let c = &b.cycles()[0];
        let est: Vec<Pose> = g.edges().iter().map(|e| e.measurement).collect();
        assert!(residual_and_jacobian(c, &est).unwrap().0.inf_norm() < 1e-12);
        let ident = vec![Pose::identity(2); 4];
        assert!(residual_and_jacobian(c, &ident).unwrap().0.inf_norm() == 0.0);
        let mut m = unit_square();
        m[0] = Pose::se2(1.0, 0.2, 1.3);
        let g = square(m);
        let est: Vec<Pose> = g.edges().iter().map(|e| e.measurement).collect();
        let expected = cycle_product(c, &est).unwrap().log();
        assert!((residual_and_jacobian(c, &est).unwrap().0 .0 - expected.0).amax() < 1e-14);
    }

    fn random_pose(dof: usize, v: &[f64]) -> Pose {
        Pose::exp(&Tangent::from_slice(&v[..dof])).unwrap()
    }

    /// Central differences of the cycle residual against the analytic blocks.
    fn check_jacobian(cycle: &Cycle, est: &[Pose]) {
        let (_, blocks) = residual_and_jacobian(cycle, est).unwrap();
        let h = 1e-6;
        for (e, block) in blocks {
            let d = est[e.0].dof();
            for k in 0..d {
                let mut dp = vec![0.0; d];
                dp[k] = h;
                let mut dm = vec![0.0; d];
                dm[k] = -h;
                let mut p = est.to_vec();
                p[e.0] = est[e.0].retract(&dp).unwrap();
                let mut m = est.to_vec();
                m[e.0] = est[e.0].retract(&dm).unwrap();
                let rp = residual_and_jacobian(cycle, &p).unwrap().0 .0;
                let rm = residual_and_jacobian(cycle, &m).unwrap().0 .0;
                let fd = (rp - rm) / (2.0 * h);
                let col = block.column(k);
                let err = (&fd - col).amax();
                assert!(err <= 1e-5 * col.amax().max(1.0), "edge {e} column {k}: {fd} vs {col}");
            }
        }
    }

    proptest! {
        #[test]
        fn cycle_jacobians_match_finite_differences(
            vals in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 5),
            se3 in any::<bool>(),
        ) {
            let dof = if se3 { 6 } else { 3 };
            let mut g = PoseGraph::new();
            for _ in 0..4 {
                g.add_vertex(0);
            }
            let pairs = [(0, 1), (1, 2), (2, 3), (0, 3), (2, 0)];
            for (k, &(a, b)) in pairs.iter().enumerate() {
                let kind = if b == a + 1 { EdgeKind::Odometry } else { EdgeKind::LoopClosure };
                let e = Edge::new(VertexId(a), VertexId(b), random_pose(dof, &vals[k]), Information::identity(dof), kind);
                g.add_edge(e).unwrap();
            }
            let est: Vec<Pose> = g.edges().iter().map(|e| e.measurement).collect();
            for c in icb_replay(&g).unwrap().cycles() {
                check_jacobian(c, &est);
            }
        }
    }
}

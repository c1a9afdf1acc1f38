use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GroundTruth, SimError};
use crate::basis::{ma_icb, CycleBasis};
use crate::graph::{Edge, EdgeKind, InterEdge, PoseGraph, VertexId};
use crate::lie::{sample_noise_with, wrap_angle, Information, Pose, Se2};
use crate::solver::{
    chain_poses, estimate_relative_pose, solve_cycle_pgo, RangeBearing, RangeBearingOptions, SolverError, SolverOptions,
};

/// `y = offset + amplitude · sin(2π t / period + phase)` at constant forward
/// speed along x, heading tangent to the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineTrack {
    pub speed: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SineTrack {
    pub fn pose(&self, t: f64) -> Se2 {
        let w = 2.0 * std::f64::consts::PI / self.period;
        let arg = w * t + self.phase;
        Se2::new(
            self.speed * t,
            self.offset + self.amplitude * arg.sin(),
            (self.amplitude * w * arg.cos()).atan2(self.speed),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinewaveConfig {
    pub tracks: [SineTrack; 2],
    pub duration: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    pub min_poses: usize,
    pub max_poses: usize,
    pub measurements: usize,
    /// Odometry covariance diagonal (x, y, θ).
    pub odom_cov: [f64; 3],
    /// Range and bearing variances.
    pub meas_cov: [f64; 2],
    /// Multiplies every noise sample; 0 gives noiseless data.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SinewaveConfig {
    fn default() -> Self {
        Self {
            tracks: [
                SineTrack { speed: 0.5, amplitude: 4.0, period: 40.0, phase: 0.0, offset: 0.0 },
                SineTrack { speed: 0.5, amplitude: 3.0, period: 25.0, phase: 1.5, offset: 8.0 },
            ],
            duration: 120.0,
            min_gap: 0.5,
            max_gap: 2.5,
            min_poses: 75,
            max_poses: 95,
            measurements: 30,
            odom_cov: [0.01, 0.01, 0.001],
            meas_cov: [0.1, 0.01],
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinewaveSim {
    /// One odometry chain per agent, in that agent's starting frame.
    pub graphs: [PoseGraph; 2],
    /// Measurements from agent 0 to agent 1 in time order, with dead-reckoned
    /// poses attached.
    pub measurements: Vec<RangeBearing>,
    /// Vertices each measurement was taken at.
    pub vertices: Vec<(VertexId, VertexId)>,
    /// True poses in each agent's starting frame.
    pub truth: GroundTruth,
    /// True transform from agent 1's frame to agent 0's.
    pub frame: Pose,
}

fn sample_times(rng: &mut ChaCha8Rng, cfg: &SinewaveConfig) -> Vec<f64> {
    loop {
        let mut ts = vec![0.0];
        loop {
            let t = ts[ts.len() - 1] + rng.gen_range(cfg.min_gap..=cfg.max_gap);
            if t > cfg.duration {
                break;
            }
            ts.push(t);
        }
        if (cfg.min_poses..=cfg.max_poses).contains(&ts.len()) {
            return ts;
        }
    }
}

fn nearest(ts: &[f64], t: f64) -> usize {
    let i = ts.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == ts.len() || t - ts[i - 1] <= ts[i] - t {
        i - 1
    } else {
        i
    }
}

fn scaled_noise(rng: &mut ChaCha8Rng, info: &Information, scale: f64) -> Vec<f64> {
    sample_noise_with(info, rng).as_slice().iter().map(|v| v * scale).collect()
}

/// Two agents on sine tracks exchanging range and bearing measurements.
pub fn gen_sinewave(cfg: &SinewaveConfig) -> SinewaveSim {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let odom_info = Information::from_covariance_diagonal(&cfg.odom_cov).expect("positive variances");
    let meas_info = Information::from_covariance_diagonal(&cfg.meas_cov).expect("positive variances");
    let mut times = Vec::new();
    let mut graphs = Vec::new();
    let mut truth = Vec::new();
    let mut dead = Vec::new();
    for track in &cfg.tracks {
        let ts = sample_times(&mut rng, cfg);
        let start = track.pose(0.0).inverse();
        let poses: Vec<Pose> = ts.iter().map(|&t| Pose::Se2(start.compose(&track.pose(t)))).collect();
        let mut g = PoseGraph::new();
        g.add_vertex(0);
        let mut reckoned = vec![Pose::identity(2)];
        for i in 1..poses.len() {
            let v = g.add_vertex(0);
            let z = poses[i - 1].between(&poses[i]).expect("planar");
            let z = z.retract(&scaled_noise(&mut rng, &odom_info, cfg.noise_scale)).expect("planar");
            g.add_edge(Edge::new(VertexId(i - 1), v, z, odom_info.clone(), EdgeKind::Odometry)).expect("chain edge");
            reckoned.push(reckoned[i - 1].compose(&z).expect("planar"));
        }
        times.push(ts);
        graphs.push(g);
        truth.push(poses);
        dead.push(reckoned);
    }
    let frame = Pose::Se2(cfg.tracks[0].pose(0.0).inverse().compose(&cfg.tracks[1].pose(0.0)));
    // Measurements snap to the nearest pose of each agent. Both agents must
    // move between the two measurements of a pair, otherwise the pair only
    // sees one point of the other agent and leaves its heading free.
    let snapped = loop {
        let mut when: Vec<f64> = (0..cfg.measurements).map(|_| rng.gen_range(0.0..=cfg.duration)).collect();
        when.sort_by(f64::total_cmp);
        let at: Vec<(usize, usize)> = when.iter().map(|&t| (nearest(&times[0], t), nearest(&times[1], t))).collect();
        if at.chunks_exact(2).all(|p| p[0].0 != p[1].0 && p[0].1 != p[1].1) {
            break at;
        }
    };
    let (sr, sb) = (cfg.meas_cov[0].sqrt(), cfg.meas_cov[1].sqrt());
    let mut measurements = Vec::with_capacity(snapped.len());
    let mut vertices = Vec::with_capacity(snapped.len());
    for (ia, ib) in snapped {
        let (a, b) = (truth[0][ia].as_se2().expect("planar"), truth[1][ib].as_se2().expect("planar"));
        let (range, bearing) = RangeBearing::predict(frame.as_se2().expect("planar"), a, b);
        let n: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
        measurements.push(RangeBearing {
            range: (range + cfg.noise_scale * sr * n[0]).max(0.0),
            bearing: wrap_angle(bearing + cfg.noise_scale * sb * n[1]),
            info: meas_info.clone(),
            pose_a: dead[0][ia],
            pose_b: dead[1][ib],
        });
        vertices.push((VertexId(ia), VertexId(ib)));
    }
    let [g0, g1]: [PoseGraph; 2] = graphs.try_into().expect("two agents");
    SinewaveSim { graphs: [g0, g1], measurements, vertices, truth: GroundTruth { poses: truth }, frame }
}

/// Relative-pose error (estimate minus truth) of agent 1 seen from agent 0:
/// `[x m, y m, θ deg]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowDofError {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub closures: usize,
    pub converged: bool,
}

fn tangent_information(t: &Pose, info: &Information) -> Result<Information, SolverError> {
    // (x, y, φ) parameters against a right perturbation of `t`.
    let c = t.rotation_angle().cos();
    let s = t.rotation_angle().sin();
    let j = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let j = DMatrix::from_iterator(3, 3, j.iter().copied());
    let m = j.transpose() * info.matrix() * &j;
    Ok(Information::new((&m + m.transpose()) * 0.5)?)
}

/// Turns each pair of consecutive measurements into one inter-agent loop
/// closure between the vertices of the pair's first measurement. Pairs whose
/// geometry does not determine the transform are dropped.
pub fn condense(sim: &SinewaveSim, opts: &RangeBearingOptions) -> Result<Vec<InterEdge>, SolverError> {
    let mut out = Vec::new();
    for (pair, at) in sim.measurements.chunks_exact(2).zip(sim.vertices.chunks_exact(2)) {
        let (t, info) = match estimate_relative_pose(pair, opts) {
            Ok(r) => r,
            Err(SolverError::Degenerate) => continue,
            Err(e) => return Err(e),
        };
        let info = tangent_information(&t, &info)?;
        let (ta, tb) = (&pair[0].pose_a, &pair[0].pose_b);
        let z = ta.inverse().compose(&t)?.compose(tb)?;
        let ad = tb.adjoint();
        let m = ad.transpose() * info.matrix() * &ad;
        out.push(InterEdge {
            from_graph: 0,
            from: at[0].0,
            to_graph: 1,
            to: at[0].1,
            measurement: z,
            info: Information::new((&m + m.transpose()) * 0.5)?,
        });
    }
    Ok(out)
}

fn components(est: &Pose, truth: &Pose) -> [f64; 3] {
    let (e, t) = (est.as_se2().expect("planar"), truth.as_se2().expect("planar"));
    [e.x - t.x, e.y - t.y, wrap_angle(e.theta - t.theta).to_degrees()]
}

/// One trial: condense measurements, solve with the two-agent basis, and
/// compare the relative pose of the agents at their first and last poses.
pub fn sinewave_trial(cfg: &SinewaveConfig, opts: &SolverOptions) -> Result<LowDofError, SimError> {
    let sim = gen_sinewave(cfg);
    let inter = condense(&sim, &RangeBearingOptions::default())?;
    let empty = CycleBasis::new();
    let (merged, basis) = ma_icb(&sim.graphs[0], &sim.graphs[1], &inter, &empty, &empty)?;
    let sol = solve_cycle_pgo(&merged.graph, &basis, opts)?;
    let poses = chain_poses(&merged.graph, &sol.estimates, VertexId(0))?;
    let relative = |a: VertexId, b: VertexId| -> Result<Pose, SimError> {
        let pa = poses[a.0].ok_or(SolverError::Disconnected(a))?;
        let pb = poses[b.0].ok_or(SolverError::Disconnected(b))?;
        Ok(pa.between(&pb)?)
    };
    let (na, nb) = (sim.graphs[0].vertex_count(), sim.graphs[1].vertex_count());
    let b0 = merged.vertex(1, VertexId(0));
    let a_end = merged.vertex(0, VertexId(na - 1));
    let b_end = merged.vertex(1, VertexId(nb - 1));
    let t = &sim.truth.poses;
    let true_end = t[0][na - 1].inverse().compose(&sim.frame)?.compose(&t[1][nb - 1])?;
    Ok(LowDofError {
        start: components(&relative(VertexId(0), b0)?, &sim.frame),
        end: components(&relative(a_end, b_end)?, &true_end),
        closures: inter.len(),
        converged: sol.report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_counts_and_measurements() {
        for seed in 0..20 {
            let sim = gen_sinewave(&SinewaveConfig { seed, ..SinewaveConfig::default() });
            for g in &sim.graphs {
                assert!((75..=95).contains(&g.vertex_count()));
                assert_eq!(g.cycle_rank(), 0);
            }
            assert_eq!(sim.measurements.len(), 30);
            assert_eq!(sim.measurements.chunks_exact(2).count(), 15);
            assert_eq!(condense(&sim, &RangeBearingOptions::default()).unwrap().len(), 15);
            assert!(sim.measurements.iter().all(|m| m.range >= 0.0 && m.bearing.abs() <= std::f64::consts::PI));
        }
    }

    #[test]
    fn heading_follows_the_track() {
        let tr = SinewaveConfig::default().tracks[0];
        let (p, q) = (tr.pose(10.0), tr.pose(10.0 + 1e-6));
        assert!(((q.y - p.y).atan2(q.x - p.x) - p.theta).abs() < 1e-5);
    }

    #[test]
    fn noiseless_measurements_recover_the_frame() {
        let cfg = SinewaveConfig { noise_scale: 0.0, seed: 4, ..SinewaveConfig::default() };
        let sim = gen_sinewave(&cfg);
        for pair in sim.measurements.chunks_exact(2) {
            if let Ok((t, _)) = estimate_relative_pose(pair, &RangeBearingOptions::default()) {
                assert!(t.between(&sim.frame).unwrap().log().inf_norm() < 1e-6);
            }
        }
    }

    #[test]
    fn noiseless_trial_has_zero_error() {
        let cfg = SinewaveConfig { noise_scale: 0.0, seed: 2, ..SinewaveConfig::default() };
        let e = sinewave_trial(&cfg, &SolverOptions::default()).unwrap();
        assert_eq!(e.closures, 15);
        for v in e.start.iter().chain(&e.end) {
            assert!(v.abs() < 1e-6, "{e:?}");
        }
    }

    #[test]
    fn closure_information_matches_propagated_covariance() {
        // Monte-Carlo check of Ad(Tb)ᵀ Ω Ad(Tb) for z = Ta⁻¹ T Tb.
        let t = Pose::se2(3.0, -1.0, 0.7);
        let (ta, tb) = (Pose::se2(1.0, 2.0, -0.4), Pose::se2(-2.0, 0.5, 1.9));
        let info = Information::from_covariance_diagonal(&[0.02, 0.03, 0.005]).unwrap();
        let z0 = ta.inverse().compose(&t).unwrap().compose(&tb).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20000;
        let mut cov = DMatrix::zeros(3, 3);
        for _ in 0..n {
            let tp = t.retract(sample_noise_with(&info, &mut rng).as_slice()).unwrap();
            let z = ta.inverse().compose(&tp).unwrap().compose(&tb).unwrap();
            let d = z0.between(&z).unwrap().log().0;
            cov += &d * d.transpose();
        }
        cov /= n as f64;
        let ad = tb.adjoint();
        let predicted = (ad.transpose() * info.matrix() * &ad).try_inverse().unwrap();
        assert!((cov - &predicted).amax() < 0.05 * predicted.amax(), "{predicted}");
    }
}

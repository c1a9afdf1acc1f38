use nalgebra::{Matrix2, Matrix2x3, Matrix3, SymmetricEigen, Vector2, Vector3};

use super::SolverError;
use crate::lie::{wrap_angle, Information, Pose, Se2};

/// Range and bearing from agent `a` to agent `b`, in `a`'s body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBearing {
    pub range: f64,
    pub bearing: f64,
    pub info: Information,
    /// Pose of `a` in its own odometry frame at measurement time.
    pub pose_a: Pose,
    /// Pose of `b` in its own odometry frame at measurement time.
    pub pose_b: Pose,
}

impl RangeBearing {
    /// Noise-free measurement implied by the frame transform `t`.
    pub fn predict(t: &Se2, pose_a: &Se2, pose_b: &Se2) -> (f64, f64) {
        let dt = pose_a.inverse().compose(t).compose(pose_b);
        (dt.x.hypot(dt.y), dt.y.atan2(dt.x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeBearingOptions {
    pub max_iter: usize,
    pub step_tol: f64,
    /// Number of evenly spaced initial headings.
    pub starts: usize,
}

impl Default for RangeBearingOptions {
    fn default() -> Self {
        Self { max_iter: 100, step_tol: 1e-12, starts: 8 }
    }
}

struct Meas {
    z: Vector2<f64>,
    w: Matrix2<f64>,
    a: Se2,
    b: Se2,
}

/// Residual `z − h(T)` with wrapped bearing, and `∂h/∂(x, y, φ)`.
fn linearize(m: &Meas, p: &Vector3<f64>) -> (Vector2<f64>, Matrix2x3<f64>) {
    let (s, c) = p[2].sin_cos();
    let rb = Vector2::new(c * m.b.x - s * m.b.y, s * m.b.x + c * m.b.y);
    let world = rb + Vector2::new(p[0], p[1]);
    let (sa, ca) = m.a.theta.sin_cos();
    let rat = Matrix2::new(ca, sa, -sa, ca);
    let dt = rat * (world - Vector2::new(m.a.x, m.a.y));
    let r2 = dt.norm_squared().max(1e-300);
    let r = r2.sqrt();
    let h = Vector2::new(r, dt.y.atan2(dt.x));
    let dh_ddt = Matrix2::new(dt.x / r, dt.y / r, -dt.y / r2, dt.x / r2);
    let ddt_dphi = rat * Vector2::new(-rb.y, rb.x);
    let mut ddt = Matrix2x3::zeros();
    ddt.fixed_view_mut::<2, 2>(0, 0).copy_from(&rat);
    ddt.set_column(2, &ddt_dphi);
    let res = Vector2::new(m.z.x - h.x, wrap_angle(m.z.y - h.y));
    (res, dh_ddt * ddt)
}

fn cost(ms: &[Meas], p: &Vector3<f64>) -> f64 {
    ms.iter()
        .map(|m| {
            let (r, _) = linearize(m, p);
            (r.transpose() * m.w * r)[(0, 0)]
        })
        .sum()
}

fn normal(ms: &[Meas], p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for m in ms {
        let (r, j) = linearize(m, p);
        h += j.transpose() * m.w * j;
        g += j.transpose() * m.w * r;
    }
    (h, g)
}

/// Damped Gauss-Newton from one initial guess.
fn refine(ms: &[Meas], mut p: Vector3<f64>, opts: &RangeBearingOptions) -> Vector3<f64> {
    let mut f = cost(ms, &p);
    let mut mu = 0.0;
    for _ in 0..opts.max_iter {
        let (h, g) = normal(ms, &p);
        let mut improved = false;
        for _ in 0..20 {
            let damped = h + Matrix3::identity() * mu;
            let Some(step) = damped.try_inverse().map(|inv| inv * g) else {
                mu = if mu == 0.0 { 1e-6 } else { mu * 10.0 };
                continue;
            };
            let mut q = p + step;
            q[2] = wrap_angle(q[2]);
            let fq = cost(ms, &q);
            if fq <= f {
                let small = step.amax() < opts.step_tol;
                p = q;
                f = fq;
                mu *= 0.1;
                improved = !small;
                break;
            }
            mu = if mu == 0.0 { 1e-6 } else { mu * 10.0 };
        }
        if !improved {
            break;
        }
    }
    p
}

/// Frame transform from agent `b`'s odometry frame to agent `a`'s that best
/// explains the measurements, with its Gauss-Newton information.
pub fn estimate_relative_pose(
    meas: &[RangeBearing],
    opts: &RangeBearingOptions,
) -> Result<(Pose, Information), SolverError> {
    if meas.len() < 2 {
        return Err(SolverError::TooFewMeasurements(meas.len()));
    }
    let ms: Vec<Meas> = meas
        .iter()
        .map(|m| match (m.pose_a.as_se2(), m.pose_b.as_se2(), m.info.dim()) {
            (Some(a), Some(b), 2) => Ok(Meas {
                z: Vector2::new(m.range, m.bearing),
                w: Matrix2::from_iterator(m.info.matrix().iter().copied()),
                a: *a,
                b: *b,
            }),
            _ => Err(SolverError::NotPlanar),
        })
        .collect::<Result<_, _>>()?;
    let first = &ms[0];
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for k in 0..opts.starts.max(1) {
        let phi = wrap_angle(2.0 * std::f64::consts::PI * k as f64 / opts.starts.max(1) as f64);
        // Translation that reproduces the first measurement exactly.
        let seen = first.a.transform_point([first.z.x * first.z.y.cos(), first.z.x * first.z.y.sin()]);
        let rb = Se2::new(0.0, 0.0, phi).transform_point([first.b.x, first.b.y]);
        let p0 = Vector3::new(seen[0] - rb[0], seen[1] - rb[1], phi);
        let p = refine(&ms, p0, opts);
        let f = cost(&ms, &p);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf - 1e-12 * bf.max(1.0)) {
            best = Some((f, p));
        }
    }
    let (_, p) = best.expect("at least one start");
    let (h, _) = normal(&ms, &p);
    let eig = SymmetricEigen::new(h).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo.is_nan() || lo <= 1e-10 * hi.max(f64::MIN_POSITIVE) {
        return Err(SolverError::Degenerate);
    }
    let info = Information::new(nalgebra::DMatrix::from_iterator(3, 3, ((h + h.transpose()) * 0.5).iter().copied()))?;
    Ok((Pose::se2(p[0], p[1], p[2]), info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn meas(t: &Se2, a: Se2, b: Se2, noise: (f64, f64)) -> RangeBearing {
        let (r, br) = RangeBearing::predict(t, &a, &b);
        RangeBearing {
            range: r + noise.0,
            bearing: wrap_angle(br + noise.1),
            info: Information::from_covariance_diagonal(&[0.1, 0.01]).unwrap(),
            pose_a: Pose::Se2(a),
            pose_b: Pose::Se2(b),
        }
    }

    fn truth() -> Se2 {
        Se2::new(3.0, -2.0, 2.4)
    }

    fn geometry() -> [(Se2, Se2); 2] {
        [(Se2::new(0.0, 0.0, 0.0), Se2::new(0.0, 0.0, 0.0)), (Se2::new(4.0, 1.0, 0.3), Se2::new(2.0, 3.0, -0.5))]
    }

    #[test]
    fn two_noiseless_measurements_recover_the_transform() {
        let t = truth();
        let ms: Vec<_> = geometry().iter().map(|&(a, b)| meas(&t, a, b, (0.0, 0.0))).collect();
        let (est, info) = estimate_relative_pose(&ms, &RangeBearingOptions::default()).unwrap();
        assert!(est.between(&Pose::Se2(t)).unwrap().log().inf_norm() < 1e-6);
        assert_eq!(info.dim(), 3);
    }

    #[test]
    fn errors() {
        let t = truth();
        let (a, b) = geometry()[1];
        let m = meas(&t, a, b, (0.0, 0.0));
        let opts = RangeBearingOptions::default();
        assert!(matches!(
            estimate_relative_pose(std::slice::from_ref(&m), &opts),
            Err(SolverError::TooFewMeasurements(1))
        ));
        assert!(matches!(estimate_relative_pose(&[m.clone(), m], &opts), Err(SolverError::Degenerate)));
    }

    /// Independent minimizer: coarse grid over (x, y, φ) then local refinement.
    fn grid_search(ms: &[Meas]) -> Vector3<f64> {
        let mut best = (f64::INFINITY, Vector3::zeros());
        for i in 0..36 {
            let phi = wrap_angle(i as f64 * std::f64::consts::PI / 18.0);
            for x in -10..=10 {
                for y in -10..=10 {
                    let p = Vector3::new(x as f64 * 0.6, y as f64 * 0.6, phi);
                    let f = cost(ms, &p);
                    if f < best.0 {
                        best = (f, p);
                    }
                }
            }
        }
        // Coordinate-descent refinement with shrinking steps.
        let mut p = best.1;
        let mut f = best.0;
        let mut step = Vector3::new(0.3, 0.3, 0.09);
        while step.amax() > 1e-9 {
            let mut moved = false;
            for k in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut q = p;
                    q[k] += s * step[k];
                    let fq = cost(ms, &q);
                    if fq < f {
                        (p, f, moved) = (q, fq, true);
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        p
    }

    #[test]
    fn noisy_estimates_agree_with_grid_search_and_are_unbiased() {
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nr = Normal::new(0.0, 0.1f64.sqrt()).unwrap();
        let nb = Normal::new(0.0, 0.1).unwrap();
        let opts = RangeBearingOptions::default();
        let trials = 200;
        let mut samples = Vec::new();
        for trial in 0..trials {
            let ms: Vec<_> =
                geometry().iter().map(|&(a, b)| meas(&t, a, b, (nr.sample(&mut rng), nb.sample(&mut rng)))).collect();
            let (est, _) = estimate_relative_pose(&ms, &opts).unwrap();
            let e = *est.as_se2().unwrap();
            if trial < 20 {
                let inner: Vec<Meas> = ms
                    .iter()
                    .map(|m| Meas {
                        z: Vector2::new(m.range, m.bearing),
                        w: Matrix2::from_iterator(m.info.matrix().iter().copied()),
                        a: *m.pose_a.as_se2().unwrap(),
                        b: *m.pose_b.as_se2().unwrap(),
                    })
                    .collect();
                let g = grid_search(&inner);
                let ours = Vector3::new(e.x, e.y, e.theta);
                assert!(cost(&inner, &ours) <= cost(&inner, &g) + 1e-9);
            }
            samples.push([e.x - t.x, e.y - t.y, wrap_angle(e.theta - t.theta)]);
        }
        for k in 0..3 {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / trials as f64;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            assert!(mean.abs() < 3.0 * (var / trials as f64).sqrt() + 1e-9, "component {k}: mean {mean}, var {var}");
        }
    }
}

//! SE(2)/SE(3) rigid-body transforms with exponential and logarithm maps.
//!
//! Tangent coordinates put translation first: `[x, y, θ]` for SE(2) and
//! `[ρx, ρy, ρz, φx, φy, φz]` for SE(3). Perturbations are applied on the
//! right, `T · Exp(δ)`, and the Jacobians in this module follow that
//! convention.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Rotation magnitude below which closed forms switch to series expansions.
const SMALL_ANGLE: f64 = 1e-8;
/// Threshold for the higher-order Jacobian coefficients, which lose
/// precision much earlier than `Exp`/`Log`.
const SMALL_ANGLE_JACOBIAN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tangent vector of length {0} is neither SE(2) (3) nor SE(3) (6)")]
    BadTangentLength(usize),
    #[error("information matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("information matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("information matrix must be square with side 2, 3 or 6, got {0}x{1}")]
    BadInformationShape(usize, usize),
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se2 {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-π, π]`.
    pub theta: f64,
}

impl Se2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    pub fn compose(&self, other: &Se2) -> Se2 {
        let (s, c) = self.theta.sin_cos();
        Se2::new(self.x + c * other.x - s * other.y, self.y + s * other.x + c * other.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Se2 {
        let (s, c) = self.theta.sin_cos();
        Se2::new(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
    }

    /// Rotates a point of this frame into the parent frame and translates it.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    pub fn exp(v: [f64; 3]) -> Se2 {
        let [rx, ry, th] = v;
        let (a, b) = se2_v_coeffs(th);
        Se2::new(a * rx - b * ry, b * rx + a * ry, th)
    }

    pub fn log(&self) -> [f64; 3] {
        let th = self.theta;
        let (a, b) = se2_v_coeffs(th);
        let det = a * a + b * b;
        [(a * self.x + b * self.y) / det, (-b * self.x + a * self.y) / det, th]
    }
}

/// `(sin θ / θ, (1 - cos θ) / θ)`, the entries of the SE(2) `V` matrix.
fn se2_v_coeffs(th: f64) -> (f64, f64) {
    if th.abs() < SMALL_ANGLE {
        (1.0 - th * th / 6.0, th / 2.0)
    } else {
        let h = (th / 2.0).sin();
        (th.sin() / th, 2.0 * h * h / th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3 {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Se3 {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Builds from a raw `(qx, qy, qz, qw)` quaternion, normalizing it.
    pub fn from_xyz_quat(t: [f64; 3], q: [f64; 4]) -> Self {
        let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]));
        Self::new(quat, Vector3::new(t[0], t[1], t[2]))
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn compose(&self, other: &Se3) -> Se3 {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Se3::new(UnitQuaternion::new_normalize(q), self.translation + self.rotation * other.translation)
    }

    pub fn inverse(&self) -> Se3 {
        let inv = self.rotation.inverse();
        Se3::new(inv, -(inv * self.translation))
    }

    pub fn exp(v: &[f64]) -> Se3 {
        let rho = Vector3::new(v[0], v[1], v[2]);
        let phi = Vector3::new(v[3], v[4], v[5]);
        let rotation = so3_exp(&phi);
        Se3::new(rotation, so3_left_jacobian(&phi) * rho)
    }

    pub fn log(&self) -> [f64; 6] {
        let phi = so3_log(&self.rotation);
        let rho = so3_left_jacobian_inv(&phi) * self.translation;
        [rho.x, rho.y, rho.z, phi.x, phi.y, phi.z]
    }
}

fn so3_exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let th = phi.norm();
    if th < SMALL_ANGLE {
        let q = Quaternion::new(1.0 - th * th / 8.0, phi.x / 2.0, phi.y / 2.0, phi.z / 2.0);
        UnitQuaternion::new_normalize(q)
    } else {
        let (s, c) = (th / 2.0).sin_cos();
        let axis = phi / th;
        UnitQuaternion::new_unchecked(Quaternion::new(c, s * axis.x, s * axis.y, s * axis.z))
    }
}

/// Rotation vector of magnitude at most π. At exactly π the sign is chosen so
/// that the first nonzero component is positive.
fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let vn = v.norm();
    if vn < SMALL_ANGLE {
        // θ ≈ 2|v|/w with a third-order correction.
        return v * (2.0 / w) * (1.0 - vn * vn / (3.0 * w * w));
    }
    let th = 2.0 * vn.atan2(w);
    let mut phi = v * (th / vn);
    if w.abs() < 1e-15 {
        let first = phi.iter().copied().find(|c| c.abs() > 1e-15).unwrap_or(0.0);
        if first < 0.0 {
            phi = -phi;
        }
    }
    phi
}

/// SO(3) left Jacobian, which is also the `V` matrix of the SE(3) exponential.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = hat(phi);
    let (a, b) = if th < SMALL_ANGLE_JACOBIAN {
        let t2 = th * th;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = th * th;
        ((1.0 - th.cos()) / t2, (th - th.sin()) / (t2 * th))
    };
    Matrix3::identity() + k * a + k * k * b
}

fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let k = hat(phi);
    let c = if th < SMALL_ANGLE_JACOBIAN {
        let t2 = th * th;
        1.0 / 12.0 + t2 / 720.0
    } else {
        (1.0 - th * th.sin() / (2.0 * (1.0 - th.cos()))) / (th * th)
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Translational coupling block `Q(ρ, φ)` of the SE(3) left Jacobian.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let th = phi.norm();
    let r = hat(rho);
    let p = hat(phi);
    let (c1, c2, c3) = if th < SMALL_ANGLE_JACOBIAN {
        let t2 = th * th;
        (1.0 / 6.0 - t2 / 120.0, 1.0 / 24.0 - t2 / 720.0, 1.0 / 120.0 - t2 / 2520.0)
    } else {
        let (s, c) = th.sin_cos();
        let t2 = th * th;
        (
            (th - s) / (t2 * th),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * th - 3.0 * s + th * c) / (2.0 * t2 * t2 * th),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}

/// A rigid-body transform in 2D or 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pose {
    Se2(Se2),
    Se3(Se3),
}

impl Pose {
    pub fn se2(x: f64, y: f64, theta: f64) -> Pose {
        Pose::Se2(Se2::new(x, y, theta))
    }

    pub fn identity(dim: usize) -> Pose {
        if dim == 3 {
            Pose::Se3(Se3::identity())
        } else {
            Pose::Se2(Se2::identity())
        }
    }

    /// Spatial dimension: 2 or 3.
    pub fn dim(&self) -> usize {
        match self {
            Pose::Se2(_) => 2,
            Pose::Se3(_) => 3,
        }
    }

    /// Degrees of freedom (tangent length): 3 or 6.
    pub fn dof(&self) -> usize {
        match self {
            Pose::Se2(_) => 3,
            Pose::Se3(_) => 6,
        }
    }

    pub fn compose(&self, other: &Pose) -> Result<Pose, LieError> {
        match (self, other) {
            (Pose::Se2(a), Pose::Se2(b)) => Ok(Pose::Se2(a.compose(b))),
            (Pose::Se3(a), Pose::Se3(b)) => Ok(Pose::Se3(a.compose(b))),
            _ => Err(LieError::DimensionMismatch { expected: self.dim(), found: other.dim() }),
        }
    }

    pub fn inverse(&self) -> Pose {
        match self {
            Pose::Se2(a) => Pose::Se2(a.inverse()),
            Pose::Se3(a) => Pose::Se3(a.inverse()),
        }
    }

    /// `self⁻¹ · other`, the transform of `other` seen from `self`.
    pub fn between(&self, other: &Pose) -> Result<Pose, LieError> {
        self.inverse().compose(other)
    }

    pub fn log(&self) -> Tangent {
        match self {
            Pose::Se2(a) => Tangent::from_slice(&a.log()),
            Pose::Se3(a) => Tangent::from_slice(&a.log()),
        }
    }

    pub fn exp(v: &Tangent) -> Result<Pose, LieError> {
        match v.len() {
            3 => Ok(Pose::Se2(Se2::exp([v[0], v[1], v[2]]))),
            6 => Ok(Pose::Se3(Se3::exp(v.as_slice()))),
            n => Err(LieError::BadTangentLength(n)),
        }
    }

    /// `self · Exp(δ)`.
    pub fn retract(&self, delta: &[f64]) -> Result<Pose, LieError> {
        self.compose(&Pose::exp(&Tangent::from_slice(delta))?)
    }

    pub fn translation(&self) -> Vec<f64> {
        match self {
            Pose::Se2(a) => vec![a.x, a.y],
            Pose::Se3(a) => a.translation.iter().copied().collect(),
        }
    }

    /// Heading for SE(2), rotation-vector magnitude for SE(3).
    pub fn rotation_angle(&self) -> f64 {
        match self {
            Pose::Se2(a) => a.theta,
            Pose::Se3(a) => so3_log(&a.rotation).norm(),
        }
    }

    pub fn as_se2(&self) -> Option<&Se2> {
        match self {
            Pose::Se2(a) => Some(a),
            Pose::Se3(_) => None,
        }
    }

    /// Adjoint matrix mapping right-tangent vectors at this pose to left ones:
    /// `T · Exp(ξ) = Exp(Ad_T ξ) · T`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        match self {
            Pose::Se2(a) => {
                let (s, c) = a.theta.sin_cos();
                DMatrix::from_row_slice(3, 3, &[c, -s, a.y, s, c, -a.x, 0.0, 0.0, 1.0])
            }
            Pose::Se3(a) => {
                let r = a.rotation.to_rotation_matrix().into_inner();
                let tr = hat(&a.translation) * r;
                let mut m = DMatrix::zeros(6, 6);
                m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
                m.fixed_view_mut::<3, 3>(0, 3).copy_from(&tr);
                m.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
                m
            }
        }
    }
}

impl std::fmt::Display for Pose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pose::Se2(a) => write!(f, "SE2({:.6}, {:.6}, {:.6})", a.x, a.y, a.theta),
            Pose::Se3(a) => {
                let q = a.rotation.quaternion();
                write!(
                    f,
                    "SE3(t=[{:.6}, {:.6}, {:.6}], q=[{:.6}, {:.6}, {:.6}, {:.6}])",
                    a.translation.x, a.translation.y, a.translation.z, q.i, q.j, q.k, q.w
                )
            }
        }
    }
}

/// Tangent-space coordinates (length 3 or 6).
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent(pub DVector<f64>);

impl Tangent {
    pub fn from_slice(v: &[f64]) -> Self {
        Tangent(DVector::from_column_slice(v))
    }

    pub fn zeros(len: usize) -> Self {
        Tangent(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn inf_norm(&self) -> f64 {
        self.0.amax()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Index range of the translational components.
    pub fn translation_part(&self) -> &[f64] {
        match self.len() {
            3 => &self.as_slice()[..2],
            _ => &self.as_slice()[..3],
        }
    }

    pub fn rotation_part(&self) -> &[f64] {
        match self.len() {
            3 => &self.as_slice()[2..],
            _ => &self.as_slice()[3..],
        }
    }
}

impl std::ops::Index<usize> for Tangent {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Symmetric positive-definite inverse covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Information {
    matrix: DMatrix<f64>,
    /// Lower Cholesky factor: `matrix = L Lᵀ`.
    chol: DMatrix<f64>,
}

impl Information {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, LieError> {
        let (r, c) = matrix.shape();
        if r != c || !matches!(r, 2 | 3 | 6) {
            return Err(LieError::BadInformationShape(r, c));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(LieError::NotSymmetric(asym));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(LieError::NotPositiveDefinite);
        }
        let chol = nalgebra::Cholesky::new(matrix.clone()).ok_or(LieError::NotPositiveDefinite)?;
        Ok(Self { chol: chol.l(), matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self, LieError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Information from a diagonal covariance.
    pub fn from_covariance_diagonal(var: &[f64]) -> Result<Self, LieError> {
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
        Self::from_diagonal(&inv)
    }

    /// Rebuilds from the row-major upper triangle (g2o convention).
    pub fn from_upper_triangle(n: usize, upper: &[f64]) -> Result<Self, LieError> {
        if upper.len() != n * (n + 1) / 2 {
            return Err(LieError::DimensionMismatch { expected: n * (n + 1) / 2, found: upper.len() });
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i..n {
                let v = *it.next().expect("length checked");
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        nalgebra::Cholesky::new(self.matrix.clone()).expect("validated at construction").inverse()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, LieError> {
        Self::new(&self.matrix * factor)
    }
}

/// `vᵀ · info · v`.
pub fn weighted_norm_sq(v: &Tangent, info: &Information) -> Result<f64, LieError> {
    if v.len() != info.dim() {
        return Err(LieError::DimensionMismatch { expected: info.dim(), found: v.len() });
    }
    // ‖Lᵀ v‖² stays non-negative under rounding.
    Ok((info.cholesky_lower().transpose() * &v.0).norm_squared())
}

/// Zero-mean Gaussian tangent sample with covariance `info⁻¹`, drawn from `rng`.
pub fn sample_noise_with<R: Rng + ?Sized>(info: &Information, rng: &mut R) -> Tangent {
    let n = info.dim();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    // x = L⁻ᵀ z has covariance (L Lᵀ)⁻¹.
    let x =
        info.cholesky_lower().transpose().solve_upper_triangular(&z).expect("Cholesky factor has a nonzero diagonal");
    Tangent(x)
}

/// Deterministic single sample for a given seed.
pub fn sample_noise(info: &Information, seed: u64) -> Tangent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_noise_with(info, &mut rng)
}

/// Right Jacobian of `Exp` at `v`: `Exp(v + ε) ≈ Exp(v) · Exp(J_r(v) ε)`.
pub fn right_jacobian(v: &Tangent) -> DMatrix<f64> {
    match v.len() {
        3 => {
            let (x, y, th) = (v[0], v[1], v[2]);
            if th.abs() < SMALL_ANGLE_JACOBIAN {
                // Series of the closed form below to second order in θ.
                let t2 = th * th;
                let a = 1.0 - t2 / 6.0;
                let b = th / 2.0 - t2 * th / 24.0;
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        a,
                        b,
                        -y / 2.0 + x * th / 6.0 + y * t2 / 24.0,
                        -b,
                        a,
                        x / 2.0 + y * th / 6.0 - x * t2 / 24.0,
                        0.0,
                        0.0,
                        1.0,
                    ],
                )
            } else {
                let (s, c) = th.sin_cos();
                let t2 = th * th;
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        s / th,
                        (1.0 - c) / th,
                        (th * x - y + y * c - x * s) / t2,
                        (c - 1.0) / th,
                        s / th,
                        (x + th * y - x * c - y * s) / t2,
                        0.0,
                        0.0,
                        1.0,
                    ],
                )
            }
        }
        _ => {
            let rho = -Vector3::new(v[0], v[1], v[2]);
            let phi = -Vector3::new(v[3], v[4], v[5]);
            let jl = so3_left_jacobian(&phi);
            let q = se3_q(&rho, &phi);
            let mut m = DMatrix::zeros(6, 6);
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
            m.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
            m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
            m
        }
    }
}

/// Inverse right Jacobian: `Log(X · Exp(ε)) ≈ Log(X) + J_r⁻¹(Log X) ε`.
pub fn right_jacobian_inv(v: &Tangent) -> DMatrix<f64> {
    match v.len() {
        3 => right_jacobian(v).try_inverse().expect("SE(2) right Jacobian is invertible for |θ| < 2π"),
        _ => {
            let rho = -Vector3::new(v[0], v[1], v[2]);
            let phi = -Vector3::new(v[3], v[4], v[5]);
            let jinv = so3_left_jacobian_inv(&phi);
            let q = se3_q(&rho, &phi);
            let off = -(jinv * q * jinv);
            let mut m = DMatrix::zeros(6, 6);
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
            m.fixed_view_mut::<3, 3>(0, 3).copy_from(&off);
            m.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
            m
        }
    }
}

//! Frame-aware planar kinematics: twists, wrenches, the sensor-to-body wrench
//! map and the SE(3)-to-planar selection used by the admittance law.
//!
//! Wrenches are stored force-first, `[f; τ]`, in both frames. Frames are
//! runtime tags; feeding a sensor-frame wrench where a body-frame one is
//! expected is a checked error.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::FrameError;

/// Tolerance on `RᵀR = I` and `det R = 1` when accepting a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    /// Suction-cup sensor frame `{S}`.
    Sensor,
    /// Robot centre-of-mass frame `{B}`.
    Body,
}

/// Generalized body velocity `(ṗx, ṗy, θ̇)` of the robot, expressed in `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarTwist {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl PlanarTwist {
    pub const ZERO: Self = Self { vx: 0.0, vy: 0.0, wz: 0.0 };

    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        Self { vx, vy, wz }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.wz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.wz.is_finite()
    }

    /// Mechanical power `vᵀ·u` delivered by a planar wrench.
    pub fn power(&self, u: &PlanarWrench) -> f64 {
        self.vx * u.fx + self.vy * u.fy + self.wz * u.tz
    }
}

/// The planar part `Λ·F_b = (fx, fy, τz)` of a body-frame wrench.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarWrench {
    pub fx: f64,
    pub fy: f64,
    pub tz: f64,
}

impl PlanarWrench {
    pub const ZERO: Self = Self { fx: 0.0, fy: 0.0, tz: 0.0 };

    pub fn new(fx: f64, fy: f64, tz: f64) -> Self {
        Self { fx, fy, tz }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.fx, self.fy, self.tz)
    }
}

/// A force/torque pair tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench6 {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: Frame,
}

impl Wrench6 {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>, frame: Frame) -> Self {
        Self { force, torque, frame }
    }

    pub fn zero(frame: Frame) -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), frame)
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.force.x, self.force.y, self.force.z, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn from_vector(v: &Vector6<f64>, frame: Frame) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into(), frame)
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|c| c.is_finite())
    }
}

impl std::ops::Sub for Wrench6 {
    type Output = Wrench6;

    /// Component-wise difference. Both operands must share a frame; the left
    /// operand's tag is kept.
    fn sub(self, rhs: Wrench6) -> Wrench6 {
        debug_assert_eq!(self.frame, rhs.frame, "subtracting wrenches in different frames");
        Wrench6::new(self.force - rhs.force, self.torque - rhs.torque, self.frame)
    }
}

/// World-frame pose of the robot. `theta` is never wrapped so that the barrier
/// gradient chain stays continuous across full turns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Maps a point given in this pose's local frame into the world.
    pub fn transform_point(&self, local_x: f64, local_y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * local_x - s * local_y, self.y + s * local_x + c * local_y)
    }

    /// Rotates a world-frame vector into this pose's local frame.
    pub fn to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * wx + s * wy, -s * wx + c * wy)
    }
}

/// Rigid placement of `{S}` relative to `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct FrameTransform {
    p_bs: Vector3<f64>,
    r_bs: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    p_bs: [f64; 3],
    /// Row-major.
    r_bs: [[f64; 3]; 3],
}

impl TryFrom<RawTransform> for FrameTransform {
    type Error = FrameError;

    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        let r = Matrix3::from_fn(|i, j| raw.r_bs[i][j]);
        FrameTransform::new(Vector3::from(raw.p_bs), r)
    }
}

impl From<FrameTransform> for RawTransform {
    fn from(t: FrameTransform) -> Self {
        let mut r_bs = [[0.0; 3]; 3];
        for (i, row) in r_bs.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = t.r_bs[(i, j)];
            }
        }
        RawTransform { p_bs: t.p_bs.into(), r_bs }
    }
}

impl FrameTransform {
    pub fn new(p_bs: Vector3<f64>, r_bs: Matrix3<f64>) -> Result<Self, FrameError> {
        if !p_bs.iter().chain(r_bs.iter()).all(|v| v.is_finite()) {
            return Err(FrameError::NonFinite("frame transform"));
        }
        let deviation = (r_bs.transpose() * r_bs - Matrix3::identity()).abs().max();
        let det = r_bs.determinant();
        if deviation > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(FrameError::NotOrthonormal { deviation, det });
        }
        Ok(Self { p_bs, r_bs })
    }

    pub fn identity() -> Self {
        Self { p_bs: Vector3::zeros(), r_bs: Matrix3::identity() }
    }

    /// Cup mounted on the front of the robot with its suction axis pointing
    /// back into the body: `z_S = -x_B`, `x_S = y_B`, `y_S = -z_B`.
    ///
    /// With this mount a push on the object (positive chamber forces) becomes
    /// a force along `-x_B`, and chambers with positive `x_S` sit on the `+y_B`
    /// side of the cup.
    pub fn front_mount(p_bs: Vector3<f64>) -> Self {
        #[rustfmt::skip]
        let r_bs = Matrix3::new(
            0.0, 0.0, -1.0,
            1.0, 0.0, 0.0,
            0.0, -1.0, 0.0,
        );
        Self { p_bs, r_bs }
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.p_bs
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r_bs
    }

    /// The transform of `{B}` relative to `{S}`.
    pub fn inverse(&self) -> Self {
        let rt = self.r_bs.transpose();
        Self { p_bs: -(rt * self.p_bs), r_bs: rt }
    }

    /// Re-expresses a sensor-frame wrench in the body frame.
    pub fn apply(&self, w: &Wrench6) -> Result<Wrench6, FrameError> {
        if w.frame != Frame::Sensor {
            return Err(FrameError::WrongFrame { expected: Frame::Sensor, found: w.frame });
        }
        Ok(Wrench6::from_vector(&(wrench_transform(self) * w.to_vector()), Frame::Body))
    }
}

/// Skew-symmetric matrix with `skew(p) * v == p × v`.
pub fn skew(p: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let s = Matrix3::new(
        0.0, -p.z, p.y,
        p.z, 0.0, -p.x,
        -p.y, p.x, 0.0,
    );
    s
}

/// The 6×6 wrench map `[[R, 0], [S(p)·R, R]]` taking `[f; τ]` from `{S}` to `{B}`.
pub fn wrench_transform(t: &FrameTransform) -> Matrix6<f64> {
    let mut g = Matrix6::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.r_bs);
    g.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&t.p_bs) * t.r_bs));
    g.fixed_view_mut::<3, 3>(3, 3).copy_from(&t.r_bs);
    g
}

/// Drops the out-of-plane components of a body wrench, keeping `(fx, fy, τz)`.
pub fn select_planar(w: &Wrench6) -> Result<PlanarWrench, FrameError> {
    if w.frame != Frame::Body {
        return Err(FrameError::WrongFrame { expected: Frame::Body, found: w.frame });
    }
    Ok(PlanarWrench::new(w.force.x, w.force.y, w.torque.z))
}

/// One explicit Euler step of the world pose under a body-frame twist. The
/// body velocity is rotated by the heading at the start of the step.
pub fn integrate_pose(pose: Pose2D, v: PlanarTwist, dt: f64) -> Pose2D {
    debug_assert!(dt > 0.0);
    let (s, c) = pose.theta.sin_cos();
    Pose2D {
        x: pose.x + dt * (c * v.vx - s * v.vy),
        y: pose.y + dt * (s * v.vx + c * v.vy),
        theta: pose.theta + dt * v.wz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        assert_eq!(skew(&Vector3::z()) * Vector3::x(), Vector3::y());
        let out = skew(&Vector3::new(0.0, 0.0, 0.1)) * Vector3::new(10.0, 0.0, 0.0);
        assert_abs_diff_eq!(out, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn identity_transform_is_identity_matrix() {
        assert_eq!(wrench_transform(&FrameTransform::identity()), Matrix6::identity());
    }

    #[test]
    fn offset_force_produces_lever_torque() {
        let d = 0.3;
        let f = 7.0;
        let t = FrameTransform::new(Vector3::new(0.0, 0.0, d), Matrix3::identity()).unwrap();
        let w = Wrench6::new(Vector3::new(f, 0.0, 0.0), Vector3::zeros(), Frame::Sensor);
        let b = t.apply(&w).unwrap();
        assert_eq!(b.frame, Frame::Body);
        assert_abs_diff_eq!(b.torque, Vector3::new(0.0, d * f, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(b.force, w.force, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.001);
        assert!(matches!(FrameTransform::new(Vector3::zeros(), r), Err(FrameError::NotOrthonormal { .. })));
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(FrameTransform::new(Vector3::zeros(), reflection).is_err());
    }

    #[test]
    fn front_mount_is_a_rotation() {
        let t = FrameTransform::front_mount(Vector3::new(0.25, 0.0, 0.1));
        assert!(FrameTransform::new(*t.translation(), *t.rotation()).is_ok());
        // Suction axis points into the body.
        assert_eq!(t.rotation() * Vector3::z(), -Vector3::x());
    }

    #[test]
    fn select_planar_examples() {
        let w = Wrench6::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0), Frame::Body);
        assert_eq!(select_planar(&w).unwrap(), PlanarWrench::new(1.0, 2.0, 6.0));
        assert_eq!(select_planar(&Wrench6::zero(Frame::Body)).unwrap(), PlanarWrench::ZERO);
        let gravity = Wrench6::new(Vector3::new(0.0, 0.0, -50.0), Vector3::zeros(), Frame::Body);
        assert_eq!(select_planar(&gravity).unwrap(), PlanarWrench::ZERO);
        assert!(matches!(select_planar(&Wrench6::zero(Frame::Sensor)), Err(FrameError::WrongFrame { .. })));
    }

    #[test]
    fn apply_rejects_body_frame_input() {
        let t = FrameTransform::identity();
        assert!(t.apply(&Wrench6::zero(Frame::Body)).is_err());
    }

    #[test]
    fn integrate_pose_examples() {
        let p = integrate_pose(Pose2D::default(), PlanarTwist::new(1.0, 0.0, 0.0), 0.5);
        assert_eq!(p, Pose2D::new(0.5, 0.0, 0.0));

        let p = integrate_pose(Pose2D::new(0.0, 0.0, FRAC_PI_2), PlanarTwist::new(1.0, 0.0, 0.0), 1.0);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_eq!(p.theta, FRAC_PI_2);

        let p = integrate_pose(Pose2D::default(), PlanarTwist::new(0.0, 0.0, 1.0), 0.002);
        assert_eq!(p, Pose2D::new(0.0, 0.0, 0.002));
    }

    #[test]
    fn integrate_pose_is_first_order() {
        // Constant twist traces a circular arc; compare against the closed form.
        let v = PlanarTwist::new(1.0, 0.0, 1.0);
        let horizon: f64 = 1.0;
        let exact = (horizon.sin(), 1.0 - horizon.cos());
        let err = |n: usize| {
            let dt = horizon / n as f64;
            let p = (0..n).fold(Pose2D::default(), |p, _| integrate_pose(p, v, dt));
            ((p.x - exact.0).powi(2) + (p.y - exact.1).powi(2)).sqrt()
        };
        let ratio = err(500) / err(1000);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");

        // Rotation-free motion is exact.
        let straight = PlanarTwist::new(0.3, -0.2, 0.0);
        let start = Pose2D::new(1.0, 2.0, 0.7);
        let p = (0..1000).fold(start, |p, _| integrate_pose(p, straight, 0.001));
        let (ex, ey) = start.transform_point(0.3, -0.2);
        assert_abs_diff_eq!(p.x, ex, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, ey, epsilon = 1e-12);
    }

    fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(r, p, y)| *Rotation3::from_euler_angles(r, p, y).matrix())
    }

    fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-range..range, -range..range, -range..range).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn skew_is_antisymmetric_cross_product(p in vec3(100.0), v in vec3(100.0)) {
            let s = skew(&p);
            prop_assert_eq!(s.transpose(), -s);
            prop_assert!((s * v - p.cross(&v)).norm() <= 1e-12 * (1.0 + p.norm() * v.norm()));
        }

        #[test]
        fn wrench_transform_preserves_power(
            r in rotation(), p in vec3(1.0), f in vec3(50.0), tau in vec3(10.0),
            vb in vec3(2.0), wb in vec3(2.0),
        ) {
            let t = FrameTransform::new(p, r).unwrap();
            let g = wrench_transform(&t);
            let fs = Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z);
            let twist_b = Vector6::new(vb.x, vb.y, vb.z, wb.x, wb.y, wb.z);
            // Twists map with the transpose of the wrench map.
            let twist_s = g.transpose() * twist_b;
            let power_b = (g * fs).dot(&twist_b);
            let power_s = fs.dot(&twist_s);
            prop_assert!((power_b - power_s).abs() <= 1e-10 * (1.0 + power_b.abs()));
        }

        #[test]
        fn inverse_round_trip(r in rotation(), p in vec3(1.0), f in vec3(50.0), tau in vec3(10.0)) {
            let t = FrameTransform::new(p, r).unwrap();
            let w = Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z);
            let back = wrench_transform(&t.inverse()) * (wrench_transform(&t) * w);
            prop_assert!((back - w).amax() <= 1e-12 * (1.0 + w.amax()));
        }

        #[test]
        fn identity_transform_commutes_with_selection(f in vec3(50.0), tau in vec3(10.0)) {
            let w = Wrench6::new(f, tau, Frame::Sensor);
            let mut as_body = w;
            as_body.frame = Frame::Body;
            let via = select_planar(&FrameTransform::identity().apply(&w).unwrap()).unwrap();
            prop_assert_eq!(via, select_planar(&as_body).unwrap());
        }
    }
}

//! Variable-damping admittance law.
//!
//! The commanded body twist follows the virtual dynamics
//!
//! ```text
//! blockdiag(M_d, m_θ)·v̇ + ζ(P⁺)·blockdiag(D_1, d_θ)·v = Λ·F_b + (0, 0, τ_v)
//! ```
//!
//! where `P⁺ = max(0, vᵀΛF_b)` is the power the human feeds into the robot and
//! `ζ` drops from `ζ_max` towards `ζ_min` as that power grows. Guiding the
//! robot therefore feels light, while pushing against its motion meets the
//! full damping.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierParams, BarrierState};
use crate::error::{ControlError, FrameError};
use crate::planar::{select_planar, FrameTransform, PlanarTwist, PlanarWrench, Wrench6};
use crate::sensing::ChamberForces;
use crate::trace::SimTrace;

/// Positive violations below this are treated as floating-point noise when
/// comparing audits.
pub const AUDIT_NOISE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmittanceParams {
    /// Translational target inertia, kg. Row-major.
    pub m_d: [[f64; 2]; 2],
    /// Yaw target inertia, kg·m².
    pub m_theta: f64,
    /// Translational damping before scaling by `ζ`. Row-major.
    pub d1: [[f64; 2]; 2],
    pub d_theta: f64,
    pub zeta_min: f64,
    pub zeta_max: f64,
    /// Decay rate of `ζ` with transferred power, 1/W.
    pub lambda: f64,
    /// Control period, s.
    pub dt: f64,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self {
            m_d: [[13.0, 0.0], [0.0, 13.0]],
            m_theta: 1.5,
            d1: [[20.0, 0.0], [0.0, 20.0]],
            d_theta: 5.0,
            zeta_min: 0.1,
            zeta_max: 1.0,
            lambda: 3.0,
            dt: 0.002,
        }
    }
}

fn matrix(rows: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
}

fn check_spd(m: &[[f64; 2]; 2], path: &str, errs: &mut Vec<String>) {
    let mat = matrix(m);
    if !mat.iter().all(|v| v.is_finite()) {
        errs.push(format!("{path}: non-finite entry"));
    } else if (mat - mat.transpose()).amax() > 1e-12 * mat.amax().max(1.0) {
        errs.push(format!("{path}: not symmetric"));
    } else if mat.cholesky().is_none() {
        errs.push(format!("{path}: not positive definite"));
    }
}

impl AdmittanceParams {
    pub fn mass(&self) -> Matrix2<f64> {
        matrix(&self.m_d)
    }

    pub fn damping(&self) -> Matrix2<f64> {
        matrix(&self.d1)
    }

    pub fn validate(&self, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        check_spd(&self.m_d, &format!("{path}.m_d"), &mut errs);
        check_spd(&self.d1, &format!("{path}.d1"), &mut errs);
        for (name, v) in
            [("m_theta", self.m_theta), ("d_theta", self.d_theta), ("zeta_min", self.zeta_min), ("dt", self.dt)]
        {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{path}.{name}: must be finite and > 0, got {v}"));
            }
        }
        if !(self.zeta_max.is_finite() && self.zeta_max >= self.zeta_min) {
            errs.push(format!("{path}.zeta_max: must be >= zeta_min ({}), got {}", self.zeta_min, self.zeta_max));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            errs.push(format!("{path}.lambda: must be finite and >= 0, got {}", self.lambda));
        }
        errs
    }

    /// Kinetic part of the storage function, `½x₂ᵀM_d x₂ + ½m_θ x₃²`.
    pub fn kinetic_energy(&self, v: &PlanarTwist) -> f64 {
        let x2 = Vector2::new(v.vx, v.vy);
        0.5 * x2.dot(&(self.mass() * x2)) + 0.5 * self.m_theta * v.wz * v.wz
    }

    /// `¼uᵀD_d⁻¹u` for the damping `D_d = ζ·blockdiag(D_1, d_θ)`.
    pub fn supply_bound(&self, u: &PlanarWrench, zeta: f64) -> f64 {
        let u1 = Vector2::new(u.fx, u.fy);
        let d1_inv = self.damping().try_inverse().expect("D_1 validated positive definite");
        0.25 * (u1.dot(&(d1_inv * u1)) + u.tz * u.tz / self.d_theta) / zeta
    }
}

/// Admittance state: commanded twist `(x₂, x₃)`, integrated heading `x₁` and
/// the last diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub v_b: PlanarTwist,
    pub theta: f64,
    pub p_plus: f64,
    pub zeta: f64,
    pub l: f64,
}

impl ControllerState {
    pub fn at_rest(params: &AdmittanceParams) -> Self {
        Self { zeta: params.zeta_max, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub v_cmd: PlanarTwist,
    /// `Λ·Γ_bs·F_s`, the planar input that drove this step.
    pub u: PlanarWrench,
    pub wrench_b: Wrench6,
    pub barrier: BarrierState,
    pub p_plus: f64,
    pub zeta: f64,
    pub l: f64,
    /// `ΔKE − dt·(u + τ_v)·v̄` over the step; non-positive up to `O(dt³)`.
    pub passivity_residual: f64,
}

/// Power flowing from the human into the robot, clamped at zero.
pub fn transferred_power(v: &PlanarTwist, u: &PlanarWrench) -> f64 {
    v.power(u).max(0.0)
}

/// `ζ(P⁺) = ζ_min + (ζ_max − ζ_min)·exp(−λP⁺)`.
pub fn damping_factor(p_plus: f64, params: &AdmittanceParams) -> f64 {
    params.zeta_min + (params.zeta_max - params.zeta_min) * (-params.lambda * p_plus).exp()
}

/// Storage function `L = ½x₂ᵀM_d x₂ + ½m_θ x₃² + W`.
pub fn storage(v: &PlanarTwist, w: f64, params: &AdmittanceParams) -> f64 {
    params.kinetic_energy(v) + w
}

/// Advances the admittance law by one control period.
///
/// `wrench_s` is the held sensor-frame wrench and `chambers` the chamber forces
/// from the same pressure sample. With `guard_enabled` false the virtual
/// torque and potential are zero and only the margin is reported.
///
/// `ζ` is computed from the velocity at the start of the step. The velocity is
/// updated first and the heading is advanced with the new yaw rate.
pub fn controller_step(
    state: &ControllerState,
    wrench_s: &Wrench6,
    mount: &FrameTransform,
    params: &AdmittanceParams,
    barrier: &BarrierParams,
    guard_enabled: bool,
    chambers: &ChamberForces,
) -> Result<(ControllerState, StepOutput), ControlError> {
    if !wrench_s.is_finite() {
        return Err(FrameError::NonFinite("sensor wrench").into());
    }
    if !chambers.is_finite() {
        return Err(FrameError::NonFinite("chamber forces").into());
    }
    let wrench_b = mount.apply(wrench_s)?;
    let u = select_planar(&wrench_b)?;

    let p_plus = transferred_power(&state.v_b, &u);
    let zeta = damping_factor(p_plus, params);

    let guard = if guard_enabled {
        barrier::evaluate(chambers, barrier)?
    } else {
        BarrierState { f_m: barrier::margin(chambers, barrier), ..Default::default() }
    };

    let dt = params.dt;
    let v = state.v_b;
    let x2 = Vector2::new(v.vx, v.vy);
    let u1 = Vector2::new(u.fx, u.fy);
    let accel = params
        .mass()
        .cholesky()
        .ok_or_else(|| ControlError::InvalidParams("M_d is not positive definite".into()))?
        .solve(&(-zeta * (params.damping() * x2) + u1));
    let x2_next = x2 + dt * accel;
    let x3_next = v.wz + dt * (-zeta * params.d_theta * v.wz + guard.tau_v + u.tz) / params.m_theta;
    let v_next = PlanarTwist::new(x2_next.x, x2_next.y, x3_next);
    let theta_next = state.theta + dt * x3_next;

    let l = storage(&v_next, guard.w, params);
    let mid = PlanarTwist::new(0.5 * (v.vx + v_next.vx), 0.5 * (v.vy + v_next.vy), 0.5 * (v.wz + v_next.wz));
    let passivity_residual =
        params.kinetic_energy(&v_next) - params.kinetic_energy(&v) - dt * (mid.power(&u) + guard.tau_v * mid.wz);

    let next = ControllerState { v_b: v_next, theta: theta_next, p_plus, zeta, l };
    let out = StepOutput { v_cmd: v_next, u, wrench_b, barrier: guard, p_plus, zeta, l, passivity_residual };
    Ok((next, out))
}

/// Owned controller: parameters, sensor mount and state.
#[derive(Debug, Clone)]
pub struct AdmittanceController {
    pub params: AdmittanceParams,
    pub barrier: BarrierParams,
    pub guard_enabled: bool,
    pub mount: FrameTransform,
    pub state: ControllerState,
}

impl AdmittanceController {
    pub fn new(params: AdmittanceParams, barrier: BarrierParams, guard_enabled: bool, mount: FrameTransform) -> Self {
        Self { state: ControllerState::at_rest(&params), params, barrier, guard_enabled, mount }
    }

    /// Steps the law. On error the state is left untouched.
    pub fn step(&mut self, wrench_s: &Wrench6, chambers: &ChamberForces) -> Result<StepOutput, ControlError> {
        let (next, out) = controller_step(
            &self.state,
            wrench_s,
            &self.mount,
            &self.params,
            &self.barrier,
            self.guard_enabled,
            chambers,
        )?;
        self.state = next;
        Ok(out)
    }
}

/// Outcome of checking a trace against the passivity inequality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    /// Largest `ΔL − v̄ᵀu·dt` over single steps, J.
    pub worst_step: f64,
    /// Largest `L(t) − L₀ − ∫¼uᵀD_d⁻¹u dt`, J.
    pub worst_bound: f64,
    /// Maximum of the two above.
    pub worst: f64,
    /// Largest gap between the logged potential and the potential implied by
    /// the heading-only model `dW = −τ_v·dθ`. Informational.
    pub max_w_residual: f64,
    pub steps: usize,
}

impl AuditReport {
    /// Violation with floating-point noise clamped to zero.
    pub fn positive_violation(&self) -> f64 {
        if self.worst > AUDIT_NOISE_FLOOR {
            self.worst
        } else {
            0.0
        }
    }
}

/// Checks the discretized passivity inequality on a trace.
///
/// The storage is rebuilt as kinetic energy (`L − W` from the trace) plus a
/// potential that changes only through the heading, `ΔW = −τ_v·ω̄·dt`, which is
/// the assumption the passivity argument rests on. Supplied energy uses the
/// mid-step velocity, matching the trapezoidal energy integral.
///
/// Returns `None` for traces shorter than two rows.
pub fn passivity_audit(trace: &SimTrace, params: &AdmittanceParams) -> Option<AuditReport> {
    let rows = &trace.rows;
    if rows.len() < 2 {
        return None;
    }
    let kinetic = |k: usize| rows[k].l - rows[k].w;
    let mut w_model = rows[0].w;
    let l0 = kinetic(0) + w_model;
    let mut budget = 0.0;
    let mut report = AuditReport {
        worst_step: f64::NEG_INFINITY,
        worst_bound: f64::NEG_INFINITY,
        steps: rows.len() - 1,
        ..Default::default()
    };
    for k in 1..rows.len() {
        let (prev, cur) = (&rows[k - 1], &rows[k]);
        let dt = cur.t - prev.t;
        let mid = PlanarTwist::new(
            0.5 * (prev.v_cmd.vx + cur.v_cmd.vx),
            0.5 * (prev.v_cmd.vy + cur.v_cmd.vy),
            0.5 * (prev.v_cmd.wz + cur.v_cmd.wz),
        );
        let dw = -cur.tau_v * mid.wz * dt;
        let dl = kinetic(k) - kinetic(k - 1) + dw;
        let supply = mid.power(&cur.fb) * dt;
        report.worst_step = report.worst_step.max(dl - supply);

        w_model += dw;
        if cur.zeta > 0.0 {
            budget += params.supply_bound(&cur.fb, cur.zeta) * dt;
        }
        let l = kinetic(k) + w_model;
        report.worst_bound = report.worst_bound.max(l - l0 - budget);
        if cur.attached {
            report.max_w_residual = report.max_w_residual.max((cur.w - w_model).abs());
        }
    }
    report.worst = report.worst_step.max(report.worst_bound);
    Some(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planar::Frame;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn body_wrench(fx: f64, fy: f64, tz: f64) -> Wrench6 {
        // With the identity mount a sensor wrench maps unchanged onto {B}.
        Wrench6::new(Vector3::new(fx, fy, 0.0), Vector3::new(0.0, 0.0, tz), Frame::Sensor)
    }

    fn resting_chambers() -> ChamberForces {
        ChamberForces::uniform(-5.0)
    }

    #[test]
    fn power_examples() {
        let v = PlanarTwist::new(1.0, 0.0, 0.0);
        assert_eq!(transferred_power(&v, &PlanarWrench::new(-5.0, 0.0, 0.0)), 0.0);
        assert_eq!(transferred_power(&v, &PlanarWrench::new(5.0, 0.0, 0.0)), 5.0);
        let p = transferred_power(&PlanarTwist::new(0.3, 0.4, 0.1), &PlanarWrench::new(10.0, -5.0, 2.0));
        assert_abs_diff_eq!(p, 1.2, epsilon = 1e-14);
    }

    #[test]
    fn damping_factor_examples() {
        let p = AdmittanceParams::default();
        assert_eq!(damping_factor(0.0, &p), 1.0);
        assert_relative_eq!(damping_factor(1.0, &p), 0.1 + 0.9 * (-3.0f64).exp(), max_relative = 1e-15);
        assert_abs_diff_eq!(damping_factor(1.0, &p), 0.144808, epsilon = 1e-6);
        assert_abs_diff_eq!(damping_factor(1e6, &p), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), true, FrameTransform::identity());
        for _ in 0..1000 {
            let out = c.step(&body_wrench(0.0, 0.0, 0.0), &resting_chambers()).unwrap();
            assert_eq!(out.v_cmd, PlanarTwist::ZERO);
            assert_eq!(out.barrier.tau_v, 0.0);
        }
        assert_eq!(c.state.theta, 0.0);
    }

    #[test]
    fn free_decay_factor() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), false, FrameTransform::identity());
        c.state.v_b = PlanarTwist::new(0.5, 0.0, 0.0);
        let out = c.step(&body_wrench(0.0, 0.0, 0.0), &resting_chambers()).unwrap();
        // No input means P⁺ = 0 and ζ = ζ_max = 1.
        let factor = out.v_cmd.vx / 0.5;
        assert_relative_eq!(factor, 1.0 - 0.002 * 20.0 / 13.0, max_relative = 1e-14);
        assert_abs_diff_eq!(factor, 0.996923, epsilon = 1e-6);
    }

    /// ζ* solving ζ = ζ(F²/(ζ·D)), by bisection on the monotone residual.
    fn self_consistent_zeta(force: f64, d: f64, p: &AdmittanceParams) -> f64 {
        let residual = |z: f64| z - damping_factor(force * force / (z * d), p);
        let (mut lo, mut hi) = (p.zeta_min * 0.5, p.zeta_max * 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn constant_force_reaches_self_consistent_speed() {
        let p = AdmittanceParams { lambda: 0.2, ..Default::default() };
        let force = 4.0;
        let d = p.d1[0][0];
        let zeta = self_consistent_zeta(force, d, &p);
        assert!(zeta > p.zeta_min && zeta < p.zeta_max);
        let mut c = AdmittanceController::new(p, BarrierParams::default(), false, FrameTransform::identity());
        for _ in 0..200_000 {
            c.step(&body_wrench(force, 0.0, 0.0), &resting_chambers()).unwrap();
        }
        assert_relative_eq!(c.state.v_b.vx, force / (zeta * d), max_relative = 1e-8);
    }

    #[test]
    fn frozen_damping_matches_lti_solution_to_first_order() {
        let p = AdmittanceParams { zeta_min: 0.7, zeta_max: 0.7, ..Default::default() };
        let force = 10.0;
        let c_lin: f64 = 0.7 * 20.0;
        let horizon: f64 = 2.0;
        let exact = force / c_lin * (1.0 - (-c_lin * horizon / 13.0).exp());
        let error = |dt: f64| {
            let params = AdmittanceParams { dt, ..p };
            let mut c = AdmittanceController::new(params, BarrierParams::default(), false, FrameTransform::identity());
            let n = (horizon / dt).round() as usize;
            for _ in 0..n {
                c.step(&body_wrench(force, 0.0, 0.0), &resting_chambers()).unwrap();
            }
            (c.state.v_b.vx - exact).abs()
        };
        let coarse = error(0.002);
        let fine = error(0.001);
        assert!(coarse < 1e-3);
        assert!((coarse / fine - 2.0).abs() < 0.2, "ratio {}", coarse / fine);
    }

    #[test]
    fn kinetic_storage_decays_without_input() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), false, FrameTransform::identity());
        c.state.v_b = PlanarTwist::new(0.4, -0.2, 0.3);
        let mut last = p.kinetic_energy(&c.state.v_b);
        for _ in 0..2000 {
            let out = c.step(&body_wrench(0.0, 0.0, 0.0), &resting_chambers()).unwrap();
            assert!(out.l < last);
            assert!(out.passivity_residual <= 0.0);
            last = out.l;
        }
    }

    #[test]
    fn storage_examples() {
        let p = AdmittanceParams::default();
        assert_eq!(storage(&PlanarTwist::ZERO, 0.0, &p), 0.0);
        assert_abs_diff_eq!(storage(&PlanarTwist::new(1.0, 0.0, 0.0), 2.0, &p), 6.5 + 2.0, epsilon = 1e-14);
    }

    #[test]
    fn barrier_fault_propagates() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), true, FrameTransform::identity());
        let before = c.state;
        let err = c.step(&body_wrench(0.0, 0.0, 0.0), &ChamberForces::uniform(-60.0)).unwrap_err();
        assert!(matches!(err, ControlError::Detached(_)));
        assert_eq!(c.state, before);

        // The same forces with the guard off just report a negative margin.
        let mut c = AdmittanceController::new(p, BarrierParams::default(), false, FrameTransform::identity());
        let out = c.step(&body_wrench(0.0, 0.0, 0.0), &ChamberForces::uniform(-60.0)).unwrap();
        assert!(out.barrier.f_m < 0.0);
        assert_eq!(out.barrier.tau_v, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), false, FrameTransform::identity());
        let nan = body_wrench(f64::NAN, 0.0, 0.0);
        assert!(matches!(c.step(&nan, &resting_chambers()), Err(ControlError::Frame(_))));
        let mut body = body_wrench(1.0, 0.0, 0.0);
        body.frame = Frame::Body;
        assert!(matches!(c.step(&body, &resting_chambers()), Err(ControlError::Frame(FrameError::WrongFrame { .. }))));
    }

    #[test]
    fn guard_adds_torque_near_detachment() {
        let p = AdmittanceParams::default();
        let mut c = AdmittanceController::new(p, BarrierParams::default(), true, FrameTransform::identity());
        let out = c.step(&body_wrench(0.0, 0.0, 0.0), &ChamberForces::new([-20.0, -40.0, -40.0, -20.0])).unwrap();
        assert!(out.barrier.tau_v > 0.0);
        assert!(out.v_cmd.wz > 0.0);
        assert!(c.state.theta > 0.0);
    }

    #[test]
    fn params_validation_lists_paths() {
        assert!(AdmittanceParams::default().validate("controller").is_empty());
        let bad = AdmittanceParams { m_d: [[1.0, 2.0], [2.0, 1.0]], zeta_max: 0.05, dt: 0.0, ..Default::default() };
        let errs = bad.validate("controller");
        assert!(errs.iter().any(|e| e.starts_with("controller.m_d: not positive definite")));
        assert!(errs.iter().any(|e| e.starts_with("controller.zeta_max")));
        assert!(errs.iter().any(|e| e.starts_with("controller.dt")));
    }

    proptest! {
        #[test]
        fn zeta_bounded_and_monotone(a in 0.0..1e3f64, b in 0.0..1e3f64) {
            let p = AdmittanceParams::default();
            let (za, zb) = (damping_factor(a, &p), damping_factor(b, &p));
            prop_assert!((p.zeta_min..=p.zeta_max).contains(&za));
            if a < b {
                prop_assert!(za >= zb);
            }
        }

        #[test]
        fn zeta_strictly_decreasing_where_resolvable(a in 0.0..5.0f64, delta in 1e-3..1.0f64) {
            let p = AdmittanceParams::default();
            prop_assert!(damping_factor(a, &p) > damping_factor(a + delta, &p));
        }
    }
}

//! Desk-scale stand-in for the physical setup.
//!
//! * The robot body tracks the commanded twist through a first-order lag.
//! * A rigid object hangs on the suction cup and reaches forward to where a
//!   synthetic human holds it. The human pulls the grasp point towards a
//!   timed sequence of waypoints with a saturated spring-damper.
//! * The human's wrench reaches the cup quasi-statically. Its push/pull part
//!   is shared equally by the four chambers; its yaw torque twists the cup,
//!   and the twist loads the chambers differentially.
//! * The cup's pressures are synthesized from the chamber forces and read
//!   back through the sensor model at the sensor rate, then held for the
//!   control loop.
//!
//! The object is treated as massless and the twist does not feed back into
//! the grasp-point kinematics.

use log::{debug, warn};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::admittance::{AdmittanceController, StepOutput};
use crate::barrier::YAW_SIGN_PATTERN;
use crate::error::ControlError;
use crate::planar::{integrate_pose, Frame, FrameTransform, PlanarTwist, PlanarWrench, Pose2D, Wrench6};
use crate::sensing::{
    estimate_chamber_forces, synth_pressures, wrench_from_chambers, Calibration, ChamberForces, SampleHold,
    SensorGeometry, CHAMBERS,
};
use crate::trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Time constant of the body's velocity tracking, s. Zero tracks exactly.
    pub velocity_lag_tau: f64,
    /// Cup stiffness seen by the chambers, N/m.
    pub cup_kappa: f64,
    /// Chamber lever arm, m.
    pub cup_beta: f64,
    /// Chamber force with the object attached and unloaded, N.
    pub preload: f64,
    /// Chamber force below which the object lets go, N.
    pub detach_force: f64,
    /// Length of the rigid object from the cup face to the human's grasp, m.
    pub arm_length: f64,
    /// Standard deviation of additive chamber-force noise on each sensor read, N.
    pub force_noise_std: f64,
    /// Regulated vacuum pressure, sensor units.
    pub pv_nominal: f64,
    /// Standard deviation of the vacuum pressure around `pv_nominal`.
    pub pv_jitter_std: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            velocity_lag_tau: 0.05,
            cup_kappa: 200.0,
            cup_beta: 0.04,
            preload: -20.0,
            detach_force: -48.0,
            arm_length: 0.6,
            force_noise_std: 0.0,
            pv_nominal: 400.0,
            pv_jitter_std: 0.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("velocity_lag_tau", self.velocity_lag_tau),
            ("force_noise_std", self.force_noise_std),
            ("pv_jitter_std", self.pv_jitter_std),
            ("arm_length", self.arm_length),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{path}.{name}: must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("cup_kappa", self.cup_kappa), ("cup_beta", self.cup_beta)] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{path}.{name}: must be finite and > 0, got {v}"));
            }
        }
        if !self.pv_nominal.is_finite() {
            errs.push(format!("{path}.pv_nominal: must be finite"));
        }
        if !(self.detach_force.is_finite() && self.detach_force < 0.0) {
            errs.push(format!("{path}.detach_force: must be finite and < 0, got {}", self.detach_force));
        }
        if !(self.preload > self.detach_force && self.preload < 0.0) {
            errs.push(format!(
                "{path}.preload: must lie in (detach_force, 0) = ({}, 0), got {}",
                self.detach_force, self.preload
            ));
        }
        errs
    }

    /// Yaw stiffness of the cup, `4·κ·β²`, N·m/rad.
    pub fn twist_stiffness(&self) -> f64 {
        4.0 * self.cup_kappa * self.cup_beta * self.cup_beta
    }
}

/// Advances the robot body: first-order tracking of `v_cmd`, then the pose
/// with the updated velocity.
pub fn plant_step(
    pose: Pose2D,
    v_actual: PlanarTwist,
    v_cmd: PlanarTwist,
    params: &PlantParams,
    dt: f64,
) -> (Pose2D, PlanarTwist) {
    let v_next = if params.velocity_lag_tau > 0.0 {
        let k = (dt / params.velocity_lag_tau).min(1.0);
        PlanarTwist::new(
            v_actual.vx + k * (v_cmd.vx - v_actual.vx),
            v_actual.vy + k * (v_cmd.vy - v_actual.vy),
            v_actual.wz + k * (v_cmd.wz - v_actual.wz),
        )
    } else {
        v_cmd
    };
    (integrate_pose(pose, v_next, dt), v_next)
}

/// A timed target for the human's grasp point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Waypoint {
    fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.theta)
    }
}

/// Synthetic human: a saturated spring-damper pulling the grasp point along a
/// piecewise-linear schedule of waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanModel {
    pub waypoints: Vec<Waypoint>,
    /// `[N/m, N/m, N·m/rad]` along world x, world y and yaw.
    pub stiffness: [f64; 3],
    /// `[N·s/m, N·s/m, N·m·s/rad]`, acting on the velocity error.
    pub damping: [f64; 3],
    /// Per-component force saturation, N.
    pub max_force: f64,
    /// Yaw torque saturation, N·m.
    #[serde(default = "default_max_torque")]
    pub max_torque: f64,
}

fn default_max_torque() -> f64 {
    5.0
}

impl HumanModel {
    pub fn validate(&self, path: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if self.waypoints.is_empty() {
            errs.push(format!("{path}.waypoints: at least one waypoint is required"));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if ![w.t, w.x, w.y, w.theta].iter().all(|v| v.is_finite()) {
                errs.push(format!("{path}.waypoints[{i}]: non-finite value"));
            }
            if i > 0 && w.t.partial_cmp(&self.waypoints[i - 1].t) != Some(std::cmp::Ordering::Greater) {
                errs.push(format!("{path}.waypoints[{i}].t: times must be strictly increasing"));
            }
        }
        for (name, values) in [("stiffness", self.stiffness), ("damping", self.damping)] {
            for (k, v) in values.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    errs.push(format!("{path}.{name}[{k}]: must be finite and >= 0, got {v}"));
                }
            }
        }
        for (name, v) in [("max_force", self.max_force), ("max_torque", self.max_torque)] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{path}.{name}: must be finite and > 0, got {v}"));
            }
        }
        errs
    }

    /// Interpolated target pose and its world-frame velocity at time `t`.
    /// Before the first and after the last waypoint the target holds still.
    pub fn target(&self, t: f64) -> (Pose2D, PlanarTwist) {
        let w = &self.waypoints;
        if t <= w[0].t {
            return (w[0].pose(), PlanarTwist::ZERO);
        }
        let last = w[w.len() - 1];
        if t >= last.t {
            return (last.pose(), PlanarTwist::ZERO);
        }
        let k = w.partition_point(|p| p.t <= t);
        let (a, b) = (w[k - 1], w[k]);
        let span = b.t - a.t;
        let s = (t - a.t) / span;
        let lerp = |p: f64, q: f64| p + s * (q - p);
        (
            Pose2D::new(lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.theta, b.theta)),
            PlanarTwist::new((b.x - a.x) / span, (b.y - a.y) / span, (b.theta - a.theta) / span),
        )
    }

    pub fn goal(&self) -> Pose2D {
        self.waypoints[self.waypoints.len() - 1].pose()
    }
}

/// Force (world frame) and yaw torque applied by the human at the grasp point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HumanWrench {
    pub fx: f64,
    pub fy: f64,
    pub tz: f64,
}

/// Saturated spring-damper wrench towards the interpolated waypoint.
/// `object_velocity` is the grasp point's world velocity `(ẋ, ẏ, ψ̇)`.
pub fn human_force(t: f64, object_pose: &Pose2D, object_velocity: &PlanarTwist, model: &HumanModel) -> HumanWrench {
    let (goal, goal_vel) = model.target(t);
    let [kx, ky, kt] = model.stiffness;
    let [dx, dy, dt] = model.damping;
    let clip = |v: f64, limit: f64| v.clamp(-limit, limit);
    HumanWrench {
        fx: clip(kx * (goal.x - object_pose.x) + dx * (goal_vel.vx - object_velocity.vx), model.max_force),
        fy: clip(ky * (goal.y - object_pose.y) + dy * (goal_vel.vy - object_velocity.vy), model.max_force),
        tz: clip(kt * (goal.theta - object_pose.theta) + dt * (goal_vel.wz - object_velocity.wz), model.max_torque),
    }
}

/// Placement of the human's grasp relative to the cup, plus the cup's yaw
/// twist.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GraspOffset {
    /// Along the cup normal (body x), m.
    pub dx: f64,
    /// Across the cup (body y), m.
    pub dy: f64,
    /// Heading of the cup relative to the held object, rad. Positive values
    /// unload chambers 1 and 4.
    pub twist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub grasp_offset: GraspOffset,
    pub attached: bool,
}

impl ContactState {
    pub fn at_rest(params: &PlantParams) -> Self {
        Self { grasp_offset: GraspOffset { dx: params.arm_length, dy: 0.0, twist: 0.0 }, attached: true }
    }
}

/// The human's wrench moved to the cup centre.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CupLoad {
    /// Force along the cup normal, positive pushing the object into the cup, N.
    pub push: f64,
    /// Yaw torque about the cup centre, N·m.
    pub torque: f64,
}

/// Grasp-point pose in the world for a robot at `pose`.
pub fn grasp_pose(pose: &Pose2D, contact: &ContactState, mount: &FrameTransform) -> Pose2D {
    let p = mount.translation();
    let (x, y) = pose.transform_point(p.x + contact.grasp_offset.dx, p.y + contact.grasp_offset.dy);
    Pose2D::new(x, y, pose.theta)
}

/// World velocity of the grasp point for a body moving with `v`.
pub fn grasp_velocity(pose: &Pose2D, v: &PlanarTwist, grasp: &Pose2D) -> PlanarTwist {
    let (s, c) = pose.theta.sin_cos();
    let (vx, vy) = (c * v.vx - s * v.vy, s * v.vx + c * v.vy);
    let (rx, ry) = (grasp.x - pose.x, grasp.y - pose.y);
    PlanarTwist::new(vx - v.wz * ry, vy + v.wz * rx, v.wz)
}

pub fn cup_load(human: &HumanWrench, pose: &Pose2D, contact: &ContactState) -> CupLoad {
    let (fbx, fby) = pose.to_local(human.fx, human.fy);
    let GraspOffset { dx, dy, .. } = contact.grasp_offset;
    CupLoad { push: -fbx, torque: human.tz + dx * fby - dy * fbx }
}

/// Spring model of the cup.
///
/// Chamber forces are `preload + push/4 + κ·β·s_i·twist` with the sign pattern
/// `s = (−, +, +, −)`, using the twist carried in `contact`. The returned
/// contact holds the twist at which the cup balances `load.torque`. When the
/// weakest chamber drops to `detach_force` the returned contact is detached;
/// that call still reports the breaking forces and every later call reports
/// zero.
pub fn suction_contact(
    contact: &ContactState,
    load: &CupLoad,
    params: &PlantParams,
    geometry: &SensorGeometry,
    calibration: &Calibration,
) -> (ChamberForces, Wrench6, ContactState) {
    if !contact.attached {
        return (ChamberForces::default(), Wrench6::zero(Frame::Sensor), *contact);
    }
    let twist = contact.grasp_offset.twist;
    let f = ChamberForces::new(std::array::from_fn(|i| {
        params.preload + 0.25 * load.push + params.cup_kappa * params.cup_beta * YAW_SIGN_PATTERN[i] * twist
    }));
    let mut next = *contact;
    next.grasp_offset.twist = -load.torque / params.twist_stiffness();
    next.attached = f.min() > params.detach_force;
    let reading = synth_pressures(&f, params.pv_nominal, calibration, 0.0);
    let wrench = wrench_from_chambers(&estimate_chamber_forces(&reading, calibration), geometry);
    (f, wrench, next)
}

/// Sensor, mount and rate configuration shared by a world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub rate_hz: f64,
    pub geometry: SensorGeometry,
    pub calibration: Calibration,
    pub mount: FrameTransform,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            geometry: SensorGeometry::default(),
            calibration: Calibration::default(),
            mount: FrameTransform::front_mount(Vector3::new(0.25, 0.0, 0.1)),
        }
    }
}

/// What the control loop sees between sensor updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldSample {
    pub t: f64,
    /// Raw sensor-frame estimate.
    pub wrench: Wrench6,
    /// Estimate with the attached-at-rest reading subtracted.
    pub tared: Wrench6,
    pub chambers: ChamberForces,
}

impl HeldSample {
    fn detached(t: f64) -> Self {
        Self {
            t,
            wrench: Wrench6::zero(Frame::Sensor),
            tared: Wrench6::zero(Frame::Sensor),
            chambers: ChamberForces::default(),
        }
    }
}

/// One scenario's complete simulated state.
#[derive(Debug, Clone)]
pub struct World {
    pub tick: u64,
    pub pose: Pose2D,
    pub v_act: PlanarTwist,
    pub contact: ContactState,
    pub controller: AdmittanceController,
    pub plant: PlantParams,
    pub human: HumanModel,
    pub sensor: SensorConfig,
    hold: SampleHold<HeldSample>,
    tare: Wrench6,
    rng: ChaCha8Rng,
    energy: f64,
    last_power: f64,
    /// Time at which the object was lost, if it was.
    pub detached_at: Option<f64>,
    /// Set when the guard reported a non-positive margin.
    pub fault: Option<ControlError>,
    /// Lowest true chamber force seen while the object was held, N.
    pub min_contact_force: f64,
}

impl World {
    /// Errors if the control period does not divide the sensor period.
    pub fn new(
        controller: AdmittanceController,
        plant: PlantParams,
        human: HumanModel,
        sensor: SensorConfig,
        seed: u64,
    ) -> Result<Self, String> {
        let period = SampleHold::<HeldSample>::period_for(controller.params.dt, sensor.rate_hz).ok_or_else(|| {
            format!(
                "sensor period 1/{} s is not a whole number of control periods {} s",
                sensor.rate_hz, controller.params.dt
            )
        })?;
        let rest = ChamberForces::uniform(plant.preload);
        let tare = wrench_from_chambers(&rest, &sensor.geometry);
        Ok(Self {
            tick: 0,
            pose: Pose2D::default(),
            v_act: PlanarTwist::ZERO,
            contact: ContactState::at_rest(&plant),
            controller,
            plant,
            human,
            sensor,
            hold: SampleHold::new(period),
            tare,
            rng: ChaCha8Rng::seed_from_u64(seed),
            energy: 0.0,
            last_power: 0.0,
            detached_at: None,
            fault: None,
            min_contact_force: plant.preload,
        })
    }

    pub fn dt(&self) -> f64 {
        self.controller.params.dt
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn sensor_period_ticks(&self) -> usize {
        self.hold.period()
    }

    pub fn grasp(&self) -> Pose2D {
        grasp_pose(&self.pose, &self.contact, &self.sensor.mount)
    }

    /// Row describing the state before the first step.
    pub fn initial_row(&self) -> TraceRow {
        let chambers = ChamberForces::uniform(self.plant.preload);
        let state = crate::barrier::evaluate(&chambers, &self.controller.barrier).unwrap_or_default();
        let w = if self.controller.guard_enabled { state.w } else { 0.0 };
        TraceRow {
            t: self.time(),
            pose: self.pose,
            v_cmd: self.controller.state.v_b,
            v_act: self.v_act,
            fs: self.tare,
            fb: PlanarWrench::ZERO,
            f: chambers,
            fm: crate::barrier::margin(&chambers, &self.controller.barrier),
            w,
            tau_v: 0.0,
            p_plus: 0.0,
            zeta: self.controller.state.zeta,
            l: self.controller.params.kinetic_energy(&self.controller.state.v_b) + w,
            e: self.energy,
            attached: self.contact.attached,
        }
    }

    fn read_sensor(&mut self, truth: &ChamberForces, t: f64) -> HeldSample {
        if !self.contact.attached {
            return HeldSample::detached(t);
        }
        let mut noisy = *truth;
        if self.plant.force_noise_std > 0.0 {
            let n = Normal::new(0.0, self.plant.force_noise_std).expect("validated std");
            for f in noisy.f.iter_mut() {
                *f += n.sample(&mut self.rng);
            }
        }
        let mut pv = self.plant.pv_nominal;
        if self.plant.pv_jitter_std > 0.0 {
            pv += Normal::new(0.0, self.plant.pv_jitter_std).expect("validated std").sample(&mut self.rng);
        }
        let cal = &self.sensor.calibration;
        let reading = synth_pressures(&noisy, pv, cal, t);
        let chambers = estimate_chamber_forces(&reading, cal);
        let wrench = wrench_from_chambers(&chambers, &self.sensor.geometry);
        HeldSample { t, wrench, tared: wrench - self.tare, chambers }
    }

    fn mark_detached(&mut self, t: f64) {
        if self.detached_at.is_none() {
            warn!("object detached at t = {t:.3} s");
            self.detached_at = Some(t);
        }
        self.contact.attached = false;
    }

    /// One control tick: human → cup → (sensor sample) → controller → body.
    pub fn step(&mut self) -> TraceRow {
        let dt = self.dt();
        let t = self.time();

        let grasp = self.grasp();
        let human = if self.contact.attached {
            let vel = grasp_velocity(&self.pose, &self.v_act, &grasp);
            human_force(t, &grasp, &vel, &self.human)
        } else {
            HumanWrench::default()
        };
        let load = cup_load(&human, &self.pose, &self.contact);
        let (truth, _, next_contact) =
            suction_contact(&self.contact, &load, &self.plant, &self.sensor.geometry, &self.sensor.calibration);
        let was_attached = self.contact.attached;
        if was_attached {
            self.min_contact_force = self.min_contact_force.min(truth.min());
        }
        self.contact = next_contact;
        if was_attached && !self.contact.attached {
            self.mark_detached(t);
            self.hold.set(HeldSample::detached(t));
        }

        let due = self.hold.due();
        let sample = if due { self.read_sensor(&truth, t) } else { *self.hold.held().expect("held sample") };
        let held = *self.hold.tick(|| sample);

        let out = match self.controller.step(&held.tared, &held.chambers) {
            Ok(out) => out,
            Err(err) => {
                warn!("controller fault at t = {t:.3} s: {err}");
                self.fault.get_or_insert(err);
                self.mark_detached(t);
                let empty = HeldSample::detached(t);
                self.hold.set(empty);
                self.controller.step(&empty.tared, &empty.chambers).expect("zero input cannot fault the controller")
            }
        };
        let held = *self.hold.held().expect("held sample");

        let (pose, v_act) = plant_step(self.pose, self.v_act, out.v_cmd, &self.plant, dt);
        self.pose = pose;
        self.v_act = v_act;

        let power = out.v_cmd.power(&out.u);
        self.energy += 0.5 * dt * (self.last_power + power);
        self.last_power = power;
        self.tick += 1;
        if due {
            debug!("t = {t:.3}: sampled chambers {:?}", held.chambers.f);
        }
        row(self.time(), self, &held, &out)
    }
}

fn row(t: f64, world: &World, held: &HeldSample, out: &StepOutput) -> TraceRow {
    TraceRow {
        t,
        pose: world.pose,
        v_cmd: out.v_cmd,
        v_act: world.v_act,
        fs: held.wrench,
        fb: out.u,
        f: held.chambers,
        fm: out.barrier.f_m,
        w: out.barrier.w,
        tau_v: out.barrier.tau_v,
        p_plus: out.p_plus,
        zeta: out.zeta,
        l: out.l,
        e: world.energy,
        attached: world.contact.attached,
    }
}

/// Total chamber count, re-exported for callers sizing per-chamber buffers.
pub const CHAMBER_COUNT: usize = CHAMBERS;

//! Variable admittance control for a planar mobile robot that carries objects
//! with a four-chamber suction cup, with a barrier-potential guard against
//! detachment, plus a desk-scale simulator to exercise it.
//!
//! The layers, bottom up:
//!
//! * [`planar`]: frames, wrenches, twists and the sensor-to-body transform.
//! * [`sensing`]: chamber forces from pressures, calibration and sample-and-hold.
//! * [`barrier`]: the smooth margin, potential and virtual yaw torque.
//! * [`admittance`]: the power-dependent damping law and passivity audit.
//! * [`plant`]: robot body, suction cup and a synthetic human.
//! * [`scenario`], [`analysis`], [`plot`](mod@plot): configuration, runs and reports.
//!
//! ```
//! use quadmit::{run_scenario, Scenario};
//!
//! let mut scenario = Scenario::preset("translate_variable").unwrap();
//! scenario.duration = 1.0;
//! let run = run_scenario(&scenario, None).unwrap();
//! assert_eq!(run.trace.len(), 501);
//! assert!(!run.report.faulted);
//! ```

pub mod admittance;
pub mod analysis;
pub mod barrier;
pub mod error;
pub mod planar;
pub mod plant;
pub mod plot;
pub mod scenario;
pub mod sensing;
pub mod trace;

pub use admittance::{passivity_audit, AdmittanceController, AdmittanceParams, AuditReport, ControllerState};
pub use analysis::{compare_damping, run_batch, run_scenario, DampingComparison, RunOutcome, RunReport};
pub use barrier::BarrierParams;
pub use error::{CalibrationError, ConfigError, ControlError, DetachedFault, FrameError, IoError};
pub use planar::{Frame, FrameTransform, PlanarTwist, PlanarWrench, Pose2D, Wrench6};
pub use plant::{HumanModel, PlantParams, World};
pub use plot::{plot, PlotGroup};
pub use scenario::Scenario;
pub use sensing::{Calibration, ChamberForces, PressureSample, SensorGeometry};
pub use trace::{SimTrace, TraceRow};

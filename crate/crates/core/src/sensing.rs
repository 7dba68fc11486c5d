//! The four-chamber suction cup used as a force/torque sensor.
//!
//! Each chamber pressure, once the vacuum-dependent bias is removed, is
//! proportional to the normal force on that chamber:
//! `f_i = c·(p_i − (a_i·p_v + b_i))`. The four normal forces, placed at the
//! chamber positions, assemble into a wrench in the sensor frame.
//!
//! Pressures are opaque sensor units. Only `c` converts to newtons.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CalibrationError, IoError};
use crate::planar::{Frame, Wrench6};

pub const CHAMBERS: usize = 4;

/// Default chamber lever arm, metres.
pub const DEFAULT_BETA: f64 = 0.04;

/// One reading of the four chamber sensors and the vacuum cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub t: f64,
    p1: f64,
    p2: f64,
    p3: f64,
    p4: f64,
    pub pv: f64,
}

impl PressureSample {
    pub fn new(t: f64, p: [f64; CHAMBERS], pv: f64) -> Self {
        Self { t, p1: p[0], p2: p[1], p3: p[2], p4: p[3], pv }
    }

    pub fn p(&self) -> [f64; CHAMBERS] {
        [self.p1, self.p2, self.p3, self.p4]
    }

    pub fn is_finite(&self) -> bool {
        self.p().iter().all(|v| v.is_finite()) && self.pv.is_finite() && self.t.is_finite()
    }
}

/// Bias regression `h_i(p_v) = a_i·p_v + b_i` and the shared scale `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: [f64; CHAMBERS],
    pub b: [f64; CHAMBERS],
    pub c: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { a: [1.0; CHAMBERS], b: [0.0; CHAMBERS], c: 0.5 }
    }
}

impl Calibration {
    pub fn new(a: [f64; CHAMBERS], b: [f64; CHAMBERS], c: f64) -> Result<Self, CalibrationError> {
        let cal = Self { a, b, c };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !self.a.iter().chain(self.b.iter()).all(|v| v.is_finite()) || !self.c.is_finite() {
            return Err(CalibrationError::Invalid("non-finite coefficient".into()));
        }
        if self.c <= 0.0 {
            return Err(CalibrationError::Invalid(format!("scale c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// Expected no-load pressure of chamber `i` at vacuum pressure `pv`.
    pub fn bias(&self, i: usize, pv: f64) -> f64 {
        self.a[i] * pv + self.b[i]
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
        let cal: Self = serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })?;
        cal.validate().map_err(|e| IoError::Format { path: path.into(), message: e.to_string() })?;
        Ok(cal)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| IoError::Json { path: path.into(), source })?;
        std::fs::write(path, text + "\n").map_err(|source| IoError::Io { path: path.into(), source })
    }
}

/// Positions of the four pressure sensors in `{S}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct SensorGeometry {
    positions: [Vector3<f64>; CHAMBERS],
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    chamber_positions: [[f64; 3]; CHAMBERS],
}

impl TryFrom<RawGeometry> for SensorGeometry {
    type Error = CalibrationError;

    fn try_from(raw: RawGeometry) -> Result<Self, Self::Error> {
        SensorGeometry::new(raw.chamber_positions.map(Vector3::from))
    }
}

impl From<SensorGeometry> for RawGeometry {
    fn from(g: SensorGeometry) -> Self {
        RawGeometry { chamber_positions: g.positions.map(|p| p.into()) }
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::square(DEFAULT_BETA)
    }
}

impl SensorGeometry {
    /// Rejects coincident chambers and layouts whose centroid is off the origin
    /// (equal chamber forces must not produce a torque).
    pub fn new(positions: [Vector3<f64>; CHAMBERS]) -> Result<Self, CalibrationError> {
        if !positions.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(CalibrationError::Invalid("non-finite chamber position".into()));
        }
        let centroid: Vector3<f64> = positions.iter().sum();
        if centroid.amax() > 1e-9 {
            return Err(CalibrationError::Invalid(format!(
                "chamber positions must be symmetric about the origin, sum = {centroid:?}"
            )));
        }
        for i in 0..CHAMBERS {
            for j in i + 1..CHAMBERS {
                if (positions[i] - positions[j]).norm() <= 1e-9 {
                    return Err(CalibrationError::Invalid(format!("chambers {} and {} coincide", i + 1, j + 1)));
                }
            }
        }
        Ok(Self { positions })
    }

    /// Chambers at `(±β, ±β, 0)`: 1 = (+,+), 2 = (−,+), 3 = (−,−), 4 = (+,−).
    /// Chambers 1 and 4 share the `+x_S` side.
    pub fn square(beta: f64) -> Self {
        Self {
            positions: [
                Vector3::new(beta, beta, 0.0),
                Vector3::new(-beta, beta, 0.0),
                Vector3::new(-beta, -beta, 0.0),
                Vector3::new(beta, -beta, 0.0),
            ],
        }
    }

    pub fn positions(&self) -> &[Vector3<f64>; CHAMBERS] {
        &self.positions
    }
}

/// Normal forces `f_1..f_4` on the chambers, newtons. Positive pushes the
/// object into the cup, negative pulls it away.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChamberForces {
    pub f: [f64; CHAMBERS],
}

impl ChamberForces {
    pub fn new(f: [f64; CHAMBERS]) -> Self {
        Self { f }
    }

    pub fn uniform(value: f64) -> Self {
        Self { f: [value; CHAMBERS] }
    }

    pub fn min(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|v| v.is_finite())
    }
}

/// Force on one chamber from its pressure and the vacuum pressure.
pub fn chamber_force(p_i: f64, p_v: f64, a_i: f64, b_i: f64, c: f64) -> f64 {
    c * (p_i - (a_i * p_v + b_i))
}

pub fn estimate_chamber_forces(s: &PressureSample, cal: &Calibration) -> ChamberForces {
    let p = s.p();
    ChamberForces::new(std::array::from_fn(|i| chamber_force(p[i], s.pv, cal.a[i], cal.b[i], cal.c)))
}

/// Sum of the chamber normals placed at their positions:
/// force `(0, 0, Σf_i)`, torque `Σ p_i × (0, 0, f_i)`.
pub fn wrench_from_chambers(f: &ChamberForces, g: &SensorGeometry) -> Wrench6 {
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for (p, &fi) in g.positions.iter().zip(f.f.iter()) {
        let normal = Vector3::new(0.0, 0.0, fi);
        force += normal;
        torque += p.cross(&normal);
    }
    Wrench6::new(force, torque, Frame::Sensor)
}

pub fn estimate_wrench(s: &PressureSample, g: &SensorGeometry, cal: &Calibration) -> Wrench6 {
    wrench_from_chambers(&estimate_chamber_forces(s, cal), g)
}

/// Inverse of [`chamber_force`]: the pressures that would read as `f`.
pub fn synth_pressures(f: &ChamberForces, pv: f64, cal: &Calibration, t: f64) -> PressureSample {
    debug_assert!(cal.c > 0.0);
    PressureSample::new(t, std::array::from_fn(|i| f.f[i] / cal.c + cal.bias(i, pv)), pv)
}

/// Per-chamber ordinary least squares of `p_i` on `p_v` over no-load samples.
/// Returns `(a, b)`.
pub fn fit_bias(samples: &[PressureSample]) -> Result<([f64; CHAMBERS], [f64; CHAMBERS]), CalibrationError> {
    if samples.len() < 2 {
        return Err(CalibrationError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let n = samples.len() as f64;
    let pv_mean = samples.iter().map(|s| s.pv).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.pv - pv_mean).powi(2)).sum();
    let scale = samples.iter().map(|s| s.pv.abs()).fold(1.0, f64::max);
    if sxx.sqrt() <= 1e-9 * scale {
        return Err(CalibrationError::InsufficientExcitation);
    }
    let mut a = [0.0; CHAMBERS];
    let mut b = [0.0; CHAMBERS];
    for i in 0..CHAMBERS {
        let p_mean = samples.iter().map(|s| s.p()[i]).sum::<f64>() / n;
        let sxy: f64 = samples.iter().map(|s| (s.pv - pv_mean) * (s.p()[i] - p_mean)).sum();
        a[i] = sxy / sxx;
        b[i] = p_mean - a[i] * pv_mean;
    }
    Ok((a, b))
}

/// Least-squares scale `c` from samples taken with a known weight hanging on
/// the cup and shared equally by the chambers.
///
/// An attached load pulls on the cup, so the chamber forces it produces are
/// negative and sum to `-|weight|`. The sign of `weight` as passed is ignored.
pub fn fit_scale(
    samples: &[PressureSample],
    weight: f64,
    a: &[f64; CHAMBERS],
    b: &[f64; CHAMBERS],
) -> Result<f64, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::TooFewSamples { needed: 1, got: 0 });
    }
    let sums: Vec<f64> =
        samples.iter().map(|s| s.p().iter().enumerate().map(|(i, p)| p - (a[i] * s.pv + b[i])).sum()).collect();
    let ss: f64 = sums.iter().map(|s| s * s).sum();
    let scale = samples.iter().flat_map(|s| s.p()).map(f64::abs).fold(1.0, f64::max);
    if (ss / sums.len() as f64).sqrt() <= 1e-9 * scale {
        return Err(CalibrationError::DegenerateScale("bias-corrected pressure sum is zero for every sample".into()));
    }
    let target = -weight.abs();
    let c = target * sums.iter().sum::<f64>() / ss;
    if !(c.is_finite() && c > 0.0) {
        return Err(CalibrationError::DegenerateScale(format!(
            "fitted scale {c} is not positive; the load must pull on the cup (chamber pressures below bias)"
        )));
    }
    Ok(c)
}

/// Splits a pressure log into the no-load and loaded phases at `split`
/// (samples with `t < split` are no-load) and fits all coefficients.
pub fn calibrate(samples: &[PressureSample], split: f64, weight: f64) -> Result<Calibration, CalibrationError> {
    let (no_load, loaded): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.t < split);
    let (a, b) = fit_bias(&no_load)?;
    let c = fit_scale(&loaded, weight, &a, &b)?;
    Calibration::new(a, b, c)
}

/// Midpoint of the largest gap between consecutive timestamps. Calibration
/// logs pause while the load is attached.
pub fn largest_gap_split(samples: &[PressureSample]) -> Option<f64> {
    samples.windows(2).max_by(|l, r| (l[1].t - l[0].t).total_cmp(&(r[1].t - r[0].t))).map(|w| 0.5 * (w[0].t + w[1].t))
}

/// Reads a `t,p1,p2,p3,p4,pv` log. Timestamps must be non-decreasing.
pub fn read_pressure_log(path: &Path) -> Result<Vec<PressureSample>, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| IoError::Csv { path: path.into(), source })?;
    let headers = reader.headers().map_err(|source| IoError::Csv { path: path.into(), source })?.clone();
    let expected = ["t", "p1", "p2", "p3", "p4", "pv"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(IoError::Format {
            path: path.into(),
            message: format!(
                "expected header {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out: Vec<PressureSample> = Vec::new();
    for (line, record) in reader.deserialize().enumerate() {
        let s: PressureSample = record.map_err(|source| IoError::Csv { path: path.into(), source })?;
        if !s.is_finite() {
            return Err(IoError::Format { path: path.into(), message: format!("row {}: non-finite value", line + 1) });
        }
        if out.last().is_some_and(|prev| s.t < prev.t) {
            return Err(IoError::Format {
                path: path.into(),
                message: format!("row {}: timestamp goes backwards", line + 1),
            });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_pressure_log(path: &Path, samples: &[PressureSample]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|source| IoError::Csv { path: path.into(), source })?;
    for s in samples {
        w.serialize(s).map_err(|source| IoError::Csv { path: path.into(), source })?;
    }
    w.flush().map_err(|source| IoError::Io { path: path.into(), source })
}

/// Zero-order hold bridging a slow sensor stream into a fast control loop.
///
/// A fresh value is taken on the first tick and then every `period` ticks;
/// the ticks in between reuse it.
#[derive(Debug, Clone)]
pub struct SampleHold<T> {
    period: usize,
    tick: usize,
    held: Option<T>,
}

impl<T> SampleHold<T> {
    pub fn new(period: usize) -> Self {
        assert!(period > 0, "sample-and-hold period must be at least one tick");
        Self { period, tick: 0, held: None }
    }

    /// Number of control ticks per sensor sample for the given rates, if the
    /// ratio is an integer.
    pub fn period_for(control_dt: f64, sensor_rate_hz: f64) -> Option<usize> {
        let ratio = 1.0 / (sensor_rate_hz * control_dt);
        let rounded = ratio.round();
        ((ratio - rounded).abs() < 1e-6 && rounded >= 1.0).then_some(rounded as usize)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// True when the next call to [`tick`](Self::tick) will sample.
    pub fn due(&self) -> bool {
        self.tick.is_multiple_of(self.period)
    }

    pub fn tick(&mut self, sample: impl FnOnce() -> T) -> &T {
        if self.due() || self.held.is_none() {
            self.held = Some(sample());
        }
        self.tick += 1;
        self.held.as_ref().expect("held value present after sampling")
    }

    pub fn held(&self) -> Option<&T> {
        self.held.as_ref()
    }

    /// Replaces the held value without moving the sampling schedule.
    pub fn set(&mut self, value: T) {
        self.held = Some(value);
    }
}

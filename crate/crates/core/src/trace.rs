//! Per-tick simulation record and its CSV form.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::IoError;
use crate::planar::{Frame, PlanarTwist, PlanarWrench, Pose2D, Wrench6};
use crate::sensing::ChamberForces;

/// Column order of the trace CSV.
pub const HEADER: [&str; 31] = [
    "t", "x", "y", "theta", "vcmd_x", "vcmd_y", "vcmd_w", "vact_x", "vact_y", "vact_w", "fs_fx", "fs_fy", "fs_fz",
    "fs_tx", "fs_ty", "fs_tz", "fb_fx", "fb_fy", "fb_tz", "f1", "f2", "f3", "f4", "fm", "W", "tauv", "Pplus", "zeta",
    "L", "E", "attached",
];

/// One control tick.
///
/// `fs` is the held sensor-frame wrench as estimated from the pressures and
/// `fb` the planar input `Λ·Γ_bs·(F_s − tare)` the controller actually used.
/// `f` are the held chamber forces the guard saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub pose: Pose2D,
    pub v_cmd: PlanarTwist,
    pub v_act: PlanarTwist,
    pub fs: Wrench6,
    pub fb: PlanarWrench,
    pub f: ChamberForces,
    pub fm: f64,
    pub w: f64,
    pub tau_v: f64,
    pub p_plus: f64,
    pub zeta: f64,
    pub l: f64,
    pub e: f64,
    pub attached: bool,
}

impl TraceRow {
    fn to_values(self) -> [f64; 31] {
        [
            self.t,
            self.pose.x,
            self.pose.y,
            self.pose.theta,
            self.v_cmd.vx,
            self.v_cmd.vy,
            self.v_cmd.wz,
            self.v_act.vx,
            self.v_act.vy,
            self.v_act.wz,
            self.fs.force.x,
            self.fs.force.y,
            self.fs.force.z,
            self.fs.torque.x,
            self.fs.torque.y,
            self.fs.torque.z,
            self.fb.fx,
            self.fb.fy,
            self.fb.tz,
            self.f.f[0],
            self.f.f[1],
            self.f.f[2],
            self.f.f[3],
            self.fm,
            self.w,
            self.tau_v,
            self.p_plus,
            self.zeta,
            self.l,
            self.e,
            if self.attached { 1.0 } else { 0.0 },
        ]
    }

    fn from_values(v: &[f64; 31]) -> Self {
        Self {
            t: v[0],
            pose: Pose2D::new(v[1], v[2], v[3]),
            v_cmd: PlanarTwist::new(v[4], v[5], v[6]),
            v_act: PlanarTwist::new(v[7], v[8], v[9]),
            fs: Wrench6::new(Vector3::new(v[10], v[11], v[12]), Vector3::new(v[13], v[14], v[15]), Frame::Sensor),
            fb: PlanarWrench::new(v[16], v[17], v[18]),
            f: ChamberForces::new([v[19], v[20], v[21], v[22]]),
            fm: v[23],
            w: v[24],
            tau_v: v[25],
            p_plus: v[26],
            zeta: v[27],
            l: v[28],
            e: v[29],
            attached: v[30] != 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn duration(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Writes the trace as CSV. Floats use the shortest representation that
    /// parses back to the identical value.
    pub fn write_csv(&self, path: &Path) -> Result<(), IoError> {
        let csv_err = |source| IoError::Csv { path: path.into(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(HEADER).map_err(csv_err)?;
        for row in &self.rows {
            let values = row.to_values();
            let mut record: Vec<String> = values[..30].iter().map(|v| format!("{v:?}")).collect();
            record.push(if row.attached { "1" } else { "0" }.to_owned());
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|source| IoError::Io { path: path.into(), source })
    }

    pub fn read_csv(path: &Path) -> Result<Self, IoError> {
        let csv_err = |source| IoError::Csv { path: path.into(), source };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.iter().ne(HEADER) {
            return Err(IoError::Format {
                path: path.into(),
                message: format!("unexpected trace header; expected {}", HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let mut values = [0.0; 31];
            for (slot, field) in values.iter_mut().zip(record.iter()) {
                *slot = field.trim().parse().map_err(|e| IoError::Format {
                    path: path.into(),
                    message: format!("row {}: cannot parse {field:?}: {e}", line + 1),
                })?;
            }
            rows.push(TraceRow::from_values(&values));
        }
        Ok(Self { rows })
    }
}

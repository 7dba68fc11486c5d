//! Running scenarios and summarising their traces.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::admittance::{passivity_audit, AuditReport};
use crate::error::{ConfigError, IoError};
use crate::plant::{grasp_pose, ContactState};
use crate::scenario::Scenario;
use crate::trace::SimTrace;

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub guard_enabled: bool,
    pub steps: usize,
    /// Distance of the grasp point from the final waypoint at the end, m.
    pub final_goal_error: f64,
    /// `∫ vᵀu dt` over the run, J.
    pub total_energy: f64,
    pub min_margin: f64,
    /// Lowest held chamber force the controller saw, N.
    pub min_chamber_force: f64,
    /// Lowest true chamber force while attached, including the instant of
    /// detachment, N.
    pub min_contact_force: f64,
    /// `min_contact_force − detach_force`, floored at zero once the object has
    /// let go, N.
    pub contact_margin: f64,
    pub peak_virtual_torque: f64,
    pub detached_at: Option<f64>,
    /// Detachment with the guard enabled.
    pub faulted: bool,
    pub zero_crossings: usize,
    pub completion_time: Option<f64>,
    pub audit: AuditReport,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub trace: SimTrace,
    pub report: RunReport,
}

/// Simulates `scenario` for its full duration. `seed` overrides the
/// scenario's own.
pub fn run_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<RunOutcome, ConfigError> {
    let started = Instant::now();
    let mut world = scenario.world(seed)?;
    let steps = scenario.steps();
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(world.initial_row());
    for _ in 0..steps {
        rows.push(world.step());
    }
    let trace = SimTrace { rows };
    let wall_time_s = started.elapsed().as_secs_f64();

    let distances = goal_distances(&trace, scenario);
    let m = &scenario.metrics;
    let audit = passivity_audit(&trace, &scenario.controller).unwrap_or_default();
    let report = RunReport {
        name: scenario.name.clone(),
        seed: seed.unwrap_or(scenario.seed),
        guard_enabled: scenario.barrier.enabled,
        steps,
        final_goal_error: distances.last().copied().unwrap_or(f64::NAN),
        total_energy: cumulative_energy(&trace),
        min_margin: trace.rows.iter().filter(|r| r.attached).map(|r| r.fm).fold(f64::INFINITY, f64::min),
        min_chamber_force: trace.rows.iter().filter(|r| r.attached).map(|r| r.f.min()).fold(f64::INFINITY, f64::min),
        min_contact_force: world.min_contact_force,
        contact_margin: (world.min_contact_force - scenario.plant.detach_force).max(0.0),
        peak_virtual_torque: trace.rows.iter().map(|r| r.tau_v.abs()).fold(0.0, f64::max),
        detached_at: world.detached_at,
        faulted: scenario.barrier.enabled && world.detached_at.is_some(),
        zero_crossings: zero_crossings_after_approach(&trace, &distances, m.goal_tolerance, m.velocity_deadband),
        completion_time: completion_time(&trace, &distances, m.goal_tolerance),
        audit,
        wall_time_s,
    };
    info!(
        "{}: E = {:.3} J, min f_m = {:.3}, detached = {:?}",
        report.name, report.total_energy, report.min_margin, report.detached_at
    );
    Ok(RunOutcome { scenario: scenario.clone(), trace, report })
}

/// Trapezoidal `∫ v_cmdᵀu dt` over the trace.
pub fn cumulative_energy(trace: &SimTrace) -> f64 {
    trace
        .rows
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].v_cmd.power(&w[0].fb) + w[1].v_cmd.power(&w[1].fb)))
        .sum()
}

/// Distance from the grasp point to the final waypoint at every row.
pub fn goal_distances(trace: &SimTrace, scenario: &Scenario) -> Vec<f64> {
    let goal = scenario.human.goal();
    let contact = ContactState::at_rest(&scenario.plant);
    trace
        .rows
        .iter()
        .map(|r| {
            let g = grasp_pose(&r.pose, &contact, &scenario.sensor.mount);
            (g.x - goal.x).hypot(g.y - goal.y)
        })
        .collect()
}

/// Sign changes of a signal, ignoring values inside `±deadband`.
pub fn zero_crossings(values: impl IntoIterator<Item = f64>, deadband: f64) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for v in values {
        if v.abs() <= deadband {
            continue;
        }
        let s = v.signum();
        if last != 0.0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

/// Sign changes of the commanded forward speed from the first time the grasp
/// point comes within `tolerance` of the goal.
pub fn zero_crossings_after_approach(trace: &SimTrace, distances: &[f64], tolerance: f64, deadband: f64) -> usize {
    match distances.iter().position(|d| *d <= tolerance) {
        Some(start) => zero_crossings(trace.rows[start..].iter().map(|r| r.v_cmd.vx), deadband),
        None => 0,
    }
}

/// Time after which the grasp point stays within `tolerance` of the goal.
pub fn completion_time(trace: &SimTrace, distances: &[f64], tolerance: f64) -> Option<f64> {
    if *distances.last()? > tolerance {
        return None;
    }
    let last_outside = distances.iter().rposition(|d| *d > tolerance);
    let first_inside = last_outside.map_or(0, |i| i + 1);
    Some(trace.rows[first_inside].t)
}

/// Result of running constant-low, constant-high and power-dependent damping
/// on otherwise identical scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingComparison {
    pub low: RunReport,
    pub high: RunReport,
    pub variable: RunReport,
    /// `E_high / E_variable`.
    pub energy_ratio_high_variable: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("expected exactly one scenario with {0}")]
    Missing(&'static str),
    #[error("scenarios differ in more than damping: {0}")]
    NotComparable(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn without_damping(s: &Scenario) -> Value {
    let mut v = serde_json::to_value(s).expect("scenario serializes");
    for key in ["name", "description"] {
        v.as_object_mut().expect("object").remove(key);
    }
    let ctrl = v["controller"].as_object_mut().expect("controller object");
    for key in ["zeta_min", "zeta_max", "lambda"] {
        ctrl.remove(key);
    }
    v
}

/// Runs the three damping regimes.
///
/// Scenarios with `zeta_min == zeta_max` are constant; the smaller constant is
/// `low` and the larger `high`. The one with `zeta_min < zeta_max` is
/// `variable`. All other settings must match.
pub fn compare_damping(scenarios: &[Scenario]) -> Result<DampingComparison, CompareError> {
    let constant: Vec<&Scenario> =
        scenarios.iter().filter(|s| s.controller.zeta_min == s.controller.zeta_max).collect();
    let variable: Vec<&Scenario> = scenarios.iter().filter(|s| s.controller.zeta_min < s.controller.zeta_max).collect();
    if constant.len() != 2 {
        return Err(CompareError::Missing("constant damping (two required)"));
    }
    if variable.len() != 1 {
        return Err(CompareError::Missing("power-dependent damping"));
    }
    let (low, high) = if constant[0].controller.zeta_min < constant[1].controller.zeta_min {
        (constant[0], constant[1])
    } else {
        (constant[1], constant[0])
    };
    let variable = variable[0];
    let reference = without_damping(variable);
    for s in [low, high] {
        if without_damping(s) != reference {
            return Err(CompareError::NotComparable(format!("{} vs {}", s.name, variable.name)));
        }
    }
    let runs: Vec<Result<RunOutcome, ConfigError>> =
        [low, high, variable].par_iter().map(|s| run_scenario(s, None)).collect();
    let mut reports = Vec::with_capacity(3);
    for r in runs {
        reports.push(r?.report);
    }
    let variable = reports.pop().expect("three runs");
    let high = reports.pop().expect("three runs");
    let low = reports.pop().expect("three runs");
    Ok(DampingComparison { energy_ratio_high_variable: high.total_energy / variable.total_energy, low, high, variable })
}

/// Scenario files in `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let read = std::fs::read_dir(dir).map_err(|source| IoError::Io { path: dir.into(), source })?;
    let mut files: Vec<PathBuf> =
        read.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    files.sort();
    Ok(files)
}

/// One scenario file and what became of it.
pub type BatchEntry = (PathBuf, Result<RunOutcome, IoError>);

/// Loads and runs every scenario in `dir` in parallel.
pub fn run_batch(dir: &Path) -> Result<Vec<BatchEntry>, IoError> {
    let files = scenario_files(dir)?;
    Ok(files
        .into_par_iter()
        .map(|path| {
            let outcome = Scenario::load(&path).and_then(|s| Ok(run_scenario(&s, None)?));
            (path, outcome)
        })
        .collect())
}

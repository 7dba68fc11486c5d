//! Scenario files: everything needed to reproduce one simulated run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::admittance::{AdmittanceController, AdmittanceParams};
use crate::barrier::BarrierParams;
use crate::error::{ConfigError, IoError};
use crate::plant::{HumanModel, PlantParams, SensorConfig, World};
use crate::sensing::SampleHold;

/// Names of the bundled scenarios.
pub const PRESET_NAMES: [&str; 5] =
    ["arc90_bap_on", "arc90_bap_off", "translate_low", "translate_high", "translate_variable"];

const PRESETS: [(&str, &str); 5] = [
    ("arc90_bap_on", include_str!("../presets/arc90_bap_on.json")),
    ("arc90_bap_off", include_str!("../presets/arc90_bap_off.json")),
    ("translate_low", include_str!("../presets/translate_low.json")),
    ("translate_high", include_str!("../presets/translate_high.json")),
    ("translate_variable", include_str!("../presets/translate_variable.json")),
];

/// Barrier gains plus the switch that turns the guard on.
///
/// In JSON the switch sits next to the gains: `{"enabled": true, "k1": 10, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Map<String, Value>", into = "Map<String, Value>")]
pub struct BarrierConfig {
    pub enabled: bool,
    pub params: BarrierParams,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { enabled: true, params: BarrierParams::default() }
    }
}

impl TryFrom<Map<String, Value>> for BarrierConfig {
    type Error = String;

    fn try_from(mut map: Map<String, Value>) -> Result<Self, String> {
        let enabled = match map.remove("enabled") {
            None => true,
            Some(Value::Bool(b)) => b,
            Some(other) => return Err(format!("enabled: expected a boolean, found {other}")),
        };
        let params = serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(Self { enabled, params })
    }
}

impl From<BarrierConfig> for Map<String, Value> {
    fn from(c: BarrierConfig) -> Self {
        let mut map = match serde_json::to_value(c.params) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("barrier parameters serialize to an object"),
        };
        map.insert("enabled".into(), Value::Bool(c.enabled));
        map
    }
}

/// Thresholds used when summarising a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Distance from the final waypoint that counts as arrived, m.
    pub goal_tolerance: f64,
    /// Commanded speeds below this do not count towards sign changes, m/s.
    pub velocity_deadband: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { goal_tolerance: 0.03, velocity_deadband: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub controller: AdmittanceParams,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub plant: PlantParams,
    pub human: HumanModel,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl Scenario {
    /// Parses and validates a scenario. Parse errors carry the JSON path of
    /// the offending field.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError(vec![if path == "." { inner.to_string() } else { format!("{path}: {inner}") }])
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.into(), source })?;
        Ok(Self::from_json(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| IoError::Json { path: path.into(), source })?;
        std::fs::write(path, text + "\n").map_err(|source| IoError::Io { path: path.into(), source })
    }

    /// A bundled scenario by name.
    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled presets are valid"))
    }

    pub fn presets() -> Vec<Self> {
        PRESET_NAMES.iter().map(|n| Self::preset(n).expect("listed preset exists")).collect()
    }

    /// Lists every problem at once, each prefixed with its field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name: must not be empty".to_owned());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            errs.push(format!("duration: must be finite and > 0, got {}", self.duration));
        }
        errs.extend(self.controller.validate("controller"));
        errs.extend(self.barrier.params.validate("barrier"));
        errs.extend(self.plant.validate("plant"));
        errs.extend(self.human.validate("human"));
        if let Err(e) = self.sensor.calibration.validate() {
            errs.push(format!("sensor.calibration: {e}"));
        }
        if !(self.sensor.rate_hz.is_finite() && self.sensor.rate_hz > 0.0) {
            errs.push(format!("sensor.rate_hz: must be finite and > 0, got {}", self.sensor.rate_hz));
        } else if self.controller.dt > 0.0
            && SampleHold::<()>::period_for(self.controller.dt, self.sensor.rate_hz).is_none()
        {
            errs.push(format!(
                "sensor.rate_hz: sensor period must be a whole number of control periods (dt = {})",
                self.controller.dt
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }

    /// Number of control ticks covering `duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.controller.dt).round() as usize
    }

    /// Builds the initial world for this scenario, with `seed` overriding the
    /// scenario's own.
    pub fn world(&self, seed: Option<u64>) -> Result<World, ConfigError> {
        self.validate()?;
        let controller =
            AdmittanceController::new(self.controller, self.barrier.params, self.barrier.enabled, self.sensor.mount);
        World::new(controller, self.plant, self.human.clone(), self.sensor, seed.unwrap_or(self.seed))
            .map_err(|e| ConfigError(vec![format!("sensor.rate_hz: {e}")]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Value {
        serde_json::json!({
            "name": "t",
            "duration": 1.0,
            "human": {
                "waypoints": [{"t": 0.0, "x": 0.85, "y": 0.0, "theta": 0.0}],
                "stiffness": [10.0, 10.0, 1.0],
                "damping": [1.0, 1.0, 0.1],
                "max_force": 20.0
            }
        })
    }

    #[test]
    fn presets_load_and_validate() {
        for name in PRESET_NAMES {
            let s = Scenario::preset(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(Scenario::preset("nope").is_none());
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let s = Scenario::from_json(&minimal().to_string()).unwrap();
        assert_eq!(s.controller, AdmittanceParams::default());
        assert!(s.barrier.enabled);
        assert_eq!(s.steps(), 500);
    }

    #[test]
    fn barrier_switch_lives_beside_gains() {
        let mut v = minimal();
        v["barrier"] = serde_json::json!({"enabled": false, "k1": 5.0});
        let s = Scenario::from_json(&v.to_string()).unwrap();
        assert!(!s.barrier.enabled);
        assert_eq!(s.barrier.params.k1, 5.0);
        let back: Value = serde_json::to_value(s.barrier).unwrap();
        assert_eq!(back["enabled"], Value::Bool(false));
    }

    #[test]
    fn validation_lists_every_field_path() {
        let mut v = minimal();
        v["duration"] = serde_json::json!(-1.0);
        v["controller"] = serde_json::json!({"zeta_min": 2.0, "zeta_max": 1.0, "dt": 0.003});
        v["plant"] = serde_json::json!({"preload": -60.0});
        v["human"]["max_force"] = serde_json::json!(0.0);
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        let text = err.0.join("\n");
        for needle in ["duration", "controller.zeta_max", "plant.preload", "human.max_force", "sensor.rate_hz"] {
            assert!(text.contains(needle), "missing {needle} in {text}");
        }
    }

    #[test]
    fn parse_errors_name_the_field() {
        let mut v = minimal();
        v["controller"] = serde_json::json!({"zeta_mni": 0.1});
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.0[0].starts_with("controller"), "{:?}", err.0);
        assert!(err.0[0].contains("zeta_mni"));
    }

    #[test]
    fn save_load_round_trip() {
        let s = Scenario::preset("translate_variable").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        s.save(&path).unwrap();
        assert_eq!(Scenario::load(&path).unwrap(), s);
    }
}

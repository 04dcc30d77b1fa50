//! Deterministic discrete-time digital twin.
//!
//! A [`Scenario`] bundles a UDCP topology, a cooling plant, a workload
//! pattern and fault injections. [`run_scenario`] drives the whole loop each
//! tick: workload → rack power and heat → coolant loops → telemetry into
//! the graph → rules, causal tracing and controller → actions that shape
//! the following ticks.

mod engine;
mod report;
mod workload;

use serde::{Deserialize, Serialize};

use crate::energetics::EnergeticsConfig;
use crate::graph::GraphError;
use crate::reasoning::Rule;
use crate::udcp::{ParseError, Violation};

pub use engine::{run_scenario, run_scenario_with_seed};
pub use report::{
    export_report, import_report, ExportError, ReportExport, SimAction, SimAnomaly, SimReport,
    SimSummary, TickSample, CSV_HEADER,
};
pub use workload::{generate_workload, WorkloadKind, WorkloadPattern};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("topology document {index} is malformed: {source}")]
    TopologyParse { index: usize, source: ParseError },
    #[error("topology document {index} rejected: {}", summarize(.violations))]
    TopologyRejected {
        index: usize,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("scenario references unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("{} at {}", v.code, v.path))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FaultEffect {
    /// Multiply the pump's delivered flow by `factor` from this tick on.
    PumpFlowScale { factor: f64 },
    /// Add `delta` to a synthetic telemetry attribute from this tick on.
    StateOffset { attr: String, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub tick: u64,
    pub node_id: String,
    pub effect: FaultEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub id: String,
    pub pump: String,
    pub nominal_flow_lpm: f64,
    pub pump_power_kw: f64,
    pub racks: Vec<String>,
    #[serde(default)]
    pub adjacent: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Rack draw at 100 % utilization.
    pub rack_peak_kw: f64,
    /// Idle floor as a fraction of peak.
    pub idle_frac: f64,
    pub supply_temp_c: f64,
    /// Rack outlet temperature above which a tick counts as downtime.
    pub temp_limit_c: f64,
    /// First-order response per tick of loop ΔT towards steady state.
    pub thermal_alpha: f64,
    /// Heat-rejection energy per kW of heat.
    pub heat_rejection_frac: f64,
    pub distribution_loss_frac: f64,
    pub carbon_kg_per_it_kwh: f64,
    pub heat_reuse_frac: f64,
    pub cp_j_per_kg_k: f64,
    pub density_kg_per_l: f64,
    pub vibration_baseline_mm_s: f64,
    pub vibration_noise_mm_s: f64,
    /// Upper bound on any pump's speed factor.
    pub max_pump_speed: f64,
    pub loops: Vec<LoopConfig>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            rack_peak_kw: 46.8,
            idle_frac: 0.3,
            supply_temp_c: 27.0,
            temp_limit_c: 65.0,
            thermal_alpha: 0.3,
            heat_rejection_frac: 0.07,
            distribution_loss_frac: 0.03,
            carbon_kg_per_it_kwh: 0.36,
            heat_reuse_frac: 0.2,
            cp_j_per_kg_k: crate::energetics::WATER_CP,
            density_kg_per_l: 1.0,
            vibration_baseline_mm_s: 2.0,
            vibration_noise_mm_s: 0.2,
            max_pump_speed: 1.6,
            loops: Vec::new(),
        }
    }
}

/// Automatic load shedding when causal tracing blames a pump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflexConfig {
    pub enabled: bool,
    pub redistribute_kw: f64,
}

impl Default for ReflexConfig {
    fn default() -> Self {
        ReflexConfig {
            enabled: true,
            redistribute_kw: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub enabled: bool,
    pub window_ticks: u64,
    pub interval_ticks: u64,
    /// Pump speed factor applied while a predicted surge is under way.
    pub boost: f64,
    #[serde(flatten)]
    pub energetics: EnergeticsConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            enabled: true,
            window_ticks: 180,
            interval_ticks: 10,
            boost: 1.2,
            energetics: EnergeticsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_ticks: u64,
    #[serde(default = "one_second")]
    pub tick_s: f64,
    /// UDCP documents applied in order before the first tick.
    #[serde(default)]
    pub topology: Vec<serde_json::Value>,
    pub workload: WorkloadPattern,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub reflex: ReflexConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    /// Evaluated alongside the built-in rules.
    #[serde(default)]
    pub rules: Vec<Rule>,
}

fn one_second() -> f64 {
    1.0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.duration_ticks < 1 {
            return Err(SimError::InvalidScenario(
                "duration_ticks must be at least 1".into(),
            ));
        }
        if !(self.tick_s.is_finite() && self.tick_s > 0.0) {
            return Err(SimError::InvalidScenario("tick_s must be positive".into()));
        }
        self.workload.validate()?;
        for r in &self.rules {
            r.validate()
                .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        }
        let p = &self.plant;
        if !(0.0..=1.0).contains(&p.idle_frac) || !(p.thermal_alpha > 0.0 && p.thermal_alpha <= 1.0)
        {
            return Err(SimError::InvalidScenario(
                "idle_frac must be in [0,1] and thermal_alpha in (0,1]".into(),
            ));
        }
        for l in &p.loops {
            if l.nominal_flow_lpm.is_nan() || l.nominal_flow_lpm <= 0.0 || l.pump_power_kw < 0.0 {
                return Err(SimError::InvalidScenario(format!(
                    "loop `{}` needs positive nominal flow",
                    l.id
                )));
            }
        }
        for f in &self.faults {
            if let FaultEffect::PumpFlowScale { factor } = f.effect {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(SimError::InvalidScenario(format!(
                        "flow factor {factor} outside (0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The same scenario with the predictive controller and the reflex
    /// switched off, for replaying what would have happened unattended.
    pub fn without_actions(&self) -> Scenario {
        let mut s = self.clone();
        s.controller.enabled = false;
        s.reflex.enabled = false;
        s
    }
}

pub const BUILTIN_SCENARIOS: [&str; 2] = ["pump-failure", "case-study-hall"];

/// One of the scenarios shipped with the library.
pub fn builtin_scenario(name: &str) -> Result<Scenario, SimError> {
    let text = match name {
        "pump-failure" => include_str!("../../scenarios/pump-failure.json"),
        "case-study-hall" => include_str!("../../scenarios/case-study-hall.json"),
        other => return Err(SimError::UnknownScenario(other.to_string())),
    };
    Scenario::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_parse() {
        for name in BUILTIN_SCENARIOS {
            let s = builtin_scenario(name).unwrap();
            assert_eq!(s.name, name);
            assert_eq!(s.plant.loops.len(), 4);
        }
        assert!(matches!(
            builtin_scenario("nope"),
            Err(SimError::UnknownScenario(_))
        ));
    }

    #[test]
    fn without_actions_disables_both() {
        let s = builtin_scenario("pump-failure").unwrap().without_actions();
        assert!(!s.controller.enabled && !s.reflex.enabled);
    }

    #[test]
    fn zero_duration_rejected() {
        let text = r#"{"name":"x","duration_ticks":0,"workload":{"kind":"constant","low":0}}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(SimError::InvalidScenario(_))
        ));
    }
}

//! Power, heat, airflow, coolant and efficiency arithmetic, plus the
//! predictive pump controller and grid/consolidation policies.

mod control;

use serde::{Deserialize, Serialize};

pub use control::{
    autocorrelation, policy_actions, predictive_control_step, ActionKind, ControlAction,
    PolicyState, TelemetryWindow,
};

/// kBTU/h per kW of heat.
pub const KBTU_PER_KW: f64 = 3.412;
/// kBTU/h per ton of cooling.
pub const KBTU_PER_TON: f64 = 12.0;
/// Airflow per kW of rack load.
pub const CFM_PER_KW: f64 = 100.0;
/// Specific heat of water, J/kg·K.
pub const WATER_CP: f64 = 4186.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergeticsError {
    #[error("coolant temperature difference must be positive")]
    ZeroDeltaT,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Operator-tunable constants, loadable from a JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergeticsConfig {
    pub lead_s: f64,
    pub surge_threshold: f64,
    pub cp_j_per_kg_k: f64,
    pub freq_floor_hz: f64,
    pub consolidation_util: f64,
    pub chilled_water_step_c: f64,
    pub consolidation_savings_frac: f64,
    pub overhead_frac: f64,
}

impl Default for EnergeticsConfig {
    fn default() -> Self {
        EnergeticsConfig {
            lead_s: 5.0,
            surge_threshold: 0.6,
            cp_j_per_kg_k: WATER_CP,
            freq_floor_hz: 59.9,
            consolidation_util: 0.40,
            chilled_water_step_c: 2.0,
            consolidation_savings_frac: 0.05,
            overhead_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RackPowerModel {
    pub gpus_per_server: u32,
    pub gpu_tdp_w: f64,
    pub servers: u32,
    /// CPUs, memory and auxiliaries as a fraction of GPU load.
    pub overhead_frac: f64,
}

impl RackPowerModel {
    pub fn new(gpus_per_server: u32, gpu_tdp_w: f64, servers: u32, overhead_frac: f64) -> Self {
        RackPowerModel {
            gpus_per_server,
            gpu_tdp_w,
            servers,
            overhead_frac,
        }
    }

    pub fn validate(&self) -> Result<(), EnergeticsError> {
        if !(self.gpu_tdp_w.is_finite() && self.gpu_tdp_w >= 0.0) {
            return Err(EnergeticsError::InvalidInput(format!(
                "gpu_tdp_w = {}",
                self.gpu_tdp_w
            )));
        }
        if !(0.0..=0.5).contains(&self.overhead_frac) {
            return Err(EnergeticsError::InvalidInput(format!(
                "overhead_frac = {}",
                self.overhead_frac
            )));
        }
        Ok(())
    }
}

pub fn rack_power_kw(m: &RackPowerModel) -> f64 {
    f64::from(m.gpus_per_server) * m.gpu_tdp_w * f64::from(m.servers) * (1.0 + m.overhead_frac)
        / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatOutput {
    pub kbtu_per_hr: f64,
    pub cooling_tons: f64,
}

/// Electrical load converted to heat rejection and cooling tonnage.
pub fn heat_output(kw: f64) -> HeatOutput {
    let kbtu_per_hr = kw * KBTU_PER_KW;
    HeatOutput {
        kbtu_per_hr,
        cooling_tons: kbtu_per_hr / KBTU_PER_TON,
    }
}

pub fn airflow_required_cfm(kw: f64) -> f64 {
    kw * CFM_PER_KW
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolantLoopSpec {
    pub flow_lpm: f64,
    pub delta_t_k: f64,
    #[serde(default = "default_cp")]
    pub cp_j_per_kg_k: f64,
    #[serde(default = "default_density")]
    pub density_kg_per_l: f64,
    #[serde(default)]
    pub pump_power_kw: f64,
}

fn default_cp() -> f64 {
    WATER_CP
}

fn default_density() -> f64 {
    1.0
}

impl CoolantLoopSpec {
    pub fn water(flow_lpm: f64, delta_t_k: f64) -> Self {
        CoolantLoopSpec {
            flow_lpm,
            delta_t_k,
            cp_j_per_kg_k: WATER_CP,
            density_kg_per_l: 1.0,
            pump_power_kw: 0.0,
        }
    }
}

/// Q = ṁ · cp · ΔT, in kW.
pub fn coolant_heat_removal_kw(spec: &CoolantLoopSpec) -> f64 {
    spec.flow_lpm * spec.density_kg_per_l / 60.0 * spec.cp_j_per_kg_k * spec.delta_t_k / 1000.0
}

/// Flow needed to carry `load_kw` away at temperature rise `delta_t_k`.
pub fn required_coolant_flow_lpm(
    load_kw: f64,
    delta_t_k: f64,
    cp: f64,
    density: f64,
) -> Result<f64, EnergeticsError> {
    if delta_t_k == 0.0 {
        return Err(EnergeticsError::ZeroDeltaT);
    }
    Ok(load_kw * 1000.0 * 60.0 / (cp * delta_t_k * density))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallLoad {
    pub it_mw: f64,
    pub total_mw: f64,
}

pub fn hall_aggregate(rack_loads_kw: &[f64], overhead_frac: f64) -> HallLoad {
    let it_mw = rack_loads_kw.iter().sum::<f64>() / 1000.0;
    HallLoad {
        it_mw,
        total_mw: it_mw * (1.0 + overhead_frac),
    }
}

/// Inputs to [`efficiency_report`], all over the same reporting period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyInputs {
    pub total_kw: f64,
    pub it_kw: f64,
    pub carbon_kg: f64,
    pub it_kwh: f64,
    pub reused_heat_kwh_t: f64,
    pub total_heat_kwh_t: f64,
    /// Caller-defined units of useful computational work.
    pub work_units: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub pue: f64,
    pub cue_work_per_kwh: f64,
    pub tre: f64,
    pub cue2_kg_per_kwh: f64,
    pub it_share: f64,
    pub overhead_share: f64,
}

pub fn efficiency_report(i: &EfficiencyInputs) -> Result<EfficiencyReport, EnergeticsError> {
    let fields = [
        ("total_kw", i.total_kw),
        ("it_kw", i.it_kw),
        ("carbon_kg", i.carbon_kg),
        ("it_kwh", i.it_kwh),
        ("reused_heat_kwh_t", i.reused_heat_kwh_t),
        ("total_heat_kwh_t", i.total_heat_kwh_t),
        ("work_units", i.work_units),
    ];
    if let Some((name, v)) = fields.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
        return Err(EnergeticsError::InvalidInput(format!("{name} = {v}")));
    }
    if i.it_kw <= 0.0 || i.it_kwh <= 0.0 {
        return Err(EnergeticsError::InvalidInput(
            "IT power and energy must be positive".into(),
        ));
    }
    if i.total_kw < i.it_kw {
        return Err(EnergeticsError::InvalidInput(format!(
            "total {} kW below IT {} kW",
            i.total_kw, i.it_kw
        )));
    }
    if i.reused_heat_kwh_t > i.total_heat_kwh_t {
        return Err(EnergeticsError::InvalidInput(
            "reused heat exceeds total heat".into(),
        ));
    }
    let it_share = i.it_kw / i.total_kw;
    Ok(EfficiencyReport {
        pue: (i.total_kw / i.it_kw).max(1.0),
        cue_work_per_kwh: i.work_units / i.it_kwh,
        tre: if i.total_heat_kwh_t > 0.0 {
            i.reused_heat_kwh_t / i.total_heat_kwh_t
        } else {
            0.0
        },
        cue2_kg_per_kwh: i.carbon_kg / i.it_kwh,
        it_share,
        overhead_share: 1.0 - it_share,
    })
}

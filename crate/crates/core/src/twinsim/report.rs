use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::canonical::{check_finite, to_canonical_string, CanonicalError};
use crate::energetics::{ControlAction, EfficiencyReport};
use crate::reasoning::Anomaly;

pub const CSV_HEADER: &str = "tick,power_kw,temp_in_c,temp_out_c,delta_t,pue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: u64,
    /// IT electrical load.
    pub power_kw: f64,
    /// Heat delivered into the coolant loops.
    pub heat_kw: f64,
    pub facility_kw: f64,
    pub temp_in_c: f64,
    /// Hottest rack outlet.
    pub temp_out_c: f64,
    /// Largest loop ΔT.
    pub delta_t: f64,
    pub pue: f64,
    pub pump_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAnomaly {
    pub tick: u64,
    pub anomaly: Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAction {
    pub tick: u64,
    pub action: ControlAction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimSummary {
    pub mean_pue: f64,
    pub max_temp_c: f64,
    /// Ticks with any rack outlet above the plant's temperature limit.
    pub downtime_ticks: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation_tick: Option<u64>,
    pub it_kwh: f64,
    pub carbon_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyReport>,
    pub max_pump_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ticks: u64,
    pub tick_s: f64,
    pub series: Vec<TickSample>,
    pub anomalies: Vec<SimAnomaly>,
    pub actions: Vec<SimAction>,
    pub summary: SimSummary,
    pub final_commit_seq: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("report document is malformed: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Canonical JSON document plus the per-tick CSV series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportExport {
    pub document: String,
    pub csv: String,
}

pub fn export_report(report: &SimReport) -> Result<ReportExport, ExportError> {
    let mut numbers = Vec::new();
    for s in &report.series {
        let fields = [
            ("power_kw", s.power_kw),
            ("heat_kw", s.heat_kw),
            ("facility_kw", s.facility_kw),
            ("temp_in_c", s.temp_in_c),
            ("temp_out_c", s.temp_out_c),
            ("delta_t", s.delta_t),
            ("pue", s.pue),
            ("pump_kw", s.pump_kw),
        ];
        numbers.extend(
            fields
                .iter()
                .map(|(name, v)| (format!("series[{}].{name}", s.tick), *v)),
        );
    }
    let m = &report.summary;
    for (name, v) in [
        ("mean_pue", m.mean_pue),
        ("max_temp_c", m.max_temp_c),
        ("it_kwh", m.it_kwh),
        ("carbon_kg", m.carbon_kg),
    ] {
        numbers.push((format!("summary.{name}"), v));
    }
    check_finite(&numbers)?;

    let document = to_canonical_string(report)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for s in &report.series {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.tick, s.power_kw, s.temp_in_c, s.temp_out_c, s.delta_t, s.pue
        );
    }
    Ok(ReportExport { document, csv })
}

pub fn import_report(document: &str) -> Result<SimReport, ExportError> {
    Ok(serde_json::from_str(document)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(tick: u64, pue: f64) -> TickSample {
        TickSample {
            tick,
            power_kw: 748.8,
            heat_kw: 748.8,
            facility_kw: 833.68,
            temp_in_c: 27.0,
            temp_out_c: 48.000000000000014,
            delta_t: 10.5,
            pue,
            pump_kw: 10.0,
        }
    }

    fn report(series: Vec<TickSample>) -> SimReport {
        SimReport {
            scenario: "t".into(),
            seed: 1,
            duration_ticks: series.len() as u64,
            tick_s: 1.0,
            series,
            anomalies: vec![],
            actions: vec![],
            summary: SimSummary {
                mean_pue: 1.1,
                ..Default::default()
            },
            final_commit_seq: 4,
        }
    }

    #[test]
    fn three_ticks_three_rows() {
        let e = export_report(&report((0..3).map(|t| sample(t, 1.1134)).collect())).unwrap();
        let lines: Vec<&str> = e.csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,748.8,27,48.000000000000014,10.5,1.1134");
    }

    #[test]
    fn export_import_round_trip() {
        let r = report(vec![sample(0, 1.0), sample(1, 1.1133995)]);
        let e = export_report(&r).unwrap();
        assert_eq!(import_report(&e.document).unwrap(), r);
    }

    #[test]
    fn nan_rejected() {
        let err = export_report(&report(vec![sample(0, f64::NAN)])).unwrap_err();
        assert!(err.to_string().contains("series[0].pue"), "{err}");
    }
}

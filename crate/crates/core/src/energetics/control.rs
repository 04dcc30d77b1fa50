use serde::{Deserialize, Serialize};

use super::EnergeticsConfig;
use crate::graph::{Scalar, Timestamp};
use crate::reasoning::{Evidence, Explanation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    RaisePumpSpeed,
    RaiseChilledWaterSetpoint,
    CurbNoncritical,
    Consolidate,
    /// Shift heat load from a failing loop to its neighbours.
    RedistributeLoad,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub kind: ActionKind,
    /// Kind-specific: predicted peak utilization for pump speed, °C for
    /// setpoint changes, kW for redistribution, 0 otherwise.
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub issued_at: Timestamp,
    pub effective_at: Timestamp,
    pub reason: Explanation,
}

impl ControlAction {
    fn none(source: &str, target: &str, at: Timestamp, evidence: Vec<Evidence>) -> Self {
        ControlAction {
            kind: ActionKind::None,
            magnitude: 0.0,
            target: Some(target.to_string()),
            issued_at: at,
            effective_at: at,
            reason: Explanation {
                source: source.to_string(),
                commit_seq: 0,
                evidence,
            },
        }
    }
}

/// Utilization samples at a fixed tick, oldest first. The last sample is
/// "now".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryWindow {
    pub source_id: String,
    pub start: Timestamp,
    pub tick_ms: i64,
    pub samples: Vec<f64>,
}

impl TelemetryWindow {
    pub fn at(&self, index: usize) -> Timestamp {
        Timestamp(self.start.0 + index as i64 * self.tick_ms)
    }

    pub fn now(&self) -> Timestamp {
        self.at(self.samples.len().saturating_sub(1))
    }
}

/// Pearson correlation between the series and itself shifted by `lag`.
/// `None` when either overlapping segment is constant.
pub fn autocorrelation(x: &[f64], lag: usize) -> Option<f64> {
    if lag >= x.len() {
        return None;
    }
    let (a, b) = (&x[..x.len() - lag], &x[lag..]);
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        sab += (p - ma) * (q - mb);
        saa += (p - ma) * (p - ma);
        sbb += (q - mb) * (q - mb);
    }
    if saa <= 1e-12 || sbb <= 1e-12 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

const MIN_PERIOD: usize = 2;
/// A later, stronger peak must beat the first candidate by this factor.
const PEAK_TOLERANCE: f64 = 0.95;

/// Dominant period in ticks and its correlation, or the reason there is
/// none.
fn dominant_period(x: &[f64], threshold: f64) -> Result<(usize, f64), &'static str> {
    let max_lag = x.len() / 2;
    let r: Vec<Option<f64>> = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                Some(1.0)
            } else {
                autocorrelation(x, k)
            }
        })
        .collect();
    // Slowly varying signals correlate with themselves at small lags; the
    // search starts once the correlation has first fallen away.
    let Some(first_drop) = (1..=max_lag).find(|&k| r[k].is_none_or(|v| v < threshold)) else {
        return Err("insufficient-history");
    };
    let rv = |k: usize| r[k].unwrap_or(f64::NEG_INFINITY);
    let global = (first_drop..=max_lag)
        .map(rv)
        .fold(f64::NEG_INFINITY, f64::max);
    if global < threshold {
        return Err("no-periodicity");
    }
    let bar = (global * PEAK_TOLERANCE).max(threshold);
    // Only interior peaks count: a maximum at the edge of the searchable lags
    // may belong to a longer period the window cannot yet show.
    (first_drop.max(MIN_PERIOD)..max_lag)
        .find(|&k| rv(k) >= bar && rv(k) >= rv(k - 1) && rv(k) >= rv(k + 1))
        .map(|k| (k, rv(k)))
        .ok_or("no-periodicity")
}

/// Look for a periodic surge in `window` and, if one is found, schedule a
/// pump speed increase `lead_s` before the next predicted surge start.
///
/// Surge starts are rising crossings of the midpoint between the window's
/// minimum and maximum; every crossing recurs one period later.
pub fn predictive_control_step(window: &TelemetryWindow, cfg: &EnergeticsConfig) -> ControlAction {
    let x = &window.samples;
    let now = window.now();
    let src = window.source_id.as_str();
    if x.len() < 2 * MIN_PERIOD + 2 {
        return ControlAction::none("insufficient-history", src, now, vec![]);
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if hi - lo <= 1e-9 {
        return ControlAction::none(
            "flat-utilization",
            src,
            now,
            vec![Evidence::new(src, "utilization", lo)],
        );
    }
    let mid = (lo + hi) / 2.0;
    let crossings: Vec<usize> = (1..x.len())
        .filter(|&t| x[t - 1] < mid && x[t] >= mid)
        .collect();
    // Two observed surge starts are the least that can show a cycle.
    if crossings.len() < 2 {
        return ControlAction::none("insufficient-history", src, now, vec![]);
    }
    let (period, r) = match dominant_period(x, cfg.surge_threshold) {
        Ok(p) => p,
        Err(reason) => return ControlAction::none(reason, src, now, vec![]),
    };
    let last = x.len() - 1;
    let next_start = crossings
        .iter()
        .map(|&t| t + period * ((last - t) / period + 1))
        .min();
    let Some(t_star) = next_start else {
        return ControlAction::none("no-periodicity", src, now, vec![]);
    };
    let surge_at = window.at(t_star);
    let lead_ms = (cfg.lead_s * 1000.0).round() as i64;
    ControlAction {
        kind: ActionKind::RaisePumpSpeed,
        magnitude: hi,
        target: Some(src.to_string()),
        issued_at: now,
        effective_at: Timestamp(surge_at.0 - lead_ms),
        reason: Explanation {
            source: "predictive-control".into(),
            commit_seq: 0,
            evidence: vec![
                Evidence::new(
                    src,
                    "period_ms",
                    Scalar::Int(period as i64 * window.tick_ms),
                ),
                Evidence::new(src, "autocorrelation", r),
                Evidence::new(src, "predicted_surge_ms", Scalar::Int(surge_at.0)),
            ],
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub scope_id: String,
    pub grid_freq_hz: f64,
    pub night: bool,
    pub utilization_frac: f64,
    pub at: Timestamp,
}

/// Demand response below the grid frequency floor; consolidation and a
/// warmer chilled-water setpoint on lightly loaded nights.
pub fn policy_actions(s: &PolicyState, cfg: &EnergeticsConfig) -> Vec<ControlAction> {
    let act = |kind, magnitude, source: &str, evidence| ControlAction {
        kind,
        magnitude,
        target: Some(s.scope_id.clone()),
        issued_at: s.at,
        effective_at: s.at,
        reason: Explanation {
            source: source.to_string(),
            commit_seq: 0,
            evidence,
        },
    };
    let mut out = Vec::new();
    if s.grid_freq_hz < cfg.freq_floor_hz {
        out.push(act(
            ActionKind::CurbNoncritical,
            0.0,
            "demand-response",
            vec![
                Evidence::new(&s.scope_id, "grid_freq_hz", s.grid_freq_hz),
                Evidence::new(&s.scope_id, "freq_floor_hz", cfg.freq_floor_hz),
            ],
        ));
    }
    if s.night && s.utilization_frac < cfg.consolidation_util {
        let evidence = vec![
            Evidence::new(&s.scope_id, "night", true),
            Evidence::new(&s.scope_id, "utilization_frac", s.utilization_frac),
            Evidence::new(
                &s.scope_id,
                "estimated_savings_frac",
                cfg.consolidation_savings_frac,
            ),
        ];
        out.push(act(
            ActionKind::Consolidate,
            0.0,
            "night-consolidation",
            evidence.clone(),
        ));
        out.push(act(
            ActionKind::RaiseChilledWaterSetpoint,
            cfg.chilled_water_step_c,
            "night-consolidation",
            evidence,
        ));
    }
    out
}

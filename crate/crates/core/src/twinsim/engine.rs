use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{SimAction, SimAnomaly, SimReport, SimSummary, TickSample};
use super::{generate_workload, FaultEffect, Scenario, SimError};
use crate::energetics::{
    efficiency_report, predictive_control_step, ActionKind, ControlAction, EfficiencyInputs,
    TelemetryWindow,
};
use crate::graph::{
    ingest_udcp, Attrs, Edge, EdgeKind, GraphStore, Scalar, StateUpdate, Timestamp,
};
use crate::reasoning::{
    builtin_rules, evaluate_rules, infer_causal, Anomaly, Evidence, Explanation,
};
use crate::udcp::{parse_value, AsBuiltStore};

/// Causal kinds that blame a pump and trigger load redistribution.
const PUMP_FAILURE_KINDS: [&str; 2] = ["incipient-bearing-failure", "pump-flow-loss"];
const REFLEX_SOURCE: &str = "reflex";

/// Per-loop simulation state.
struct LoopSim {
    racks: Vec<String>,
    adjacent: Vec<usize>,
    /// Delivered flow as a fraction of commanded, reduced by faults.
    flow_scale: f64,
    /// Speed factor commanded by the reflex to absorb redistributed load.
    reflex_speed: f64,
    /// Load shed to neighbours once a redistribution takes effect.
    shed_kw: Option<f64>,
    redistribution_issued: bool,
    /// Tick ranges `[start, end)` during which the predictive boost applies.
    boosts: Vec<(u64, u64)>,
    last_scheduled: Option<Timestamp>,
    delta_t: f64,
}

pub fn run_scenario(s: &Scenario) -> Result<SimReport, SimError> {
    run_scenario_with_seed(s, s.seed)
}

/// Run `s` with its seed replaced by `seed`.
pub fn run_scenario_with_seed(s: &Scenario, seed: u64) -> Result<SimReport, SimError> {
    s.validate()?;
    let plant = &s.plant;
    let tick_ms = (s.tick_s * 1000.0).round() as i64;
    let mut graph = build_graph(s)?;

    let index: BTreeMap<&str, usize> = plant
        .loops
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.as_str(), i))
        .collect();
    let mut loops: Vec<LoopSim> = plant
        .loops
        .iter()
        .map(|l| LoopSim {
            racks: l.racks.clone(),
            adjacent: l
                .adjacent
                .iter()
                .filter_map(|a| index.get(a.as_str()).copied())
                .collect(),
            flow_scale: 1.0,
            reflex_speed: 1.0,
            shed_kw: None,
            redistribution_issued: false,
            boosts: Vec::new(),
            last_scheduled: None,
            delta_t: 0.0,
        })
        .collect();
    let rack_count: usize = loops.iter().map(|l| l.racks.len()).sum();

    let mut rules = builtin_rules();
    rules.extend(s.rules.iter().cloned());
    let trace = generate_workload(seed, &s.workload, s.duration_ticks)?;
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);

    let mut offsets: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut pending: Vec<(u64, usize, f64)> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut report = SimReport {
        scenario: s.name.clone(),
        seed,
        duration_ticks: s.duration_ticks,
        tick_s: s.tick_s,
        series: Vec::with_capacity(s.duration_ticks as usize),
        anomalies: Vec::new(),
        actions: Vec::new(),
        summary: SimSummary::default(),
        final_commit_seq: 0,
    };
    let (mut pue_sum, mut it_sum, mut facility_sum, mut it_kwh, mut work_units) =
        (0.0, 0.0, 0.0, 0.0, 0.0);

    for t in 0..s.duration_ticks {
        let now = Timestamp(t as i64 * tick_ms);
        let u = trace[t as usize];

        for f in s.faults.iter().filter(|f| f.tick == t) {
            match &f.effect {
                FaultEffect::PumpFlowScale { factor } => {
                    for (l, cfg) in loops.iter_mut().zip(&plant.loops) {
                        if cfg.pump == f.node_id {
                            l.flow_scale *= factor;
                        }
                    }
                }
                FaultEffect::StateOffset { attr, delta } => {
                    *offsets
                        .entry((f.node_id.clone(), attr.clone()))
                        .or_default() += delta;
                }
            }
        }
        for &(_, i, kw) in pending.iter().filter(|(at, _, _)| *at == t) {
            loops[i].shed_kw = Some(kw);
            let targets: Vec<usize> = loops[i]
                .adjacent
                .iter()
                .copied()
                .filter(|&a| !loops[a].racks.is_empty())
                .collect();
            for a in &targets {
                let peak = loops[*a].racks.len() as f64 * plant.rack_peak_kw;
                let speed = (peak + kw / targets.len() as f64) / peak;
                loops[*a].reflex_speed = loops[*a].reflex_speed.max(speed);
            }
        }

        // Electrical load per rack, then heat per loop after redistribution.
        let rack_kw = plant.rack_peak_kw * (plant.idle_frac + (1.0 - plant.idle_frac) * u / 100.0);
        let it_kw = rack_kw * rack_count as f64;
        let mut loop_rack_kw: Vec<f64> = vec![rack_kw; loops.len()];
        let mut received: Vec<f64> = vec![0.0; loops.len()];
        for i in 0..loops.len() {
            let Some(shed) = loops[i].shed_kw else {
                continue;
            };
            let targets: Vec<usize> = loops[i]
                .adjacent
                .iter()
                .copied()
                .filter(|&a| !loops[a].racks.is_empty())
                .collect();
            let load = rack_kw * loops[i].racks.len() as f64;
            if targets.is_empty() || load <= 0.0 {
                continue;
            }
            let moved = shed.min(load);
            loop_rack_kw[i] = (load - moved) / loops[i].racks.len() as f64;
            for a in &targets {
                received[*a] += moved / targets.len() as f64;
            }
        }
        for (i, l) in loops.iter().enumerate() {
            if !l.racks.is_empty() {
                loop_rack_kw[i] += received[i] / l.racks.len() as f64;
            }
        }

        let mut updates = Vec::new();
        let (mut heat_kw, mut pump_kw, mut max_dt, mut max_out) =
            (0.0, 0.0, 0.0f64, plant.supply_temp_c);
        for (i, (l, cfg)) in loops.iter_mut().zip(&plant.loops).enumerate() {
            let heat = loop_rack_kw[i] * l.racks.len() as f64;
            let boosted = s.controller.enabled && l.boosts.iter().any(|&(a, b)| a <= t && t < b);
            let speed = (l.reflex_speed * if boosted { s.controller.boost } else { 1.0 })
                .min(plant.max_pump_speed);
            let flow = cfg.nominal_flow_lpm * speed * l.flow_scale;
            let steady = heat * 60_000.0 / (plant.cp_j_per_kg_k * plant.density_kg_per_l * flow);
            l.delta_t = if t == 0 {
                steady
            } else {
                l.delta_t + plant.thermal_alpha * (steady - l.delta_t)
            };
            let temp_out = plant.supply_temp_c + 2.0 * l.delta_t;
            let p_kw = cfg.pump_power_kw * speed.powi(3);
            heat_kw += heat;
            pump_kw += p_kw;
            max_dt = max_dt.max(l.delta_t);
            report.summary.max_pump_speed = report.summary.max_pump_speed.max(speed);
            for r in &l.racks {
                max_out = max_out.max(temp_out);
                updates.push(state(
                    r,
                    now,
                    &[
                        ("power_kw", loop_rack_kw[i]),
                        ("utilization", u),
                        ("temp_in_c", plant.supply_temp_c),
                        ("temp_out_c", temp_out),
                        ("coolant_deltaT", l.delta_t),
                    ],
                ));
            }
            updates.push(state(
                &cfg.id,
                now,
                &[
                    ("coolant_deltaT", l.delta_t),
                    ("flow_lpm", flow),
                    ("heat_kw", heat),
                ],
            ));
            let vibration = plant.vibration_baseline_mm_s
                + plant.vibration_noise_mm_s * noise.gen_range(-1.0..=1.0);
            updates.push(state(
                &cfg.pump,
                now,
                &[
                    ("flow_lpm", flow),
                    ("vibration_mm_s", vibration),
                    ("power_kw", p_kw),
                ],
            ));
        }
        for u in &mut updates {
            for ((node, attr), delta) in offsets.range((u.node_id.clone(), String::new())..) {
                if *node != u.node_id {
                    break;
                }
                let base = u.attrs.get(attr).and_then(Scalar::as_f64).unwrap_or(0.0);
                u.attrs.insert(attr.clone(), Scalar::Float(base + delta));
            }
        }
        graph.apply_state_batch(&updates)?;

        let view = graph.view();
        let outcome = evaluate_rules(&view, &rules, now);
        for a in outcome.anomalies {
            if !seen.insert(a.anomaly_id.clone()) {
                continue;
            }
            let top = infer_causal(&view, &a).into_iter().next();
            report.anomalies.push(SimAnomaly {
                tick: t,
                anomaly: a,
            });
            let Some(c) = top else { continue };
            let causal_id = format!("{}:{}", c.kind, c.node_id);
            if !seen.insert(causal_id.clone()) {
                continue;
            }
            report.anomalies.push(SimAnomaly {
                tick: t,
                anomaly: Anomaly {
                    anomaly_id: causal_id,
                    kind: c.kind.clone(),
                    subject: c.node_id.clone(),
                    provenance: c.explanation.clone(),
                    detected_at: now,
                },
            });
            if !s.reflex.enabled || !PUMP_FAILURE_KINDS.contains(&c.kind.as_str()) {
                continue;
            }
            for (i, cfg) in plant.loops.iter().enumerate() {
                if cfg.pump != c.node_id || loops[i].redistribution_issued {
                    continue;
                }
                loops[i].redistribution_issued = true;
                pending.push((t + 1, i, s.reflex.redistribute_kw));
                let mut evidence = c.explanation.evidence.clone();
                evidence.push(Evidence::new(
                    &cfg.id,
                    "heat_kw",
                    loop_rack_kw[i] * loops[i].racks.len() as f64,
                ));
                report.actions.push(SimAction {
                    tick: t,
                    action: ControlAction {
                        kind: ActionKind::RedistributeLoad,
                        magnitude: s.reflex.redistribute_kw,
                        target: Some(cfg.id.clone()),
                        issued_at: now,
                        effective_at: Timestamp(now.0 + tick_ms),
                        reason: Explanation {
                            source: REFLEX_SOURCE.into(),
                            commit_seq: view.seq(),
                            evidence,
                        },
                    },
                });
            }
        }
        let proposed: Vec<StateUpdate> = outcome
            .state_updates
            .into_iter()
            .map(|p| StateUpdate {
                node_id: p.node_id,
                attrs: Attrs::from([(p.name, p.value)]),
                ts: now,
            })
            .collect();
        drop(view);
        if !proposed.is_empty() {
            graph.apply_state_batch(&proposed)?;
        }

        // Short windows make spurious periods out of noise; the controller
        // waits for a full window of history.
        let len = s.controller.window_ticks.max(1);
        if s.controller.enabled && t + 1 >= len && t % s.controller.interval_ticks.max(1) == 0 {
            let start = t + 1 - len;
            for (l, cfg) in loops.iter_mut().zip(&plant.loops) {
                let window = TelemetryWindow {
                    source_id: cfg.id.clone(),
                    start: Timestamp(start as i64 * tick_ms),
                    tick_ms,
                    samples: trace[start as usize..=t as usize].to_vec(),
                };
                let action = predictive_control_step(&window, &s.controller.energetics);
                if action.kind != ActionKind::RaisePumpSpeed
                    || l.last_scheduled == Some(action.effective_at)
                {
                    continue;
                }
                let period_ms =
                    evidence_int(&action.reason.evidence, "period_ms").unwrap_or(tick_ms);
                let surge_ms = evidence_int(&action.reason.evidence, "predicted_surge_ms")
                    .unwrap_or(action.effective_at.0);
                let from = action.effective_at.0.max(0) / tick_ms.max(1);
                let until = (surge_ms + period_ms / 2) / tick_ms.max(1);
                l.boosts.push((from as u64, until as u64));
                l.last_scheduled = Some(action.effective_at);
                report.actions.push(SimAction { tick: t, action });
            }
        }

        let facility_kw =
            it_kw * (1.0 + plant.heat_rejection_frac + plant.distribution_loss_frac) + pump_kw;
        let pue = if it_kw > 0.0 {
            facility_kw / it_kw
        } else {
            1.0
        };
        if max_out > plant.temp_limit_c {
            report.summary.downtime_ticks += 1;
            report.summary.first_violation_tick.get_or_insert(t);
        }
        report.summary.max_temp_c = report.summary.max_temp_c.max(max_out);
        pue_sum += pue;
        it_sum += it_kw;
        facility_sum += facility_kw;
        it_kwh += it_kw * s.tick_s / 3600.0;
        work_units += rack_count as f64 * u / 100.0 * s.tick_s / 3600.0;
        report.series.push(TickSample {
            tick: t,
            power_kw: it_kw,
            heat_kw,
            facility_kw,
            temp_in_c: plant.supply_temp_c,
            temp_out_c: max_out,
            delta_t: max_dt,
            pue,
            pump_kw,
        });
    }

    let n = s.duration_ticks as f64;
    let summary = &mut report.summary;
    summary.mean_pue = pue_sum / n;
    summary.it_kwh = it_kwh;
    summary.carbon_kg = plant.carbon_kg_per_it_kwh * it_kwh;
    summary.efficiency = efficiency_report(&EfficiencyInputs {
        total_kw: facility_sum / n,
        it_kw: it_sum / n,
        carbon_kg: summary.carbon_kg,
        it_kwh,
        reused_heat_kwh_t: plant.heat_reuse_frac * it_kwh,
        total_heat_kwh_t: it_kwh,
        work_units,
    })
    .ok();
    report.final_commit_seq = graph.seq();
    Ok(report)
}

fn state(node: &str, ts: Timestamp, values: &[(&str, f64)]) -> StateUpdate {
    StateUpdate {
        node_id: node.to_string(),
        attrs: values
            .iter()
            .map(|(k, v)| (k.to_string(), Scalar::Float(*v)))
            .collect(),
        ts,
    }
}

fn evidence_int(evidence: &[Evidence], attribute: &str) -> Option<i64> {
    evidence
        .iter()
        .find(|e| e.attribute == attribute)
        .and_then(|e| match e.observed {
            Scalar::Int(i) => Some(i),
            _ => None,
        })
}

/// Apply the topology documents and wire the cooling plant into the graph.
fn build_graph(s: &Scenario) -> Result<GraphStore, SimError> {
    let mut asbuilt = AsBuiltStore::new();
    let mut graph = GraphStore::new();
    for (index, doc) in s.topology.iter().enumerate() {
        let msg =
            parse_value(doc.clone()).map_err(|source| SimError::TopologyParse { index, source })?;
        let result = asbuilt.apply(&msg);
        if !result.is_applied() {
            return Err(SimError::TopologyRejected {
                index,
                violations: result.errors,
            });
        }
        ingest_udcp(&mut graph, &result.deltas)?;
    }

    let plant = &s.plant;
    let referenced = plant
        .loops
        .iter()
        .flat_map(|l| {
            std::iter::once(&l.id)
                .chain(std::iter::once(&l.pump))
                .chain(&l.racks)
                .chain(&l.adjacent)
        })
        .chain(s.faults.iter().map(|f| &f.node_id));
    for id in referenced {
        if graph.graph().node(id).is_none() {
            return Err(SimError::UnknownNode(id.clone()));
        }
    }
    graph.transaction(|g| {
        for l in &plant.loops {
            for r in &l.racks {
                g.upsert_edge(cooled_by(r, &l.id))?;
            }
            g.upsert_edge(cooled_by(&l.id, &l.pump))?;
        }
        Ok::<_, SimError>(())
    })?;
    Ok(graph)
}

fn cooled_by(from: &str, to: &str) -> Edge {
    Edge {
        id: format!("cooled:{from}->{to}"),
        kind: EdgeKind::CooledBy,
        from: from.to_string(),
        to: to.to_string(),
        attrs: Attrs::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_scenario, WorkloadPattern};
    use super::*;

    fn empty(ticks: u64) -> Scenario {
        Scenario {
            name: "empty".into(),
            seed: 0,
            duration_ticks: ticks,
            tick_s: 1.0,
            topology: vec![],
            workload: WorkloadPattern::constant(0.0),
            faults: vec![],
            plant: Default::default(),
            reflex: Default::default(),
            controller: Default::default(),
            rules: vec![],
        }
    }

    #[test]
    fn empty_scenario_is_flat() {
        let r = run_scenario(&empty(10)).unwrap();
        assert_eq!(r.series.len(), 10);
        assert!(r.series.iter().all(|t| t.power_kw == 0.0 && t.pue == 1.0));
        assert!(r.anomalies.is_empty() && r.actions.is_empty());
        assert_eq!(r.summary.downtime_ticks, 0);
    }

    #[test]
    fn unknown_fault_target_rejected() {
        let mut s = empty(5);
        s.faults.push(super::super::Fault {
            tick: 1,
            node_id: "P-99".into(),
            effect: FaultEffect::PumpFlowScale { factor: 0.5 },
        });
        assert!(matches!(run_scenario(&s), Err(SimError::UnknownNode(id)) if id == "P-99"));
    }

    #[test]
    fn pump_failure_reflex() {
        let s = builtin_scenario("pump-failure").unwrap();
        let r = run_scenario(&s).unwrap();
        let blamed = r
            .anomalies
            .iter()
            .find(|a| a.anomaly.kind == "incipient-bearing-failure")
            .expect("causal anomaly");
        assert_eq!(blamed.anomaly.subject, "P-7");
        let redistribution = r
            .actions
            .iter()
            .find(|a| a.action.kind == ActionKind::RedistributeLoad)
            .unwrap();
        assert_eq!(redistribution.action.magnitude, 180.0);
        assert_eq!(redistribution.action.target.as_deref(), Some("Loop-B"));
        assert_eq!(r.summary.downtime_ticks, 0);

        let unattended = run_scenario(&s.without_actions()).unwrap();
        let violation = unattended
            .summary
            .first_violation_tick
            .expect("violation without actions");
        assert!(blamed.tick < violation, "{} vs {violation}", blamed.tick);
        for (a, b) in r.series.iter().zip(&unattended.series) {
            assert_eq!(a.power_kw, b.power_kw);
            assert!((a.heat_kw - a.power_kw).abs() <= 1e-6 * a.power_kw);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut s = builtin_scenario("pump-failure").unwrap();
        s.duration_ticks = 200;
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }
}

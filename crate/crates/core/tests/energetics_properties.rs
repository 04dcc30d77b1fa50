use dcim_core::energetics::{
    airflow_required_cfm, coolant_heat_removal_kw, efficiency_report, heat_output,
    predictive_control_step, required_coolant_flow_lpm, ActionKind, CoolantLoopSpec,
    EfficiencyInputs, EnergeticsConfig, TelemetryWindow, WATER_CP,
};
use dcim_core::graph::Timestamp;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

/// First rising crossing of the midpoint after the last observed sample,
/// found by extending the periodic signal forward.
fn true_next_surge(pattern: &[f64], phase: usize, observed: usize) -> usize {
    let at = |t: usize| pattern[(t + phase) % pattern.len()];
    let (lo, hi) = pattern
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let mid = (lo + hi) / 2.0;
    (observed..)
        .find(|&t| at(t - 1) < mid && at(t) >= mid)
        .unwrap()
}

fn periodic_pattern() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        // Square wave with arbitrary duty cycle.
        (3usize..=60)
            .prop_flat_map(|p| (Just(p), 1..p))
            .prop_map(|(p, on)| { (0..p).map(|i| if i < on { 1.0 } else { 0.3 }).collect() }),
        (3usize..=60).prop_map(|p| (0..p)
            .map(|i| (i as f64 * std::f64::consts::TAU / p as f64).sin())
            .collect()),
        // Arbitrary shape repeating exactly.
        prop::collection::vec(0.0f64..100.0, 3..=30),
    ]
}

proptest! {
    #[test]
    fn heat_and_airflow_are_linear(a in 0.0f64..1e5, b in 0.0f64..1e5, k in 0.0f64..100.0) {
        let (ha, hb, hs) = (heat_output(a), heat_output(b), heat_output(a + b));
        prop_assert!(close(hs.kbtu_per_hr, ha.kbtu_per_hr + hb.kbtu_per_hr, 1e-12));
        prop_assert!(close(hs.cooling_tons, ha.cooling_tons + hb.cooling_tons, 1e-12));
        prop_assert!(close(heat_output(k * a).kbtu_per_hr, k * ha.kbtu_per_hr, 1e-12));
        prop_assert!(close(airflow_required_cfm(a + b), airflow_required_cfm(a) + airflow_required_cfm(b), 1e-12));
        prop_assert!(close(airflow_required_cfm(k * a), k * airflow_required_cfm(a), 1e-12));
    }

    #[test]
    fn coolant_removal_is_bilinear(f in 0.1f64..1e4, dt in 0.1f64..50.0, k in 0.1f64..10.0) {
        let q = coolant_heat_removal_kw(&CoolantLoopSpec::water(f, dt));
        prop_assert!(close(coolant_heat_removal_kw(&CoolantLoopSpec::water(k * f, dt)), k * q, 1e-12));
        prop_assert!(close(coolant_heat_removal_kw(&CoolantLoopSpec::water(f, k * dt)), k * q, 1e-12));
    }

    #[test]
    fn required_flow_inverts_heat_removal(f in 0.1f64..1e4, dt in 0.1f64..50.0) {
        let q = coolant_heat_removal_kw(&CoolantLoopSpec::water(f, dt));
        let back = required_coolant_flow_lpm(q, dt, WATER_CP, 1.0).unwrap();
        prop_assert!(close(back, f, 1e-9));
    }

    #[test]
    fn pue_never_below_one(it in 1e-3f64..1e6, extra in 0.0f64..1e6, kwh in 1e-3f64..1e6) {
        let r = efficiency_report(&EfficiencyInputs { total_kw: it + extra, it_kw: it, it_kwh: kwh, ..Default::default() }).unwrap();
        prop_assert!(r.pue >= 1.0);
        prop_assert!(r.it_share <= 1.0 && r.overhead_share >= 0.0);
    }

    #[test]
    fn controller_leads_periodic_surges(pattern in periodic_pattern(), phase in 0usize..60, extra in 0usize..40) {
        let p = pattern.len();
        let lo = pattern.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pattern.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi - lo > 1e-6);
        let n = (4 * p).max(24) + extra;
        let samples: Vec<f64> = (0..n).map(|t| pattern[(t + phase) % p]).collect();
        let w = TelemetryWindow { source_id: "Loop-A".into(), start: Timestamp(0), tick_ms: 1000, samples };
        let cfg = EnergeticsConfig::default();
        let a = predictive_control_step(&w, &cfg);
        prop_assert_eq!(a.kind, ActionKind::RaisePumpSpeed, "{:?}", a.reason);
        let surge_ms = true_next_surge(&pattern, phase, n) as i64 * 1000;
        let lead_ms = (cfg.lead_s * 1000.0) as i64;
        prop_assert!((surge_ms - a.effective_at.0 - lead_ms).abs() <= 1000, "surge {surge_ms} action {:?}", a.effective_at);
    }
}

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Anomaly, Evidence, Explanation};
use crate::graph::{Direction, EdgeKind, GraphView, Node, Scalar};

pub const CAUSAL_DEPTH: u32 = 3;
pub const CAUSAL_SOURCE: &str = "causal-trace";

const CAUSAL_EDGES: [EdgeKind; 3] = [
    EdgeKind::CooledBy,
    EdgeKind::PoweredBy,
    EdgeKind::ConnectedTo,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub attr: String,
    pub observed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalCandidate {
    pub node_id: String,
    pub depth: u32,
    pub kind: String,
    pub violations: Vec<RangeViolation>,
    pub explanation: Explanation,
}

/// State attributes of `node` outside the `<attr>_min` / `<attr>_max`
/// bounds declared in its structural layer, in attribute order.
pub fn range_violations(node: &Node) -> Vec<RangeViolation> {
    let bound = |attr: &str, suffix: &str| {
        node.structural
            .get(&format!("{attr}_{suffix}"))
            .and_then(Scalar::as_f64)
    };
    node.state
        .iter()
        .filter_map(|(attr, sv)| {
            let observed = sv.value.as_f64()?;
            let (min, max) = (bound(attr, "min"), bound(attr, "max"));
            let low = min.is_some_and(|m| observed < m);
            let high = max.is_some_and(|m| observed > m);
            (low || high).then(|| RangeViolation {
                attr: attr.clone(),
                observed,
                min,
                max,
            })
        })
        .collect()
}

fn classify(node: &Node, violations: &[RangeViolation]) -> &'static str {
    let any = |prefix: &str| violations.iter().any(|v| v.attr.starts_with(prefix));
    match node.label.as_str() {
        "Pump" if any("vibration") => "incipient-bearing-failure",
        "Pump" if any("flow") => "pump-flow-loss",
        _ => "out-of-range",
    }
}

/// Rank the nodes within three COOLED_BY / POWERED_BY / CONNECTED_TO hops
/// of the anomaly subject whose telemetry left its declared normal range:
/// most violated attributes first, then nearest, then by id. Each candidate
/// cites the path from the subject and the offending readings.
/// Predecessor node and the edge taken from it.
type Step<'a> = (&'a str, &'a str);

pub fn infer_causal(view: &GraphView, anomaly: &Anomaly) -> Vec<CausalCandidate> {
    let subject = anomaly.subject.as_str();
    if view.node(subject).is_none() {
        return Vec::new();
    }
    // Breadth-first with parent edges so each candidate can cite its path.
    let mut parent: BTreeMap<&str, (u32, Option<Step>)> = BTreeMap::new();
    parent.insert(subject, (0, None));
    let mut queue = VecDeque::from([subject]);
    while let Some(node) = queue.pop_front() {
        let depth = parent[node].0;
        if depth == CAUSAL_DEPTH {
            continue;
        }
        let mut next: Vec<(&str, &str)> = CAUSAL_EDGES
            .iter()
            .flat_map(|&k| view.edges_from(node, k, Direction::Out))
            .map(|e| (e.other_end(node), e.id.as_str()))
            .collect();
        next.sort();
        for (other, edge) in next {
            if !parent.contains_key(other) {
                parent.insert(other, (depth + 1, Some((node, edge))));
                queue.push_back(other);
            }
        }
    }

    let mut out: Vec<CausalCandidate> = parent
        .iter()
        .filter(|(id, _)| **id != subject)
        .filter_map(|(&id, &(depth, _))| {
            let node = view.node(id)?;
            let violations = range_violations(node);
            if violations.is_empty() {
                return None;
            }
            let mut path = Vec::new();
            let mut cur = id;
            while let Some((_, Some((prev, edge)))) = parent.get(cur) {
                path.push(*edge);
                cur = prev;
            }
            path.reverse();
            let mut evidence: Vec<Evidence> = path
                .iter()
                .map(|e| Evidence::new(*e, "kind", view.edge(e).expect("walked").kind.as_str()))
                .collect();
            for v in &violations {
                evidence.push(Evidence::new(id, &v.attr, v.observed));
                if let Some(max) = v.max {
                    evidence.push(Evidence::new(id, format!("{}_max", v.attr), max));
                }
                if let Some(min) = v.min {
                    evidence.push(Evidence::new(id, format!("{}_min", v.attr), min));
                }
            }
            Some(CausalCandidate {
                node_id: id.to_string(),
                depth,
                kind: classify(node, &violations).to_string(),
                violations,
                explanation: Explanation {
                    source: CAUSAL_SOURCE.into(),
                    commit_seq: view.seq(),
                    evidence,
                },
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.violations
            .len()
            .cmp(&a.violations.len())
            .then(a.depth.cmp(&b.depth))
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
    out
}

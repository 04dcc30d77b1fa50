//! Rules, anomalies and the evidence behind them.
//!
//! Everything here is a pure function over an immutable [`GraphView`]:
//! declarative rules raise anomalies or propose state, the intent compiler
//! turns a controlled-grammar sentence into a [`PatternQuery`], and causal
//! tracing ranks upstream nodes whose telemetry left its normal range.
//!
//! [`GraphView`]: crate::graph::GraphView
//! [`PatternQuery`]: crate::graph::PatternQuery

mod causal;
pub mod intent;
mod rules;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Scalar, Timestamp};

pub use causal::{infer_causal, CausalCandidate, RangeViolation, CAUSAL_DEPTH, CAUSAL_SOURCE};
pub use intent::{compile_intent, parse_intent, IntentError, IntentQuery, Scope, ScopeKind};
pub use rules::{
    builtin_rules, evaluate_rule_on_node, evaluate_rules, load_rules, Condition, Consequence,
    ProposedState, Rule, RuleError, RuleOutcome,
};

/// One observed fact an inference relied on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Node or edge id.
    pub element_id: String,
    pub attribute: String,
    pub observed: Scalar,
}

impl Evidence {
    pub fn new(
        element_id: impl Into<String>,
        attribute: impl Into<String>,
        observed: impl Into<Scalar>,
    ) -> Self {
        Evidence {
            element_id: element_id.into(),
            attribute: attribute.into(),
            observed: observed.into(),
        }
    }
}

/// Which rule or inference produced a finding, against which commit, and
/// from what evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub source: String,
    pub commit_seq: u64,
    pub evidence: Vec<Evidence>,
}

impl Explanation {
    /// Every cited element exists in `graph`.
    pub fn is_sound(&self, graph: &Graph) -> bool {
        self.evidence
            .iter()
            .all(|e| graph.node(&e.element_id).is_some() || graph.edge(&e.element_id).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub anomaly_id: String,
    pub kind: String,
    pub subject: String,
    pub provenance: Explanation,
    pub detected_at: Timestamp,
}

/// Deterministic multi-line rendering of an anomaly and its evidence.
pub fn explain(anomaly: &Anomaly) -> String {
    let mut out = format!(
        "anomaly {} on {} (source {}, view commit {}, detected at {})\n",
        anomaly.kind,
        anomaly.subject,
        anomaly.provenance.source,
        anomaly.provenance.commit_seq,
        anomaly.detected_at
    );
    for e in &anomaly.provenance.evidence {
        let _ = writeln!(
            out,
            "  evidence: {}.{} = {}",
            e.element_id, e.attribute, e.observed
        );
    }
    out
}

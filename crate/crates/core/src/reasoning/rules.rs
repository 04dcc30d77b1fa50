use serde::{Deserialize, Serialize};

use super::{Anomaly, Evidence, Explanation};
use crate::graph::{
    matching_neighbours, CmpOp, CountConstraint, EdgeKind, EdgePattern, GraphView, Hop, Node,
    NodePattern, Predicate, Scalar, Timestamp,
};

/// Label wildcard: the rule applies to every node.
pub const ANY_LABEL: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Condition {
    /// Attribute predicate on the node itself.
    Attr(Predicate),
    /// Number of distinct neighbours through matching edges.
    EdgeCount(CountConstraint),
    /// At least one matching edge to a matching neighbour.
    HasEdge(Hop),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Consequence {
    SetState { name: String, value: Scalar },
    RaiseAnomaly { kind: String },
}

/// `IF every condition holds on a node labelled target_label THEN consequence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub rule_id: String,
    pub target_label: String,
    pub conditions: Vec<Condition>,
    pub consequence: Consequence,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("rule document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rule `{0}` has no conditions")]
    NoConditions(String),
    #[error("rule with empty id, label or consequence name")]
    EmptyField,
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
}

impl Rule {
    pub fn validate(&self) -> Result<(), RuleError> {
        let consequence_name = match &self.consequence {
            Consequence::SetState { name, .. } => name,
            Consequence::RaiseAnomaly { kind } => kind,
        };
        if self.rule_id.is_empty() || self.target_label.is_empty() || consequence_name.is_empty() {
            return Err(RuleError::EmptyField);
        }
        if self.conditions.is_empty() {
            return Err(RuleError::NoConditions(self.rule_id.clone()));
        }
        Ok(())
    }

    fn applies_to(&self, node: &Node) -> bool {
        self.target_label == ANY_LABEL || self.target_label == node.label
    }
}

/// Parse a JSON array of rules and check each one.
pub fn load_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let rules: Vec<Rule> = serde_json::from_str(text)?;
    let mut ids = std::collections::BTreeSet::new();
    for r in &rules {
        r.validate()?;
        if !ids.insert(r.rule_id.as_str()) {
            return Err(RuleError::DuplicateId(r.rule_id.clone()));
        }
    }
    Ok(rules)
}

/// Redundant power, the thermal-constraint state rule and under-connected
/// high-density racks.
pub fn builtin_rules() -> Vec<Rule> {
    vec![
        Rule {
            rule_id: "power-redundancy".into(),
            target_label: "Rack".into(),
            conditions: vec![Condition::EdgeCount(CountConstraint {
                edge: EdgePattern::new(EdgeKind::PoweredBy),
                neighbor: NodePattern::label("PDU"),
                op: CmpOp::Lt,
                count: 2,
            })],
            consequence: Consequence::RaiseAnomaly {
                kind: "non-redundant-power".into(),
            },
        },
        Rule {
            rule_id: "thermal-constraint".into(),
            target_label: ANY_LABEL.into(),
            conditions: vec![
                Condition::Attr(Predicate::new("temp_c", CmpOp::Gt, 85i64)),
                Condition::Attr(Predicate::new("fan_speed", CmpOp::Gt, 95i64)),
            ],
            consequence: Consequence::SetState {
                name: "state".into(),
                value: "Thermally Constrained".into(),
            },
        },
        Rule {
            rule_id: "under-connected".into(),
            target_label: "Rack".into(),
            conditions: vec![
                Condition::Attr(Predicate::new("power_kw", CmpOp::Gt, 40i64)),
                Condition::HasEdge(Hop {
                    edge: EdgePattern::new(EdgeKind::ConnectedTo).with(Predicate::new(
                        "bandwidth_gbps",
                        CmpOp::Lt,
                        100i64,
                    )),
                    neighbor: NodePattern::label("Switch"),
                }),
            ],
            consequence: Consequence::RaiseAnomaly {
                kind: "under-connected".into(),
            },
        },
    ]
}

/// A `set_state` consequence; the caller decides whether to write it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedState {
    pub node_id: String,
    pub name: String,
    pub value: Scalar,
    pub provenance: Explanation,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub anomalies: Vec<Anomaly>,
    pub state_updates: Vec<ProposedState>,
}

/// Evidence for `rule` on `node` if every condition holds, `None` otherwise.
pub fn evaluate_rule_on_node(view: &GraphView, rule: &Rule, node: &Node) -> Option<Vec<Evidence>> {
    if !rule.applies_to(node) {
        return None;
    }
    let mut evidence = Vec::new();
    for cond in &rule.conditions {
        match cond {
            Condition::Attr(p) => {
                let observed = node.attr(&p.attr);
                if !p.test(observed) {
                    return None;
                }
                evidence.push(Evidence::new(&node.id, &p.attr, observed.cloned()?));
            }
            Condition::EdgeCount(c) => {
                let matches = matching_neighbours(view, &node.id, &c.edge, &c.neighbor);
                let mut distinct: Vec<&str> = matches.iter().map(|(_, n)| n.id.as_str()).collect();
                distinct.sort_unstable();
                distinct.dedup();
                if !c.op.holds((distinct.len() as u64).cmp(&c.count)) {
                    return None;
                }
                for (e, n) in &matches {
                    evidence.push(Evidence::new(&e.id, "kind", e.kind.as_str()));
                    evidence.push(Evidence::new(&e.id, "to", n.id.as_str()));
                }
                evidence.push(Evidence::new(
                    &node.id,
                    format!("{}.count", c.edge.kind),
                    Scalar::Int(distinct.len() as i64),
                ));
            }
            Condition::HasEdge(h) => {
                let matches = matching_neighbours(view, &node.id, &h.edge, &h.neighbor);
                let (e, n) = matches.first()?;
                evidence.push(Evidence::new(&e.id, "kind", e.kind.as_str()));
                for p in &h.edge.predicates {
                    evidence.push(Evidence::new(
                        &e.id,
                        &p.attr,
                        e.attrs.get(&p.attr).cloned()?,
                    ));
                }
                evidence.push(Evidence::new(&e.id, "to", n.id.as_str()));
                for p in &h.neighbor.predicates {
                    evidence.push(Evidence::new(&n.id, &p.attr, n.attr(&p.attr).cloned()?));
                }
            }
        }
    }
    Some(evidence)
}

/// Fire every rule on every node of `view`. Output is ordered by
/// (node id, rule id) and is byte-identical for identical inputs.
pub fn evaluate_rules(view: &GraphView, rules: &[Rule], at: Timestamp) -> RuleOutcome {
    let mut order: Vec<&Rule> = rules.iter().collect();
    order.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));

    let mut out = RuleOutcome::default();
    for node in view.nodes() {
        for rule in &order {
            let Some(evidence) = evaluate_rule_on_node(view, rule, node) else {
                continue;
            };
            let provenance = Explanation {
                source: rule.rule_id.clone(),
                commit_seq: view.seq(),
                evidence,
            };
            match &rule.consequence {
                Consequence::RaiseAnomaly { kind } => out.anomalies.push(Anomaly {
                    anomaly_id: format!("{}:{}", rule.rule_id, node.id),
                    kind: kind.clone(),
                    subject: node.id.clone(),
                    provenance,
                    detected_at: at,
                }),
                Consequence::SetState { name, value } => out.state_updates.push(ProposedState {
                    node_id: node.id.clone(),
                    name: name.clone(),
                    value: value.clone(),
                    provenance,
                }),
            }
        }
    }
    out
}

//! Closed pattern queries: a node pattern, zero or more existential hops,
//! and neighbour-count constraints.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeKind, Graph, Node, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// `attr op value`. A missing attribute, a type mismatch or a NaN makes the
/// predicate false, whatever the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub attr: String,
    pub op: CmpOp,
    pub value: Scalar,
}

impl Predicate {
    pub fn new(attr: impl Into<String>, op: CmpOp, value: impl Into<Scalar>) -> Self {
        Predicate {
            attr: attr.into(),
            op,
            value: value.into(),
        }
    }

    pub fn test(&self, observed: Option<&Scalar>) -> bool {
        observed
            .and_then(|v| compare(v, &self.value))
            .is_some_and(|ord| self.op.holds(ord))
    }
}

/// Ordering between two scalars of compatible type; `None` otherwise.
pub fn compare(left: &Scalar, right: &Scalar) -> Option<Ordering> {
    match (left, right) {
        (Scalar::Int(a), Scalar::Int(b)) => Some(a.cmp(b)),
        (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
        (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
        _ => left.as_f64()?.partial_cmp(&right.as_f64()?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodePattern {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

impl NodePattern {
    pub fn label(label: impl Into<String>) -> Self {
        NodePattern {
            label: Some(label.into()),
            predicates: Vec::new(),
        }
    }

    pub fn any() -> Self {
        NodePattern::default()
    }

    pub fn with(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePattern {
    pub kind: EdgeKind,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

impl EdgePattern {
    pub fn new(kind: EdgeKind) -> Self {
        EdgePattern {
            kind,
            direction: Direction::Out,
            predicates: Vec::new(),
        }
    }

    pub fn with(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }
}

/// The matched node must have at least one edge satisfying `edge` whose
/// far end satisfies `neighbor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub edge: EdgePattern,
    #[serde(default)]
    pub neighbor: NodePattern,
}

/// Number of distinct neighbours reached through matching edges, compared
/// against `count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountConstraint {
    pub edge: EdgePattern,
    #[serde(default)]
    pub neighbor: NodePattern,
    pub op: CmpOp,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatternQuery {
    pub node: NodePattern,
    #[serde(default)]
    pub hops: Vec<Hop>,
    #[serde(default)]
    pub counts: Vec<CountConstraint>,
}

impl PatternQuery {
    pub fn for_label(label: impl Into<String>) -> Self {
        PatternQuery {
            node: NodePattern::label(label),
            ..Default::default()
        }
    }

    /// Every attribute name the query reads.
    pub fn attribute_names(&self) -> BTreeSet<&str> {
        let mut names: BTreeSet<&str> = self
            .node
            .predicates
            .iter()
            .map(|p| p.attr.as_str())
            .collect();
        for h in &self.hops {
            names.extend(h.edge.predicates.iter().map(|p| p.attr.as_str()));
            names.extend(h.neighbor.predicates.iter().map(|p| p.attr.as_str()));
        }
        for c in &self.counts {
            names.extend(c.edge.predicates.iter().map(|p| p.attr.as_str()));
            names.extend(c.neighbor.predicates.iter().map(|p| p.attr.as_str()));
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding {
    pub edge_id: String,
    pub neighbor_id: String,
}

/// One result: the matched node and, per hop, the edge and neighbour used.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchRow {
    pub node_id: String,
    pub bindings: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryResult {
    pub rows: Vec<MatchRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QueryResult {
    /// Distinct matched node ids, in order.
    pub fn node_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.rows.iter().map(|r| r.node_id.as_str()).collect();
        ids.dedup();
        ids
    }
}

fn node_matches<'g>(
    seen: &mut BTreeSet<&'g str>,
    pattern: &'g NodePattern,
    node: &'g Node,
) -> bool {
    if pattern.label.as_ref().is_some_and(|l| l != &node.label) {
        return false;
    }
    preds_hold(seen, &pattern.predicates, |name| node.attr(name))
}

fn edge_matches<'g>(
    seen: &mut BTreeSet<&'g str>,
    pattern: &'g EdgePattern,
    edge: &'g Edge,
) -> bool {
    edge.kind == pattern.kind && preds_hold(seen, &pattern.predicates, |name| edge.attrs.get(name))
}

fn preds_hold<'g>(
    seen: &mut BTreeSet<&'g str>,
    preds: &'g [Predicate],
    lookup: impl Fn(&str) -> Option<&'g Scalar>,
) -> bool {
    let mut ok = true;
    for p in preds {
        let v = lookup(&p.attr);
        if v.is_some() {
            seen.insert(&p.attr);
        }
        ok &= p.test(v);
    }
    ok
}

fn neighbour_matches<'g>(
    graph: &'g Graph,
    seen: &mut BTreeSet<&'g str>,
    node: &str,
    edge_pattern: &'g EdgePattern,
    neighbour_pattern: &'g NodePattern,
) -> Vec<(&'g Edge, &'g Node)> {
    let mut out = Vec::new();
    for edge in graph.edges_from(node, edge_pattern.kind, edge_pattern.direction) {
        if !edge_matches(seen, edge_pattern, edge) {
            continue;
        }
        let Some(other) = graph.node(edge.other_end(node)) else {
            continue;
        };
        if node_matches(seen, neighbour_pattern, other) {
            out.push((edge, other));
        }
    }
    out
}

/// Whether `node` satisfies `pattern`'s label and predicates.
pub fn node_satisfies(pattern: &NodePattern, node: &Node) -> bool {
    node_matches(&mut BTreeSet::new(), pattern, node)
}

/// Edges from `node` matching `edge_pattern` whose far end matches
/// `neighbour_pattern`, in edge id order.
pub fn matching_neighbours<'a>(
    graph: &'a Graph,
    node: &str,
    edge_pattern: &'a EdgePattern,
    neighbour_pattern: &'a NodePattern,
) -> Vec<(&'a Edge, &'a Node)> {
    neighbour_matches(
        graph,
        &mut BTreeSet::new(),
        node,
        edge_pattern,
        neighbour_pattern,
    )
}

/// Evaluate `q` against a graph. Rows are sorted by node id, then by the
/// per-hop bindings; a node with several matches per hop yields one row
/// per combination.
pub fn match_pattern(graph: &Graph, q: &PatternQuery) -> QueryResult {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut rows = Vec::new();

    let candidates: Box<dyn Iterator<Item = &Node>> = match &q.node.label {
        Some(label) => Box::new(graph.nodes_with_label(label)),
        None => Box::new(graph.nodes()),
    };

    'nodes: for node in candidates {
        if !node_matches(&mut seen, &q.node, node) {
            continue;
        }
        for c in &q.counts {
            let distinct: BTreeSet<&str> =
                neighbour_matches(graph, &mut seen, &node.id, &c.edge, &c.neighbor)
                    .into_iter()
                    .map(|(_, n)| n.id.as_str())
                    .collect();
            if !c.op.holds((distinct.len() as u64).cmp(&c.count)) {
                continue 'nodes;
            }
        }
        let mut per_hop: Vec<Vec<Binding>> = Vec::with_capacity(q.hops.len());
        for h in &q.hops {
            let matches = neighbour_matches(graph, &mut seen, &node.id, &h.edge, &h.neighbor);
            if matches.is_empty() {
                continue 'nodes;
            }
            let mut b: Vec<Binding> = matches
                .into_iter()
                .map(|(e, n)| Binding {
                    edge_id: e.id.clone(),
                    neighbor_id: n.id.clone(),
                })
                .collect();
            b.sort();
            per_hop.push(b);
        }
        // Cartesian product in lexicographic order.
        let mut combos: Vec<Vec<Binding>> = vec![Vec::new()];
        for options in &per_hop {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    options.iter().map(move |b| {
                        let mut next = prefix.clone();
                        next.push(b.clone());
                        next
                    })
                })
                .collect();
        }
        rows.extend(combos.into_iter().map(|bindings| MatchRow {
            node_id: node.id.clone(),
            bindings,
        }));
    }
    rows.sort();

    let warnings = q
        .attribute_names()
        .into_iter()
        .filter(|name| !seen.contains(name))
        .map(|name| format!("attribute `{name}` not present on any evaluated element"))
        .collect();
    QueryResult { rows, warnings }
}

/// Attributes of a node or edge addressed by element id; used by callers
/// that cite evidence.
pub fn element_attr<'g>(graph: &'g Graph, element_id: &str, attr: &str) -> Option<&'g Scalar> {
    match graph.node(element_id) {
        Some(n) => n.attr(attr),
        None => graph.edge(element_id).and_then(|e| e.attrs.get(attr)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Attrs, NodeSpec};

    fn edge(
        g: &mut Graph,
        id: &str,
        kind: EdgeKind,
        from: &str,
        to: &str,
        attrs: &[(&str, Scalar)],
    ) {
        let attrs: Attrs = attrs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        g.upsert_edge(Edge {
            id: id.into(),
            kind,
            from: from.into(),
            to: to.into(),
            attrs,
        })
        .unwrap();
    }

    /// Hall 2 with three racks: R1 single-fed and hot, R2 dual-fed, R3 single-fed and cool.
    fn hall_two() -> Graph {
        let mut g = Graph::new();
        g.upsert_node(NodeSpec::new("hall:2", "Hall").with("name", "2"))
            .unwrap();
        for (id, t) in [("R1", 88.0), ("R2", 91.0), ("R3", 40.0)] {
            g.upsert_node(NodeSpec::new(id, "Rack").with("temp_f", t))
                .unwrap();
            edge(
                &mut g,
                &format!("loc-{id}"),
                EdgeKind::LocatedIn,
                id,
                "hall:2",
                &[],
            );
        }
        for pdu in ["PDU-A", "PDU-B"] {
            g.upsert_node(NodeSpec::new(pdu, "PDU")).unwrap();
        }
        edge(&mut g, "f1", EdgeKind::PoweredBy, "R1", "PDU-A", &[]);
        edge(&mut g, "f2a", EdgeKind::PoweredBy, "R2", "PDU-A", &[]);
        edge(&mut g, "f2b", EdgeKind::PoweredBy, "R2", "PDU-B", &[]);
        edge(&mut g, "f3", EdgeKind::PoweredBy, "R3", "PDU-B", &[]);
        g
    }

    fn hall_query() -> PatternQuery {
        PatternQuery {
            node: NodePattern::label("Rack").with(Predicate::new("temp_f", CmpOp::Gt, 85i64)),
            hops: vec![Hop {
                edge: EdgePattern::new(EdgeKind::LocatedIn),
                neighbor: NodePattern::label("Hall").with(Predicate::new("name", CmpOp::Eq, "2")),
            }],
            counts: vec![CountConstraint {
                edge: EdgePattern::new(EdgeKind::PoweredBy),
                neighbor: NodePattern::label("PDU"),
                op: CmpOp::Eq,
                count: 1,
            }],
        }
    }

    #[test]
    fn hot_single_fed_racks_in_hall_two() {
        let r = match_pattern(&hall_two(), &hall_query());
        assert_eq!(r.node_ids(), vec!["R1"]);
        assert_eq!(
            r.rows[0].bindings,
            vec![Binding {
                edge_id: "loc-R1".into(),
                neighbor_id: "hall:2".into()
            }]
        );
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn empty_graph_empty_result() {
        let r = match_pattern(&Graph::new(), &hall_query());
        assert!(r.rows.is_empty());
    }

    #[test]
    fn unknown_attribute_warns() {
        let q = PatternQuery {
            node: NodePattern::label("Rack").with(Predicate::new("humidity", CmpOp::Gt, 1i64)),
            ..Default::default()
        };
        let r = match_pattern(&hall_two(), &q);
        assert!(r.rows.is_empty());
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("humidity"));
    }

    #[test]
    fn mixed_numeric_comparison_and_type_mismatch() {
        assert_eq!(
            compare(&Scalar::Int(3), &Scalar::Float(2.5)),
            Some(Ordering::Greater)
        );
        assert_eq!(compare(&Scalar::from("3"), &Scalar::Int(3)), None);
        assert!(!Predicate::new("x", CmpOp::Ne, 3i64).test(Some(&Scalar::from("a"))));
        assert!(!Predicate::new("x", CmpOp::Ne, 3i64).test(None));
        assert!(!Predicate::new("x", CmpOp::Le, f64::NAN).test(Some(&Scalar::Float(1.0))));
    }

    #[test]
    fn connected_to_matches_either_direction() {
        let mut g = Graph::new();
        g.upsert_node(NodeSpec::new("S", "Switch")).unwrap();
        g.upsert_node(NodeSpec::new("R", "Rack")).unwrap();
        edge(
            &mut g,
            "c",
            EdgeKind::ConnectedTo,
            "S",
            "R",
            &[("bandwidth_gbps", Scalar::Int(50))],
        );
        let q = PatternQuery {
            hops: vec![Hop {
                edge: EdgePattern::new(EdgeKind::ConnectedTo).with(Predicate::new(
                    "bandwidth_gbps",
                    CmpOp::Lt,
                    100i64,
                )),
                neighbor: NodePattern::any(),
            }],
            ..PatternQuery::for_label("Rack")
        };
        assert_eq!(match_pattern(&g, &q).node_ids(), vec!["R"]);
    }

    #[test]
    fn multiple_hop_matches_yield_product_rows() {
        let g = hall_two();
        let q = PatternQuery {
            hops: vec![Hop {
                edge: EdgePattern::new(EdgeKind::PoweredBy),
                neighbor: NodePattern::label("PDU"),
            }],
            ..PatternQuery::for_label("Rack")
        };
        let r = match_pattern(&g, &q);
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.node_ids(), vec!["R1", "R2", "R3"]);
    }

    #[test]
    fn query_json_round_trip() {
        let q = hall_query();
        let text = serde_json::to_string(&q).unwrap();
        assert!(text.contains("\"op\":\">\""));
        assert_eq!(serde_json::from_str::<PatternQuery>(&text).unwrap(), q);
    }
}

//! Typed property graph with a structural layer (topology, containment,
//! declared attributes) and a state layer (timestamped telemetry).
//!
//! Writers go through [`GraphStore`]; readers take a [`GraphView`], an
//! immutable snapshot tagged with the commit sequence it reflects.

mod ingest;
mod query;
mod traverse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ingest::{connection_edge_id, hall_node_id, ingest_udcp, zone_node_id, GraphDelta};
pub use query::{
    compare, element_attr, match_pattern, matching_neighbours, node_satisfies, Binding, CmpOp,
    CountConstraint, Direction, EdgePattern, Hop, MatchRow, NodePattern, PatternQuery, Predicate,
    QueryResult,
};
pub use traverse::{traverse, DepthRange, Reached, Subgraph, MAX_TRAVERSAL_DEPTH};

/// Attribute value. Restricted to four scalar types so that every
/// comparison predicate is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(i) => Some(*i as f64),
            Scalar::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Convert a JSON scalar; arrays, objects and null have no scalar form.
    pub fn from_json(v: &serde_json::Value) -> Option<Scalar> {
        match v {
            serde_json::Value::Bool(b) => Some(Scalar::Bool(*b)),
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(Scalar::Int)
                .or_else(|| n.as_f64().map(Scalar::Float)),
            serde_json::Value::String(s) => Some(Scalar::Str(s.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Str(s) => write!(f, "'{s}'"),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_string())
    }
}

impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Str(v)
    }
}

/// Milliseconds on the simulation or wall clock.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1000.0).round() as i64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

pub type Attrs = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValue {
    pub value: Scalar,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub structural: Attrs,
    #[serde(default)]
    pub state: BTreeMap<String, StateValue>,
}

impl Node {
    /// Latest state value if present, otherwise the structural attribute.
    pub fn attr(&self, name: &str) -> Option<&Scalar> {
        self.state
            .get(name)
            .map(|s| &s.value)
            .or_else(|| self.structural.get(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    ConnectedTo,
    PoweredBy,
    LocatedIn,
    Hosts,
    DependsOn,
    CooledBy,
    SecuredBy,
    PartOf,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 8] = [
        EdgeKind::ConnectedTo,
        EdgeKind::PoweredBy,
        EdgeKind::LocatedIn,
        EdgeKind::Hosts,
        EdgeKind::DependsOn,
        EdgeKind::CooledBy,
        EdgeKind::SecuredBy,
        EdgeKind::PartOf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::ConnectedTo => "CONNECTED_TO",
            EdgeKind::PoweredBy => "POWERED_BY",
            EdgeKind::LocatedIn => "LOCATED_IN",
            EdgeKind::Hosts => "HOSTS",
            EdgeKind::DependsOn => "DEPENDS_ON",
            EdgeKind::CooledBy => "COOLED_BY",
            EdgeKind::SecuredBy => "SECURED_BY",
            EdgeKind::PartOf => "PART_OF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }

    /// CONNECTED_TO is stored with a direction but matched both ways.
    pub fn is_symmetric(self) -> bool {
        self == EdgeKind::ConnectedTo
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub kind: EdgeKind,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Edge {
    pub fn other_end(&self, node: &str) -> &str {
        if self.from == node {
            &self.to
        } else {
            &self.from
        }
    }
}

/// Input to a structural upsert: identity, label and declared attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub label: String,
    pub structural: Attrs,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        NodeSpec {
            id: id.into(),
            label: label.into(),
            structural: Attrs::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<Scalar>) -> Self {
        self.structural.insert(name.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub node_id: String,
    pub attrs: Attrs,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge `{edge}` references missing node `{node}`")]
    DanglingEdge { edge: String, node: String },
    #[error("time regression on `{node}.{attr}`: {given} is before {last}")]
    TimeRegression {
        node: String,
        attr: String,
        last: Timestamp,
        given: Timestamp,
    },
    #[error("empty identifier or label")]
    EmptyIdentifier,
    #[error("invalid depth range {min}..{max} (must satisfy 1 <= min <= max <= {limit})")]
    InvalidDepth { min: u32, max: u32, limit: u32 },
}

/// The graph itself: nodes and edges plus adjacency and label indexes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<String, Edge>,
    out_adj: BTreeMap<String, BTreeSet<String>>,
    in_adj: BTreeMap<String, BTreeSet<String>>,
    by_label: BTreeMap<String, BTreeSet<String>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Nodes carrying `label`, in id order.
    pub fn nodes_with_label<'a>(&'a self, label: &str) -> impl Iterator<Item = &'a Node> + 'a {
        self.by_label
            .get(label)
            .into_iter()
            .flat_map(|ids| ids.iter())
            .filter_map(|id| self.nodes.get(id))
    }

    pub fn out_edges<'a>(&'a self, node: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.out_adj
            .get(node)
            .into_iter()
            .flatten()
            .filter_map(|id| self.edges.get(id))
    }

    pub fn in_edges<'a>(&'a self, node: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.in_adj
            .get(node)
            .into_iter()
            .flatten()
            .filter_map(|id| self.edges.get(id))
    }

    /// Edges of `kind` leaving `node`; symmetric kinds also yield incoming
    /// edges. Each edge appears once, in id order.
    pub fn edges_from<'a>(
        &'a self,
        node: &str,
        kind: EdgeKind,
        direction: Direction,
    ) -> Vec<&'a Edge> {
        let direction = if kind.is_symmetric() {
            Direction::Both
        } else {
            direction
        };
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            ids.extend(
                self.out_edges(node)
                    .filter(|e| e.kind == kind)
                    .map(|e| e.id.as_str()),
            );
        }
        if matches!(direction, Direction::In | Direction::Both) {
            ids.extend(
                self.in_edges(node)
                    .filter(|e| e.kind == kind)
                    .map(|e| e.id.as_str()),
            );
        }
        ids.into_iter().map(|id| &self.edges[id]).collect()
    }

    /// Insert a node or merge structural attributes into an existing one.
    /// State attributes are never touched.
    pub fn upsert_node(&mut self, spec: NodeSpec) -> Result<String, GraphError> {
        if spec.id.is_empty() || spec.label.is_empty() {
            return Err(GraphError::EmptyIdentifier);
        }
        let id = spec.id.clone();
        match self.nodes.get_mut(&spec.id) {
            Some(node) => {
                if node.label != spec.label {
                    if let Some(set) = self.by_label.get_mut(&node.label) {
                        set.remove(&node.id);
                    }
                    self.by_label
                        .entry(spec.label.clone())
                        .or_default()
                        .insert(id.clone());
                    node.label = spec.label;
                }
                node.structural.extend(spec.structural);
            }
            None => {
                self.by_label
                    .entry(spec.label.clone())
                    .or_default()
                    .insert(id.clone());
                self.nodes.insert(
                    id.clone(),
                    Node {
                        id: id.clone(),
                        label: spec.label,
                        structural: spec.structural,
                        state: BTreeMap::new(),
                    },
                );
            }
        }
        Ok(id)
    }

    /// Replace all structural attributes of a node, keeping its state.
    pub fn replace_structural(&mut self, spec: NodeSpec) -> Result<String, GraphError> {
        if let Some(node) = self.nodes.get_mut(&spec.id) {
            node.structural.clear();
        }
        self.upsert_node(spec)
    }

    /// Insert an edge or update an existing one (endpoints and kind are
    /// replaced, attributes merged).
    pub fn upsert_edge(&mut self, edge: Edge) -> Result<String, GraphError> {
        if edge.id.is_empty() {
            return Err(GraphError::EmptyIdentifier);
        }
        for end in [&edge.from, &edge.to] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::DanglingEdge {
                    edge: edge.id.clone(),
                    node: end.clone(),
                });
            }
        }
        let id = edge.id.clone();
        let merged = match self.remove_edge(&id) {
            Some(mut old) => {
                old.kind = edge.kind;
                old.from = edge.from;
                old.to = edge.to;
                old.attrs.extend(edge.attrs);
                old
            }
            None => edge,
        };
        self.out_adj
            .entry(merged.from.clone())
            .or_default()
            .insert(id.clone());
        self.in_adj
            .entry(merged.to.clone())
            .or_default()
            .insert(id.clone());
        self.edges.insert(id.clone(), merged);
        Ok(id)
    }

    pub fn remove_edge(&mut self, id: &str) -> Option<Edge> {
        let edge = self.edges.remove(id)?;
        if let Some(set) = self.out_adj.get_mut(&edge.from) {
            set.remove(id);
        }
        if let Some(set) = self.in_adj.get_mut(&edge.to) {
            set.remove(id);
        }
        Some(edge)
    }

    /// Remove a node together with every incident edge.
    pub fn remove_node(&mut self, id: &str) -> Option<Node> {
        let node = self.nodes.remove(id)?;
        let incident: Vec<String> = self
            .out_adj
            .remove(id)
            .into_iter()
            .flatten()
            .chain(self.in_adj.remove(id).into_iter().flatten())
            .collect();
        for e in incident {
            self.remove_edge(&e);
        }
        if let Some(set) = self.by_label.get_mut(&node.label) {
            set.remove(id);
        }
        Some(node)
    }

    fn check_state_update(
        &self,
        node_id: &str,
        attrs: &Attrs,
        ts: Timestamp,
    ) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| GraphError::UnknownNode(node_id.to_string()))?;
        for name in attrs.keys() {
            if let Some(prev) = node.state.get(name) {
                if ts < prev.ts {
                    return Err(GraphError::TimeRegression {
                        node: node_id.to_string(),
                        attr: name.clone(),
                        last: prev.ts,
                        given: ts,
                    });
                }
            }
        }
        Ok(())
    }

    /// Record telemetry on a node. Timestamps per attribute never go
    /// backwards; an equal timestamp overwrites.
    pub fn apply_state_update(
        &mut self,
        node_id: &str,
        attrs: Attrs,
        ts: Timestamp,
    ) -> Result<(), GraphError> {
        self.check_state_update(node_id, &attrs, ts)?;
        let node = self.nodes.get_mut(node_id).expect("checked");
        for (name, value) in attrs {
            node.state.insert(name, StateValue { value, ts });
        }
        Ok(())
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Graph, GraphError> {
        let mut g = Graph::new();
        for node in doc.nodes {
            let state = node.state.clone();
            let id = g.upsert_node(NodeSpec {
                id: node.id,
                label: node.label,
                structural: node.structural,
            })?;
            g.nodes.get_mut(&id).expect("just inserted").state = state;
        }
        for edge in doc.edges {
            g.upsert_edge(edge)?;
        }
        Ok(g)
    }
}

/// Export form: `{"nodes":[...],"edges":[...]}` in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl GraphDocument {
    pub fn to_canonical_string(&self) -> String {
        crate::canonical::to_canonical_string(self).expect("graph documents always encode")
    }
}

/// An immutable snapshot of the graph at one commit.
#[derive(Debug, Clone)]
pub struct GraphView {
    graph: Arc<Graph>,
    seq: u64,
}

impl GraphView {
    pub fn of(graph: Graph) -> Self {
        GraphView {
            graph: Arc::new(graph),
            seq: 0,
        }
    }

    /// Commit sequence number this view reflects.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

impl Deref for GraphView {
    type Target = Graph;

    fn deref(&self) -> &Graph {
        &self.graph
    }
}

/// Single-writer owner of the live graph. Every successful write is one
/// commit and bumps the sequence number.
#[derive(Debug, Clone, Default)]
pub struct GraphStore {
    graph: Arc<Graph>,
    seq: u64,
}

impl GraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_graph(graph: Graph) -> Self {
        GraphStore {
            graph: Arc::new(graph),
            seq: 0,
        }
    }

    pub fn view(&self) -> GraphView {
        GraphView {
            graph: Arc::clone(&self.graph),
            seq: self.seq,
        }
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    // Single-step writes validate before mutating, so mutating in place is
    // safe; the graph is only copied when a reader still holds a view.
    fn write(&mut self) -> &mut Graph {
        self.seq += 1;
        Arc::make_mut(&mut self.graph)
    }

    pub fn upsert_node(&mut self, spec: NodeSpec) -> Result<String, GraphError> {
        if spec.id.is_empty() || spec.label.is_empty() {
            return Err(GraphError::EmptyIdentifier);
        }
        self.write().upsert_node(spec)
    }

    pub fn upsert_edge(&mut self, edge: Edge) -> Result<String, GraphError> {
        for end in [&edge.from, &edge.to] {
            if self.graph.node(end).is_none() {
                return Err(GraphError::DanglingEdge {
                    edge: edge.id.clone(),
                    node: end.clone(),
                });
            }
        }
        if edge.id.is_empty() {
            return Err(GraphError::EmptyIdentifier);
        }
        self.write().upsert_edge(edge)
    }

    pub fn apply_state_update(
        &mut self,
        node_id: &str,
        attrs: Attrs,
        ts: Timestamp,
    ) -> Result<(), GraphError> {
        self.graph.check_state_update(node_id, &attrs, ts)?;
        self.write().apply_state_update(node_id, attrs, ts)
    }

    /// Apply several state updates as one commit; nothing is written if
    /// any update is invalid.
    pub fn apply_state_batch(&mut self, updates: &[StateUpdate]) -> Result<(), GraphError> {
        // Validate against the state the batch itself builds up.
        let mut last: BTreeMap<(&str, &str), Timestamp> = BTreeMap::new();
        for u in updates {
            let node = self
                .graph
                .node(&u.node_id)
                .ok_or_else(|| GraphError::UnknownNode(u.node_id.clone()))?;
            for name in u.attrs.keys() {
                let prev = last
                    .get(&(u.node_id.as_str(), name.as_str()))
                    .copied()
                    .or_else(|| node.state.get(name).map(|s| s.ts));
                if let Some(prev) = prev {
                    if u.ts < prev {
                        return Err(GraphError::TimeRegression {
                            node: u.node_id.clone(),
                            attr: name.clone(),
                            last: prev,
                            given: u.ts,
                        });
                    }
                }
                last.insert((&u.node_id, name), u.ts);
            }
        }
        let g = self.write();
        for u in updates {
            g.apply_state_update(&u.node_id, u.attrs.clone(), u.ts)
                .expect("validated");
        }
        Ok(())
    }

    /// Run `f` on a private copy and publish it only if `f` succeeds.
    pub fn transaction<T, E>(
        &mut self,
        f: impl FnOnce(&mut Graph) -> Result<T, E>,
    ) -> Result<T, E> {
        let mut draft = (*self.graph).clone();
        let out = f(&mut draft)?;
        self.graph = Arc::new(draft);
        self.seq += 1;
        Ok(out)
    }
}

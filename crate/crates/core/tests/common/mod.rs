//! Random inputs and brute-force reference interpreters shared by the
//! property tests and the acceptance suite.
//!
//! The interpreters scan every node and edge of the graph directly instead
//! of going through adjacency or label indexes, so they share no code with
//! the engines they check.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use dcim_core::graph::{
    Attrs, Binding, CmpOp, CountConstraint, Direction, Edge, EdgeKind, EdgePattern, Graph,
    GraphView, Hop, MatchRow, Node, NodePattern, NodeSpec, PatternQuery, Predicate, Scalar,
    Timestamp,
};
use dcim_core::reasoning::{
    Anomaly, Condition, Consequence, Evidence, Explanation, ProposedState, Rule, RuleOutcome,
};
use dcim_core::udcp::{
    AsBuiltStore, Command, ConnectionRecord, DeviceRecord, Filter, Location, MediaKind, MediaSpec,
    PanelRecord, PathSide, PortEndpoint, UdcpMessage, View,
};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Random graphs, queries and rules
// ---------------------------------------------------------------------------

const LABELS: [&str; 4] = ["Rack", "PDU", "Switch", "Pump"];
const KINDS: [EdgeKind; 3] = [
    EdgeKind::ConnectedTo,
    EdgeKind::PoweredBy,
    EdgeKind::CooledBy,
];
const NODE_ATTRS: [&str; 4] = ["power_kw", "temp_c", "name", "redundant"];
const OPS: [CmpOp; 6] = [
    CmpOp::Eq,
    CmpOp::Ne,
    CmpOp::Lt,
    CmpOp::Gt,
    CmpOp::Le,
    CmpOp::Ge,
];

fn random_value(rng: &mut impl Rng, attr: &str) -> Scalar {
    match attr {
        "power_kw" if rng.gen_bool(0.5) => Scalar::Int(rng.gen_range(0..60)),
        "power_kw" | "temp_c" | "bandwidth_gbps" => {
            Scalar::Float(f64::from(rng.gen_range(0..120u32)) / 2.0)
        }
        "name" => Scalar::Str(["a", "b", "c"].choose(rng).unwrap().to_string()),
        _ => Scalar::Bool(rng.gen_bool(0.5)),
    }
}

/// A graph of at most `max_nodes` nodes with random labels, structural and
/// state attributes, and edges of three kinds (self loops included).
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> Graph {
    let mut g = Graph::new();
    let n = rng.gen_range(0..=max_nodes);
    for i in 0..n {
        let mut spec = NodeSpec::new(format!("n{i:02}"), *LABELS.choose(rng).unwrap());
        for attr in NODE_ATTRS {
            if rng.gen_bool(0.6) {
                spec = spec.with(attr, random_value(rng, attr));
            }
        }
        g.upsert_node(spec).unwrap();
        if rng.gen_bool(0.3) {
            let attr = NODE_ATTRS[rng.gen_range(0..2)];
            let attrs = Attrs::from([(attr.to_string(), random_value(rng, attr))]);
            g.apply_state_update(&format!("n{i:02}"), attrs, Timestamp(1))
                .unwrap();
        }
    }
    if n > 0 {
        for j in 0..rng.gen_range(0..=2 * n) {
            let mut attrs = Attrs::new();
            if rng.gen_bool(0.6) {
                attrs.insert("bandwidth_gbps".into(), random_value(rng, "bandwidth_gbps"));
            }
            g.upsert_edge(Edge {
                id: format!("e{j:03}"),
                kind: *KINDS.choose(rng).unwrap(),
                from: format!("n{:02}", rng.gen_range(0..n)),
                to: format!("n{:02}", rng.gen_range(0..n)),
                attrs,
            })
            .unwrap();
        }
    }
    g
}

fn random_predicate(rng: &mut impl Rng, attrs: &[&str]) -> Predicate {
    let attr = *attrs.choose(rng).unwrap();
    // Occasionally compare against a value of the wrong type.
    let value = if rng.gen_bool(0.1) {
        random_value(rng, "name")
    } else {
        random_value(rng, attr)
    };
    Predicate {
        attr: attr.to_string(),
        op: *OPS.choose(rng).unwrap(),
        value,
    }
}

fn random_node_pattern(rng: &mut impl Rng) -> NodePattern {
    NodePattern {
        label: rng
            .gen_bool(0.6)
            .then(|| LABELS.choose(rng).unwrap().to_string()),
        predicates: (0..rng.gen_range(0..=2))
            .map(|_| random_predicate(rng, &NODE_ATTRS))
            .collect(),
    }
}

fn random_edge_pattern(rng: &mut impl Rng) -> EdgePattern {
    EdgePattern {
        kind: *KINDS.choose(rng).unwrap(),
        direction: *[Direction::Out, Direction::In, Direction::Both]
            .choose(rng)
            .unwrap(),
        predicates: (0..rng.gen_range(0..=1))
            .map(|_| random_predicate(rng, &["bandwidth_gbps"]))
            .collect(),
    }
}

fn random_hop(rng: &mut impl Rng) -> Hop {
    Hop {
        edge: random_edge_pattern(rng),
        neighbor: random_node_pattern(rng),
    }
}

fn random_count(rng: &mut impl Rng) -> CountConstraint {
    CountConstraint {
        edge: random_edge_pattern(rng),
        neighbor: random_node_pattern(rng),
        op: *OPS.choose(rng).unwrap(),
        count: rng.gen_range(0..4),
    }
}

pub fn random_query(rng: &mut impl Rng) -> PatternQuery {
    PatternQuery {
        node: random_node_pattern(rng),
        hops: (0..rng.gen_range(0..=2)).map(|_| random_hop(rng)).collect(),
        counts: (0..rng.gen_range(0..=1))
            .map(|_| random_count(rng))
            .collect(),
    }
}

pub fn random_rules(rng: &mut impl Rng) -> Vec<Rule> {
    (0..rng.gen_range(1..=4))
        .map(|i| {
            let conditions = (0..rng.gen_range(1..=3))
                .map(|_| match rng.gen_range(0..3) {
                    0 => Condition::Attr(random_predicate(rng, &NODE_ATTRS)),
                    1 => Condition::EdgeCount(random_count(rng)),
                    _ => Condition::HasEdge(random_hop(rng)),
                })
                .collect();
            let consequence = if rng.gen_bool(0.7) {
                Consequence::RaiseAnomaly {
                    kind: format!("kind-{i}"),
                }
            } else {
                Consequence::SetState {
                    name: "flag".into(),
                    value: Scalar::Bool(true),
                }
            };
            let target_label = if rng.gen_bool(0.3) {
                "*".to_string()
            } else {
                LABELS.choose(rng).unwrap().to_string()
            };
            Rule {
                rule_id: format!("rule-{}", 9 - i),
                target_label,
                conditions,
                consequence,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Brute-force interpreters
// ---------------------------------------------------------------------------

fn value_of<'a>(node: &'a Node, attr: &str) -> Option<&'a Scalar> {
    match node.state.get(attr) {
        Some(s) => Some(&s.value),
        None => node.structural.get(attr),
    }
}

fn order(a: &Scalar, b: &Scalar) -> Option<Ordering> {
    let num = |s: &Scalar| match s {
        Scalar::Int(i) => Some(*i as f64),
        Scalar::Float(f) => Some(*f),
        _ => None,
    };
    match (a, b) {
        (Scalar::Int(x), Scalar::Int(y)) => Some(x.cmp(y)),
        (Scalar::Str(x), Scalar::Str(y)) => Some(x.cmp(y)),
        (Scalar::Bool(x), Scalar::Bool(y)) => Some(x.cmp(y)),
        _ => num(a)?.partial_cmp(&num(b)?),
    }
}

fn op_holds(op: CmpOp, o: Ordering) -> bool {
    use Ordering::*;
    match op {
        CmpOp::Eq => o == Equal,
        CmpOp::Ne => o != Equal,
        CmpOp::Lt => o == Less,
        CmpOp::Gt => o == Greater,
        CmpOp::Le => o == Less || o == Equal,
        CmpOp::Ge => o == Greater || o == Equal,
    }
}

fn pred_ok(p: &Predicate, v: Option<&Scalar>) -> bool {
    match v.and_then(|v| order(v, &p.value)) {
        Some(o) => op_holds(p.op, o),
        None => false,
    }
}

fn node_ok(p: &NodePattern, n: &Node) -> bool {
    p.label.as_ref().is_none_or(|l| *l == n.label)
        && p.predicates
            .iter()
            .all(|q| pred_ok(q, value_of(n, &q.attr)))
}

/// Every (edge, far node) pair for `node` under `ep`/`np`, by full scan.
fn scan<'g>(
    g: &'g Graph,
    node: &str,
    ep: &EdgePattern,
    np: &NodePattern,
) -> Vec<(&'g Edge, &'g Node)> {
    let mut out: Vec<(&Edge, &Node)> = Vec::new();
    for e in g.edges() {
        if e.kind != ep.kind {
            continue;
        }
        let out_ok = e.from == node;
        let in_ok = e.to == node;
        let touches = match (e.kind == EdgeKind::ConnectedTo, ep.direction) {
            (true, _) | (false, Direction::Both) => out_ok || in_ok,
            (false, Direction::Out) => out_ok,
            (false, Direction::In) => in_ok,
        };
        if !touches
            || !ep
                .predicates
                .iter()
                .all(|p| pred_ok(p, e.attrs.get(&p.attr)))
        {
            continue;
        }
        let far = if e.from == node { &e.to } else { &e.from };
        let Some(far) = g.nodes().find(|n| &n.id == far) else {
            continue;
        };
        if node_ok(np, far) {
            out.push((e, far));
        }
    }
    out.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    out
}

fn distinct_far(m: &[(&Edge, &Node)]) -> u64 {
    m.iter()
        .map(|(_, n)| n.id.as_str())
        .collect::<BTreeSet<_>>()
        .len() as u64
}

fn product(
    node: &str,
    per_hop: &[Vec<Binding>],
    prefix: &mut Vec<Binding>,
    rows: &mut Vec<MatchRow>,
) {
    match per_hop.split_first() {
        None => rows.push(MatchRow {
            node_id: node.to_string(),
            bindings: prefix.clone(),
        }),
        Some((options, rest)) => {
            for b in options {
                prefix.push(b.clone());
                product(node, rest, prefix, rows);
                prefix.pop();
            }
        }
    }
}

pub fn brute_match(g: &Graph, q: &PatternQuery) -> Vec<MatchRow> {
    let mut rows = Vec::new();
    for n in g.nodes() {
        if !node_ok(&q.node, n) {
            continue;
        }
        if !q.counts.iter().all(|c| {
            op_holds(
                c.op,
                distinct_far(&scan(g, &n.id, &c.edge, &c.neighbor)).cmp(&c.count),
            )
        }) {
            continue;
        }
        let per_hop: Vec<Vec<Binding>> = q
            .hops
            .iter()
            .map(|h| {
                scan(g, &n.id, &h.edge, &h.neighbor)
                    .into_iter()
                    .map(|(e, f)| Binding {
                        edge_id: e.id.clone(),
                        neighbor_id: f.id.clone(),
                    })
                    .collect()
            })
            .collect();
        product(&n.id, &per_hop, &mut Vec::new(), &mut rows);
    }
    rows.sort();
    rows
}

fn rule_evidence(g: &Graph, rule: &Rule, n: &Node) -> Option<Vec<Evidence>> {
    if rule.target_label != "*" && rule.target_label != n.label {
        return None;
    }
    let mut ev = Vec::new();
    for c in &rule.conditions {
        match c {
            Condition::Attr(p) => {
                let v = value_of(n, &p.attr);
                if !pred_ok(p, v) {
                    return None;
                }
                ev.push(Evidence::new(
                    n.id.clone(),
                    p.attr.clone(),
                    v.unwrap().clone(),
                ));
            }
            Condition::EdgeCount(cc) => {
                let m = scan(g, &n.id, &cc.edge, &cc.neighbor);
                let d = distinct_far(&m);
                if !op_holds(cc.op, d.cmp(&cc.count)) {
                    return None;
                }
                for (e, f) in &m {
                    ev.push(Evidence::new(e.id.clone(), "kind", e.kind.as_str()));
                    ev.push(Evidence::new(e.id.clone(), "to", f.id.as_str()));
                }
                ev.push(Evidence::new(
                    n.id.clone(),
                    format!("{}.count", cc.edge.kind.as_str()),
                    Scalar::Int(d as i64),
                ));
            }
            Condition::HasEdge(h) => {
                let m = scan(g, &n.id, &h.edge, &h.neighbor);
                let (e, f) = m.first()?;
                ev.push(Evidence::new(e.id.clone(), "kind", e.kind.as_str()));
                for p in &h.edge.predicates {
                    ev.push(Evidence::new(
                        e.id.clone(),
                        p.attr.clone(),
                        e.attrs[&p.attr].clone(),
                    ));
                }
                ev.push(Evidence::new(e.id.clone(), "to", f.id.as_str()));
                for p in &h.neighbor.predicates {
                    ev.push(Evidence::new(
                        f.id.clone(),
                        p.attr.clone(),
                        value_of(f, &p.attr).unwrap().clone(),
                    ));
                }
            }
        }
    }
    Some(ev)
}

pub fn brute_rules(view: &GraphView, rules: &[Rule], at: Timestamp) -> RuleOutcome {
    let mut nodes: Vec<&Node> = view.nodes().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut sorted: Vec<&Rule> = rules.iter().collect();
    sorted.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
    let mut out = RuleOutcome::default();
    for n in nodes {
        for r in &sorted {
            let Some(evidence) = rule_evidence(view, r, n) else {
                continue;
            };
            let provenance = Explanation {
                source: r.rule_id.clone(),
                commit_seq: view.seq(),
                evidence,
            };
            match &r.consequence {
                Consequence::RaiseAnomaly { kind } => out.anomalies.push(Anomaly {
                    anomaly_id: format!("{}:{}", r.rule_id, n.id),
                    kind: kind.clone(),
                    subject: n.id.clone(),
                    provenance,
                    detected_at: at,
                }),
                Consequence::SetState { name, value } => out.state_updates.push(ProposedState {
                    node_id: n.id.clone(),
                    name: name.clone(),
                    value: value.clone(),
                    provenance,
                }),
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random UDCP traffic
// ---------------------------------------------------------------------------

const DEVICES: usize = 6;

fn device(rng: &mut impl Rng, i: usize) -> DeviceRecord {
    let panel = |id: &str, ru: u32, view: View| PanelRecord {
        panel_id: id.into(),
        elevation_ru: ru,
        view,
        port_count: 4,
        port_type: "LC".into(),
        extra: Default::default(),
    };
    let mut panels = vec![panel("p1", 1, View::Front)];
    if rng.gen_bool(0.5) {
        panels.push(panel("p2", 2, View::Rear));
    }
    DeviceRecord {
        device_id: format!("dev{i}"),
        device_type: ["Rack", "Switch", "PDU"].choose(rng).unwrap().to_string(),
        location: Location {
            hall: ["1", "2"].choose(rng).unwrap().to_string(),
            row: "A".into(),
            position: format!("{i}"),
        },
        panels,
        extra: Default::default(),
    }
}

fn random_device(rng: &mut impl Rng) -> DeviceRecord {
    let i = rng.gen_range(0..DEVICES);
    device(rng, i)
}

fn endpoint(rng: &mut impl Rng) -> PortEndpoint {
    PortEndpoint::new(
        format!("dev{}", rng.gen_range(0..DEVICES)),
        rng.gen_range(1..=2),
        *[View::Front, View::Rear].choose(rng).unwrap(),
        *[PathSide::A, PathSide::B].choose(rng).unwrap(),
        // Port 5 is out of range on every panel.
        rng.gen_range(1..=5),
    )
}

fn connection(rng: &mut impl Rng) -> ConnectionRecord {
    let mut media =
        MediaSpec::of_kind(*[MediaKind::Network, MediaKind::Power].choose(rng).unwrap());
    media.length_m = Some(f64::from(rng.gen_range(1..30u32)));
    ConnectionRecord {
        a: endpoint(rng),
        b: endpoint(rng),
        media,
        label: None,
        extra: Default::default(),
    }
}

/// A mix of valid and invalid messages over a small device pool, biased so
/// that a good share applies.
pub fn random_udcp_message(rng: &mut impl Rng, store: &AsBuiltStore, txid: usize) -> UdcpMessage {
    let command = *[
        Command::Create,
        Command::Create,
        Command::Update,
        Command::Delete,
        Command::Retrieve,
    ]
    .choose(rng)
    .unwrap();
    let mut msg = UdcpMessage::new(command, format!("tx{txid}"));
    let existing: Vec<ConnectionRecord> = store.connections().cloned().collect();
    match command {
        Command::Create => {
            for _ in 0..rng.gen_range(0..=2) {
                msg.devices.push(random_device(rng));
            }
            for _ in 0..rng.gen_range(0..=3) {
                msg.connections.push(connection(rng));
            }
        }
        Command::Update => {
            if rng.gen_bool(0.5) {
                msg.devices.push(random_device(rng));
            }
            if let Some(c) = existing.choose(rng) {
                let mut c = c.clone();
                c.label = Some(format!("relabel-{txid}"));
                msg.connections.push(c);
            } else {
                msg.connections.push(connection(rng));
            }
        }
        Command::Delete => {
            if let Some(c) = existing.choose(rng) {
                msg.connections.push(c.clone());
            }
            if rng.gen_bool(0.4) {
                msg.devices.push(random_device(rng));
            }
        }
        Command::Retrieve => {
            msg.filter = Some(Filter {
                device_id: rng
                    .gen_bool(0.3)
                    .then(|| format!("dev{}", rng.gen_range(0..DEVICES))),
                hall: None,
            });
        }
    }
    msg
}

/// Run a random sequence and check atomicity, endpoint exclusivity, replay
/// and as-built round trip. Returns (messages applied, messages rejected).
pub fn check_udcp_sequence(rng: &mut impl Rng, len: usize) -> Result<(usize, usize), String> {
    let mut live = AsBuiltStore::new();
    let mut log = Vec::new();
    let (mut applied, mut rejected) = (0, 0);
    for i in 0..len {
        let msg = random_udcp_message(rng, &live, i);
        let before = live.clone();
        let result = live.apply(&msg);
        if result.is_applied() {
            applied += 1;
            log.push(msg);
        } else {
            rejected += 1;
            if live != before {
                return Err(format!(
                    "rejected {} modified the store",
                    msg.transaction_id
                ));
            }
            if result.errors.is_empty() {
                return Err(format!(
                    "rejected {} without violations",
                    msg.transaction_id
                ));
            }
        }
        check_occupancy(&live)?;
    }
    let mut replayed = AsBuiltStore::new();
    for msg in &log {
        if !replayed.apply(msg).is_applied() {
            return Err(format!("replay rejected {}", msg.transaction_id));
        }
    }
    if replayed != live {
        return Err("replayed store differs from live store".into());
    }
    let asbuilt = live
        .retrieve(&Filter::default())
        .map_err(|e| e.to_string())?;
    let mut rebuilt = AsBuiltStore::new();
    if !rebuilt.apply(&asbuilt).is_applied() {
        return Err("as-built document does not apply to an empty store".into());
    }
    if rebuilt != live {
        return Err("as-built round trip differs from live store".into());
    }
    Ok((applied, rejected))
}

/// Each endpoint key appears in at most one connection, and the occupancy
/// index is exactly the set of connection ends.
fn check_occupancy(store: &AsBuiltStore) -> Result<(), String> {
    let mut ends: BTreeMap<String, usize> = BTreeMap::new();
    for c in store.connections() {
        for k in [c.a.key(), c.b.key()] {
            *ends.entry(k.as_str().to_string()).or_default() += 1;
        }
    }
    if let Some((k, n)) = ends.iter().find(|(_, n)| **n > 1) {
        return Err(format!("endpoint {k} used by {n} connections"));
    }
    let indexed: BTreeSet<String> = store
        .occupancy()
        .keys()
        .map(|k| k.as_str().to_string())
        .collect();
    if indexed != ends.keys().cloned().collect::<BTreeSet<_>>() {
        return Err("occupancy index out of step with connections".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Intent corpora
// ---------------------------------------------------------------------------

/// Words and symbols outside the intent grammar's vocabulary.
pub const FOREIGN_TOKENS: [&str; 20] = [
    "please", "banana", "drop", "select", "hallway", "from", "where", "delete", "table", "all",
    ";", "$", "*", "(", "@", "#", "!", "{", "|", "--",
];

/// `n` grammar-generated utterances, each with one foreign token inserted
/// at a random word boundary outside quoted literals.
pub fn foreign_token_corpus(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let (text, _) = dcim_core::reasoning::intent::generate_utterance(rng);
            let mut quoted = false;
            let mut boundaries = vec![0];
            for (i, c) in text.char_indices() {
                match c {
                    '\'' | '"' => quoted = !quoted,
                    ' ' if !quoted => boundaries.push(i),
                    _ => {}
                }
            }
            boundaries.push(text.len());
            let at = *boundaries.choose(rng).unwrap();
            let token = FOREIGN_TOKENS.choose(rng).unwrap();
            format!("{} {token} {}", &text[..at], &text[at..])
                .trim()
                .to_string()
        })
        .collect()
}

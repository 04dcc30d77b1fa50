//! Projection of committed UDCP deltas onto the graph.
//!
//! Devices become nodes labelled with their device type and located in a
//! `Hall` node (and a `Zone` node when the device declares one). Network
//! and control connections become CONNECTED_TO edges; power connections
//! become POWERED_BY edges pointing at the PDU end.

use serde::{Deserialize, Serialize};

use super::{Attrs, Edge, EdgeKind, Graph, GraphError, GraphStore, NodeSpec, Scalar};
use crate::udcp::{ConnectionRecord, Delta, DeltaOp, DeviceRecord, Extensions, MediaKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum GraphDelta {
    NodeUpserted { id: String },
    NodeRemoved { id: String },
    EdgeUpserted { id: String },
    EdgeRemoved { id: String },
}

pub fn hall_node_id(hall: &str) -> String {
    format!("hall:{hall}")
}

pub fn zone_node_id(zone: &str) -> String {
    format!("zone:{zone}")
}

pub fn connection_edge_id(c: &ConnectionRecord) -> String {
    format!("conn:{}", c.key())
}

fn located_edge_id(device: &str) -> String {
    format!("located:{device}")
}

fn zone_edge_id(device: &str) -> String {
    format!("zoned:{device}")
}

fn scalar_extras(extra: &Extensions, into: &mut Attrs) {
    for (k, v) in extra {
        if let Some(s) = Scalar::from_json(v) {
            into.insert(k.clone(), s);
        }
    }
}

/// Apply `deltas` to the graph as one commit. On error nothing is written.
pub fn ingest_udcp(
    store: &mut GraphStore,
    deltas: &[Delta],
) -> Result<Vec<GraphDelta>, GraphError> {
    store.transaction(|g| {
        let mut out = Vec::new();
        for d in deltas {
            match d {
                Delta::Device {
                    op: DeltaOp::Deleted,
                    device,
                } => {
                    if g.remove_node(&device.device_id).is_some() {
                        out.push(GraphDelta::NodeRemoved {
                            id: device.device_id.clone(),
                        });
                    }
                }
                Delta::Device { device, .. } => upsert_device(g, device, &mut out)?,
                Delta::Connection {
                    op: DeltaOp::Deleted,
                    connection,
                } => {
                    let id = connection_edge_id(connection);
                    if g.remove_edge(&id).is_some() {
                        out.push(GraphDelta::EdgeRemoved { id });
                    }
                }
                Delta::Connection { connection, .. } => upsert_connection(g, connection, &mut out)?,
            }
        }
        Ok(out)
    })
}

fn upsert_device(
    g: &mut Graph,
    d: &DeviceRecord,
    out: &mut Vec<GraphDelta>,
) -> Result<(), GraphError> {
    let mut structural = Attrs::new();
    structural.insert("hall".into(), d.location.hall.clone().into());
    structural.insert("row".into(), d.location.row.clone().into());
    structural.insert("position".into(), d.location.position.clone().into());
    structural.insert("panel_count".into(), Scalar::Int(d.panels.len() as i64));
    scalar_extras(&d.extra, &mut structural);
    g.replace_structural(NodeSpec {
        id: d.device_id.clone(),
        label: d.device_type.clone(),
        structural,
    })?;
    out.push(GraphDelta::NodeUpserted {
        id: d.device_id.clone(),
    });

    for id in [located_edge_id(&d.device_id), zone_edge_id(&d.device_id)] {
        g.remove_edge(&id);
    }
    let hall = hall_node_id(&d.location.hall);
    if g.node(&hall).is_none() {
        g.upsert_node(NodeSpec::new(&hall, "Hall").with("name", d.location.hall.as_str()))?;
        out.push(GraphDelta::NodeUpserted { id: hall.clone() });
    }
    let located = located_edge_id(&d.device_id);
    g.upsert_edge(Edge {
        id: located.clone(),
        kind: EdgeKind::LocatedIn,
        from: d.device_id.clone(),
        to: hall,
        attrs: Attrs::new(),
    })?;
    out.push(GraphDelta::EdgeUpserted { id: located });

    if let Some(zone) = d.extra.get("zone").and_then(|v| v.as_str()) {
        let zid = zone_node_id(zone);
        if g.node(&zid).is_none() {
            g.upsert_node(NodeSpec::new(&zid, "Zone").with("name", zone))?;
            out.push(GraphDelta::NodeUpserted { id: zid.clone() });
        }
        let eid = zone_edge_id(&d.device_id);
        g.upsert_edge(Edge {
            id: eid.clone(),
            kind: EdgeKind::LocatedIn,
            from: d.device_id.clone(),
            to: zid,
            attrs: Attrs::new(),
        })?;
        out.push(GraphDelta::EdgeUpserted { id: eid });
    }
    Ok(())
}

fn is_pdu(g: &Graph, id: &str) -> bool {
    g.node(id)
        .is_some_and(|n| n.label.eq_ignore_ascii_case("pdu"))
}

fn upsert_connection(
    g: &mut Graph,
    c: &ConnectionRecord,
    out: &mut Vec<GraphDelta>,
) -> Result<(), GraphError> {
    let (kind, from, to) = match c.media.kind {
        MediaKind::Power if is_pdu(g, &c.a.device_id) && !is_pdu(g, &c.b.device_id) => {
            (EdgeKind::PoweredBy, &c.b.device_id, &c.a.device_id)
        }
        MediaKind::Power => (EdgeKind::PoweredBy, &c.a.device_id, &c.b.device_id),
        MediaKind::Network | MediaKind::Control => {
            (EdgeKind::ConnectedTo, &c.a.device_id, &c.b.device_id)
        }
    };
    let mut attrs = Attrs::new();
    attrs.insert(
        "media_kind".into(),
        format!("{:?}", c.media.kind).to_lowercase().into(),
    );
    if let Some(n) = c.media.fiber_count {
        attrs.insert("fiber_count".into(), Scalar::Int(n.into()));
    }
    if let Some(s) = &c.media.connector {
        attrs.insert("connector".into(), s.clone().into());
    }
    if let Some(s) = &c.media.cable_type {
        attrs.insert("cable_type".into(), s.clone().into());
    }
    if let Some(x) = c.media.length_m {
        attrs.insert("length_m".into(), x.into());
    }
    if let Some(x) = c.media.bandwidth_gbps {
        attrs.insert("bandwidth_gbps".into(), x.into());
    }
    if let Some(s) = &c.label {
        attrs.insert("label".into(), s.clone().into());
    }
    attrs.insert("a_endpoint".into(), c.a.key().as_str().into());
    attrs.insert("b_endpoint".into(), c.b.key().as_str().into());
    scalar_extras(&c.media.extra, &mut attrs);
    scalar_extras(&c.extra, &mut attrs);

    // Updates replace the attribute set rather than merging into it.
    let id = connection_edge_id(c);
    g.remove_edge(&id);
    g.upsert_edge(Edge {
        id: id.clone(),
        kind,
        from: from.clone(),
        to: to.clone(),
        attrs,
    })?;
    out.push(GraphDelta::EdgeUpserted { id });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::udcp::{
        AsBuiltStore, Command, Location, MediaSpec, PanelRecord, PathSide, PortEndpoint,
        UdcpMessage, View,
    };

    fn device(id: &str, ty: &str, hall: &str, ru: u32) -> DeviceRecord {
        DeviceRecord {
            device_id: id.into(),
            device_type: ty.into(),
            location: Location {
                hall: hall.into(),
                row: "1".into(),
                position: "1".into(),
            },
            panels: vec![PanelRecord {
                panel_id: "PP1".into(),
                elevation_ru: ru,
                view: View::Front,
                port_count: 32,
                port_type: "MPO".into(),
                extra: Extensions::new(),
            }],
            extra: Extensions::new(),
        }
    }

    fn conn(a: (&str, u32), b: (&str, u32), kind: MediaKind) -> ConnectionRecord {
        let mut media = MediaSpec::of_kind(kind);
        if kind == MediaKind::Network {
            media.fiber_count = Some(12);
            media.bandwidth_gbps = Some(400.0);
        }
        ConnectionRecord {
            a: PortEndpoint::new(a.0, a.1, View::Front, PathSide::A, 1),
            b: PortEndpoint::new(b.0, b.1, View::Front, PathSide::A, 1),
            media,
            label: None,
            extra: Extensions::new(),
        }
    }

    fn applied(store: &mut AsBuiltStore, graph: &mut GraphStore, msg: UdcpMessage) {
        let r = store.apply(&msg);
        assert!(r.is_applied(), "{:?}", r.errors);
        ingest_udcp(graph, &r.deltas).unwrap();
    }

    #[test]
    fn network_link_becomes_connected_to() {
        let mut asb = AsBuiltStore::new();
        let mut g = GraphStore::new();
        let mut m = UdcpMessage::new(Command::Create, "t");
        m.devices = vec![
            device("RackA", "Rack", "2", 20),
            device("Spine2", "Switch", "2", 10),
        ];
        m.connections = vec![conn(("RackA", 20), ("Spine2", 10), MediaKind::Network)];
        applied(&mut asb, &mut g, m.clone());

        let edge_id = connection_edge_id(&m.connections[0]);
        let e = g.graph().edge(&edge_id).unwrap();
        assert_eq!(e.kind, EdgeKind::ConnectedTo);
        assert_eq!(e.attrs["fiber_count"], Scalar::Int(12));
        assert_eq!(g.graph().node("RackA").unwrap().label, "Rack");
        assert_eq!(
            g.graph()
                .edges_from("hall:2", EdgeKind::LocatedIn, super::super::Direction::In)
                .len(),
            2
        );
    }

    #[test]
    fn power_whip_points_at_pdu() {
        let mut asb = AsBuiltStore::new();
        let mut g = GraphStore::new();
        let mut m = UdcpMessage::new(Command::Create, "t");
        m.devices = vec![
            device("PDU-A", "PDU", "2", 1),
            device("R12", "Rack", "2", 1),
        ];
        m.connections = vec![conn(("PDU-A", 1), ("R12", 1), MediaKind::Power)];
        applied(&mut asb, &mut g, m);
        let e = g
            .graph()
            .edges()
            .find(|e| e.kind == EdgeKind::PoweredBy)
            .unwrap();
        assert_eq!((e.from.as_str(), e.to.as_str()), ("R12", "PDU-A"));
    }

    #[test]
    fn delete_keeps_nodes_and_update_relocates() {
        let mut asb = AsBuiltStore::new();
        let mut g = GraphStore::new();
        let mut m = UdcpMessage::new(Command::Create, "t");
        m.devices = vec![
            device("RackA", "Rack", "2", 20),
            device("Spine2", "Switch", "2", 10),
        ];
        m.connections = vec![conn(("RackA", 20), ("Spine2", 10), MediaKind::Network)];
        applied(&mut asb, &mut g, m.clone());

        let mut del = UdcpMessage::new(Command::Delete, "d");
        del.connections = m.connections.clone();
        applied(&mut asb, &mut g, del);
        assert_eq!(
            g.graph()
                .edges()
                .filter(|e| e.kind == EdgeKind::ConnectedTo)
                .count(),
            0
        );
        assert!(g.graph().node("RackA").is_some() && g.graph().node("Spine2").is_some());

        let mut up = UdcpMessage::new(Command::Update, "u");
        up.devices = vec![device("RackA", "Rack", "3", 20)];
        applied(&mut asb, &mut g, up);
        let located = g.graph().edge("located:RackA").unwrap();
        assert_eq!(located.to, "hall:3");
        assert_eq!(
            g.graph().node("RackA").unwrap().attr("hall"),
            Some(&Scalar::from("3"))
        );
    }

    #[test]
    fn zone_and_extras_become_attributes() {
        let mut g = GraphStore::new();
        let mut d = device("R1", "Rack", "1", 1);
        d.extra.insert("zone".into(), "Z3".into());
        d.extra.insert("power_kw".into(), serde_json::json!(47.0));
        ingest_udcp(
            &mut g,
            &[Delta::Device {
                op: DeltaOp::Created,
                device: d,
            }],
        )
        .unwrap();
        assert_eq!(g.graph().edge("zoned:R1").unwrap().to, "zone:Z3");
        assert_eq!(
            g.graph().node("R1").unwrap().attr("power_kw"),
            Some(&Scalar::Float(47.0))
        );
    }

    #[test]
    fn failing_batch_leaves_graph_untouched() {
        let mut g = GraphStore::new();
        let c = conn(("X", 1), ("Y", 1), MediaKind::Network);
        let err = ingest_udcp(
            &mut g,
            &[Delta::Connection {
                op: DeltaOp::Created,
                connection: c,
            }],
        );
        assert!(matches!(err, Err(GraphError::DanglingEdge { .. })));
        assert_eq!(g.seq(), 0);
        assert_eq!(g.graph().node_count(), 0);
    }
}

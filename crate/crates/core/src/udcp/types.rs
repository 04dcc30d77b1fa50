use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Fields a reader did not recognise. Kept verbatim so that a message can be
/// re-serialized without losing vendor extensions.
pub type Extensions = BTreeMap<String, Value>;

pub const MAX_ELEVATION_RU: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Rear,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Rear => "rear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PathSide {
    A,
    B,
}

impl PathSide {
    pub fn as_str(self) -> &'static str {
        match self {
            PathSide::A => "A",
            PathSide::B => "B",
        }
    }
}

/// A physical port: device, rack-unit elevation, panel face, path and port
/// number. Two endpoints are the same port iff their keys are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortEndpoint {
    pub device_id: String,
    pub elevation_ru: u32,
    pub view: View,
    pub path: PathSide,
    pub port: u32,
}

impl PortEndpoint {
    pub fn new(
        device_id: impl Into<String>,
        elevation_ru: u32,
        view: View,
        path: PathSide,
        port: u32,
    ) -> Self {
        PortEndpoint {
            device_id: device_id.into(),
            elevation_ru,
            view,
            path,
            port,
        }
    }

    pub fn key(&self) -> EndpointKey {
        endpoint_key(self)
    }
}

/// Canonical identifier of a port, `device_id/RU<elevation>/<view>/<path>/P<port>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EndpointKey(String);

impl EndpointKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EndpointKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Build the canonical key of an endpoint.
///
/// The numeric and enum segments never contain `/`, so the last four
/// separators are unambiguous even when `device_id` itself contains slashes;
/// the mapping is injective over valid endpoints.
pub fn endpoint_key(e: &PortEndpoint) -> EndpointKey {
    EndpointKey(format!(
        "{}/RU{}/{}/{}/P{}",
        e.device_id,
        e.elevation_ru,
        e.view.as_str(),
        e.path.as_str(),
        e.port
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Network,
    Power,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaSpec {
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cable_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_gbps: Option<f64>,
    #[serde(flatten)]
    pub extra: Extensions,
}

impl MediaSpec {
    pub fn of_kind(kind: MediaKind) -> Self {
        MediaSpec {
            kind,
            fiber_count: None,
            connector: None,
            cable_type: None,
            length_m: None,
            bandwidth_gbps: None,
            extra: Extensions::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Location {
    pub hall: String,
    pub row: String,
    pub position: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRecord {
    pub panel_id: String,
    pub elevation_ru: u32,
    pub view: View,
    pub port_count: u32,
    pub port_type: String,
    #[serde(flatten)]
    pub extra: Extensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub device_id: String,
    pub device_type: String,
    pub location: Location,
    #[serde(default)]
    pub panels: Vec<PanelRecord>,
    #[serde(flatten)]
    pub extra: Extensions,
}

impl DeviceRecord {
    /// The panel terminating `endpoint`, if the device has one at that
    /// elevation and face.
    pub fn panel_for(&self, endpoint: &PortEndpoint) -> Option<&PanelRecord> {
        self.panels
            .iter()
            .find(|p| p.elevation_ru == endpoint.elevation_ru && p.view == endpoint.view)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRecord {
    pub a: PortEndpoint,
    pub b: PortEndpoint,
    pub media: MediaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub extra: Extensions,
}

impl ConnectionRecord {
    /// Endpoint keys in ascending order; identifies the connection
    /// independently of which side was called `a`.
    pub fn key(&self) -> ConnectionKey {
        ConnectionKey::new(self.a.key(), self.b.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnectionKey {
    pub low: EndpointKey,
    pub high: EndpointKey,
}

impl ConnectionKey {
    pub fn new(x: EndpointKey, y: EndpointKey) -> Self {
        if x <= y {
            ConnectionKey { low: x, high: y }
        } else {
            ConnectionKey { low: y, high: x }
        }
    }
}

impl fmt::Display for ConnectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.low, self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Create,
    Retrieve,
    Update,
    Delete,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "create" => Some(Command::Create),
            "retrieve" => Some(Command::Retrieve),
            "update" => Some(Command::Update),
            "delete" => Some(Command::Delete),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Filter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hall: Option<String>,
}

impl Filter {
    pub fn is_empty(&self) -> bool {
        self.device_id.is_none() && self.hall.is_none()
    }
}

/// One self-contained protocol transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UdcpMessage {
    pub command: Command,
    pub transaction_id: String,
    #[serde(default)]
    pub devices: Vec<DeviceRecord>,
    #[serde(default)]
    pub connections: Vec<ConnectionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Filter>,
    #[serde(flatten)]
    pub extra: Extensions,
}

impl UdcpMessage {
    pub fn new(command: Command, transaction_id: impl Into<String>) -> Self {
        UdcpMessage {
            command,
            transaction_id: transaction_id.into(),
            devices: Vec::new(),
            connections: Vec::new(),
            filter: None,
            extra: Extensions::new(),
        }
    }

    /// Sort devices, panels and connections into canonical order. Two
    /// messages describing the same records in different orders compare
    /// equal after this.
    pub fn canonicalize(&mut self) {
        self.devices.sort_by(|x, y| x.device_id.cmp(&y.device_id));
        for d in &mut self.devices {
            d.panels.sort_by(|x, y| {
                (x.elevation_ru, x.view, &x.panel_id).cmp(&(y.elevation_ru, y.view, &y.panel_id))
            });
        }
        // Stable: connections with equal endpoint keys keep message order.
        self.connections
            .sort_by_cached_key(|c| (c.a.key(), c.b.key()));
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    pub fn has_mutation_payload(&self) -> bool {
        !self.devices.is_empty() || !self.connections.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaOp {
    Created,
    Updated,
    Deleted,
}

/// A record change committed by a transaction. Carries the full record
/// (the post-image for creates and updates, the pre-image for deletes) so
/// that downstream consumers need no second lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Delta {
    Device {
        op: DeltaOp,
        device: DeviceRecord,
    },
    Connection {
        op: DeltaOp,
        connection: ConnectionRecord,
    },
}

impl Delta {
    pub fn op(&self) -> DeltaOp {
        match self {
            Delta::Device { op, .. } | Delta::Connection { op, .. } => *op,
        }
    }
}

/// Outcome of applying one message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UdcpResult {
    pub transaction_id: String,
    pub status: Status,
    pub deltas: Vec<Delta>,
    pub errors: Vec<super::Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<UdcpMessage>,
}

impl UdcpResult {
    pub fn is_applied(&self) -> bool {
        self.status == Status::Applied
    }
}

use std::collections::{BTreeMap, BTreeSet};

use super::types::*;
use super::validate::{validate_message, Violation, ViolationCode};

/// The as-built connectivity record: declared devices and the connections
/// between their ports. Every endpoint key hosts at most one connection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsBuiltStore {
    devices: BTreeMap<String, DeviceRecord>,
    connections: BTreeMap<ConnectionKey, ConnectionRecord>,
    occupancy: BTreeMap<EndpointKey, ConnectionKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrieveError {
    #[error("unknown device `{0}` in filter")]
    UnknownDevice(String),
}

impl AsBuiltStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty() && self.connections.is_empty()
    }

    pub fn device(&self, id: &str) -> Option<&DeviceRecord> {
        self.devices.get(id)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.devices.values()
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn connection(&self, key: &ConnectionKey) -> Option<&ConnectionRecord> {
        self.connections.get(key)
    }

    pub fn connections(&self) -> impl Iterator<Item = &ConnectionRecord> {
        self.connections.values()
    }

    pub fn connection_count(&self) -> usize {
        self.connections.len()
    }

    /// The connection occupying `endpoint`, if any.
    pub fn connection_at(&self, endpoint: &EndpointKey) -> Option<&ConnectionKey> {
        self.occupancy.get(endpoint)
    }

    pub fn connections_of<'a>(
        &'a self,
        device_id: &'a str,
    ) -> impl Iterator<Item = &'a ConnectionRecord> + 'a {
        self.connections
            .values()
            .filter(move |c| c.a.device_id == device_id || c.b.device_id == device_id)
    }

    /// Every endpoint key currently occupied, with the connection holding it.
    pub fn occupancy(&self) -> &BTreeMap<EndpointKey, ConnectionKey> {
        &self.occupancy
    }

    /// Validate and, if clean, apply `msg` in full. A rejected message
    /// leaves the store untouched.
    pub fn apply(&mut self, msg: &UdcpMessage) -> UdcpResult {
        let report = validate_message(msg, self);
        if !report.is_empty() {
            return UdcpResult {
                transaction_id: msg.transaction_id.clone(),
                status: Status::Rejected,
                deltas: Vec::new(),
                errors: report.violations,
                retrieved: None,
            };
        }
        let mut deltas = Vec::new();
        let mut retrieved = None;
        match msg.command {
            Command::Create => {
                for d in &msg.devices {
                    self.devices.insert(d.device_id.clone(), d.clone());
                    deltas.push(Delta::Device {
                        op: DeltaOp::Created,
                        device: d.clone(),
                    });
                }
                for c in &msg.connections {
                    self.insert_connection(c.clone());
                    deltas.push(Delta::Connection {
                        op: DeltaOp::Created,
                        connection: c.clone(),
                    });
                }
            }
            Command::Update => {
                for d in &msg.devices {
                    self.devices.insert(d.device_id.clone(), d.clone());
                    deltas.push(Delta::Device {
                        op: DeltaOp::Updated,
                        device: d.clone(),
                    });
                }
                for c in &msg.connections {
                    let stored = self.connections.get_mut(&c.key()).expect("validated");
                    stored.media = c.media.clone();
                    stored.label = c.label.clone();
                    stored.extra = c.extra.clone();
                    deltas.push(Delta::Connection {
                        op: DeltaOp::Updated,
                        connection: stored.clone(),
                    });
                }
            }
            Command::Delete => {
                for c in &msg.connections {
                    let removed = self.remove_connection(&c.key()).expect("validated");
                    deltas.push(Delta::Connection {
                        op: DeltaOp::Deleted,
                        connection: removed,
                    });
                }
                for d in &msg.devices {
                    let removed = self.devices.remove(&d.device_id).expect("validated");
                    deltas.push(Delta::Device {
                        op: DeltaOp::Deleted,
                        device: removed,
                    });
                }
            }
            Command::Retrieve => {
                let filter = msg.filter.clone().unwrap_or_default();
                let mut out = self.retrieve(&filter).expect("validated");
                out.transaction_id = msg.transaction_id.clone();
                retrieved = Some(out);
            }
        }
        UdcpResult {
            transaction_id: msg.transaction_id.clone(),
            status: Status::Applied,
            deltas,
            errors: Vec::new(),
            retrieved,
        }
    }

    fn insert_connection(&mut self, c: ConnectionRecord) {
        let key = c.key();
        self.occupancy.insert(key.low.clone(), key.clone());
        self.occupancy.insert(key.high.clone(), key.clone());
        self.connections.insert(key, c);
    }

    fn remove_connection(&mut self, key: &ConnectionKey) -> Option<ConnectionRecord> {
        let removed = self.connections.remove(key)?;
        self.occupancy.remove(&key.low);
        self.occupancy.remove(&key.high);
        Some(removed)
    }

    /// The filtered sub-store as a create message.
    ///
    /// Devices matching every filter predicate are selected, together with
    /// the connections they terminate. With a `hall` predicate only
    /// connections whose both ends lie in that hall are kept. The far-end
    /// devices of selected connections are included so that the message
    /// applies cleanly to an empty store.
    pub fn retrieve(&self, filter: &Filter) -> Result<UdcpMessage, RetrieveError> {
        if let Some(id) = &filter.device_id {
            if !self.devices.contains_key(id) {
                return Err(RetrieveError::UnknownDevice(id.clone()));
            }
        }
        let in_hall = |id: &str| match &filter.hall {
            None => true,
            Some(h) => self.devices.get(id).is_some_and(|d| &d.location.hall == h),
        };
        let seeds: BTreeSet<&str> = self
            .devices
            .values()
            .filter(|d| {
                filter
                    .device_id
                    .as_ref()
                    .is_none_or(|id| &d.device_id == id)
            })
            .filter(|d| in_hall(&d.device_id))
            .map(|d| d.device_id.as_str())
            .collect();

        let connections: Vec<ConnectionRecord> = self
            .connections
            .values()
            .filter(|c| {
                seeds.contains(c.a.device_id.as_str()) || seeds.contains(c.b.device_id.as_str())
            })
            .filter(|c| in_hall(&c.a.device_id) && in_hall(&c.b.device_id))
            .cloned()
            .collect();

        let mut device_ids = seeds;
        for c in &connections {
            device_ids.insert(&c.a.device_id);
            device_ids.insert(&c.b.device_id);
        }
        let mut msg = UdcpMessage::new(Command::Create, "asbuilt");
        msg.devices = device_ids
            .into_iter()
            .map(|id| self.devices[id].clone())
            .collect();
        msg.connections = connections;
        msg.canonicalize();
        Ok(msg)
    }
}

/// Free-function form of [`AsBuiltStore::apply`].
pub fn apply_message(msg: &UdcpMessage, store: &mut AsBuiltStore) -> UdcpResult {
    store.apply(msg)
}

/// Free-function form of [`AsBuiltStore::retrieve`].
pub fn retrieve_asbuilt(
    filter: &Filter,
    store: &AsBuiltStore,
) -> Result<UdcpMessage, RetrieveError> {
    store.retrieve(filter)
}

impl From<RetrieveError> for Violation {
    fn from(e: RetrieveError) -> Self {
        Violation {
            code: ViolationCode::UnknownFilterDevice,
            path: "filter.device_id".into(),
            detail: e.to_string(),
        }
    }
}

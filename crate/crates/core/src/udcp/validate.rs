//! Relational checks of a message against the as-built record.
//!
//! Violations are data: a report lists every problem found, and an empty
//! report means the message can be applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::store::AsBuiltStore;
use super::types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    UnresolvedEndpoint,
    EndpointOccupied,
    DuplicateEndpoint,
    PortOutOfRange,
    SelfLoop,
    DuplicateDevice,
    DuplicatePanel,
    UnknownDevice,
    UnknownConnection,
    DeviceInUse,
    UnknownFilterDevice,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::UnresolvedEndpoint => "unresolved endpoint",
            ViolationCode::EndpointOccupied => "endpoint occupied",
            ViolationCode::DuplicateEndpoint => "duplicate endpoint",
            ViolationCode::PortOutOfRange => "port out of range",
            ViolationCode::SelfLoop => "self loop",
            ViolationCode::DuplicateDevice => "duplicate device",
            ViolationCode::DuplicatePanel => "duplicate panel",
            ViolationCode::UnknownDevice => "unknown device",
            ViolationCode::UnknownConnection => "unknown connection",
            ViolationCode::DeviceInUse => "device in use",
            ViolationCode::UnknownFilterDevice => "unknown filter device",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Path of the offending element inside the message, e.g. `connections[3].b`.
    pub path: String,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, path: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation {
            code,
            path: path.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

/// Check `msg` against `store` and collect every violation.
pub fn validate_message(msg: &UdcpMessage, store: &AsBuiltStore) -> ValidationReport {
    let mut report = ValidationReport::default();
    match msg.command {
        Command::Create => validate_create(msg, store, &mut report),
        Command::Update => validate_update(msg, store, &mut report),
        Command::Delete => validate_delete(msg, store, &mut report),
        Command::Retrieve => {
            if let Some(id) = msg.filter.as_ref().and_then(|f| f.device_id.as_ref()) {
                if store.device(id).is_none() {
                    report.push(Violation::new(
                        ViolationCode::UnknownFilterDevice,
                        "filter.device_id",
                        format!("no device `{id}`"),
                    ));
                }
            }
        }
    }
    report
}

fn check_panels(path: &str, device: &DeviceRecord, report: &mut ValidationReport) {
    let mut ids = BTreeSet::new();
    let mut slots = BTreeSet::new();
    for (j, p) in device.panels.iter().enumerate() {
        if !ids.insert(p.panel_id.as_str()) {
            report.push(Violation::new(
                ViolationCode::DuplicatePanel,
                format!("{path}.panels[{j}]"),
                format!(
                    "panel `{}` declared twice on `{}`",
                    p.panel_id, device.device_id
                ),
            ));
        } else if !slots.insert((p.elevation_ru, p.view)) {
            report.push(Violation::new(
                ViolationCode::DuplicatePanel,
                format!("{path}.panels[{j}]"),
                format!(
                    "second panel at RU{} {} on `{}`",
                    p.elevation_ru,
                    p.view.as_str(),
                    device.device_id
                ),
            ));
        }
    }
}

/// Resolve an endpoint to a panel and check the port index.
fn check_resolves(
    path: &str,
    endpoint: &PortEndpoint,
    device: Option<&DeviceRecord>,
    report: &mut ValidationReport,
) {
    let Some(device) = device else {
        report.push(Violation::new(
            ViolationCode::UnresolvedEndpoint,
            path,
            format!(
                "{}: device `{}` is not declared",
                endpoint.key(),
                endpoint.device_id
            ),
        ));
        return;
    };
    match device.panel_for(endpoint) {
        None => report.push(Violation::new(
            ViolationCode::UnresolvedEndpoint,
            path,
            format!(
                "{}: no panel at RU{} {} on `{}`",
                endpoint.key(),
                endpoint.elevation_ru,
                endpoint.view.as_str(),
                endpoint.device_id
            ),
        )),
        Some(panel) if endpoint.port > panel.port_count => report.push(Violation::new(
            ViolationCode::PortOutOfRange,
            path,
            format!(
                "{}: panel `{}` has {} ports",
                endpoint.key(),
                panel.panel_id,
                panel.port_count
            ),
        )),
        Some(_) => {}
    }
}

fn validate_create(msg: &UdcpMessage, store: &AsBuiltStore, report: &mut ValidationReport) {
    let mut declared: BTreeMap<&str, &DeviceRecord> = BTreeMap::new();
    for (i, d) in msg.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        if store.device(&d.device_id).is_some() {
            report.push(Violation::new(
                ViolationCode::DuplicateDevice,
                &path,
                format!("device `{}` already exists", d.device_id),
            ));
        } else if declared.contains_key(d.device_id.as_str()) {
            report.push(Violation::new(
                ViolationCode::DuplicateDevice,
                &path,
                format!("device `{}` declared twice", d.device_id),
            ));
        } else {
            declared.insert(&d.device_id, d);
        }
        check_panels(&path, d, report);
    }

    let mut claimed: BTreeMap<EndpointKey, usize> = BTreeMap::new();
    for (i, c) in msg.connections.iter().enumerate() {
        let path = format!("connections[{i}]");
        if c.a == c.b {
            report.push(Violation::new(
                ViolationCode::SelfLoop,
                &path,
                format!("{} joins itself", c.a.key()),
            ));
            continue;
        }
        for (side, endpoint) in [("a", &c.a), ("b", &c.b)] {
            let side_path = format!("{path}.{side}");
            let device = declared
                .get(endpoint.device_id.as_str())
                .copied()
                .or_else(|| store.device(&endpoint.device_id));
            check_resolves(&side_path, endpoint, device, report);

            let key = endpoint.key();
            if let Some(existing) = store.connection_at(&key) {
                report.push(Violation::new(
                    ViolationCode::EndpointOccupied,
                    &side_path,
                    format!("{key} already carries {existing}"),
                ));
            }
            if let Some(first) = claimed.get(&key) {
                report.push(Violation::new(
                    ViolationCode::DuplicateEndpoint,
                    &side_path,
                    format!("{key} also claimed by connections[{first}]"),
                ));
            } else {
                claimed.insert(key, i);
            }
        }
    }
}

fn validate_update(msg: &UdcpMessage, store: &AsBuiltStore, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for (i, d) in msg.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        if !seen.insert(d.device_id.as_str()) {
            report.push(Violation::new(
                ViolationCode::DuplicateDevice,
                &path,
                format!("device `{}` listed twice", d.device_id),
            ));
            continue;
        }
        if store.device(&d.device_id).is_none() {
            report.push(Violation::new(
                ViolationCode::UnknownDevice,
                &path,
                format!("no device `{}`", d.device_id),
            ));
            continue;
        }
        check_panels(&path, d, report);
        // Existing terminations must survive the new panel layout.
        for conn in store.connections_of(&d.device_id) {
            for endpoint in [&conn.a, &conn.b] {
                if endpoint.device_id == d.device_id {
                    check_resolves(&path, endpoint, Some(d), report);
                }
            }
        }
    }

    let mut keys = BTreeSet::new();
    for (i, c) in msg.connections.iter().enumerate() {
        let path = format!("connections[{i}]");
        let key = c.key();
        if !keys.insert(key.clone()) {
            report.push(Violation::new(
                ViolationCode::DuplicateEndpoint,
                &path,
                format!("{key} listed twice"),
            ));
        } else if store.connection(&key).is_none() {
            report.push(Violation::new(
                ViolationCode::UnknownConnection,
                &path,
                format!("no connection {key}"),
            ));
        }
    }
}

fn validate_delete(msg: &UdcpMessage, store: &AsBuiltStore, report: &mut ValidationReport) {
    let mut keys = BTreeSet::new();
    for (i, c) in msg.connections.iter().enumerate() {
        let path = format!("connections[{i}]");
        let key = c.key();
        if !keys.insert(key.clone()) {
            report.push(Violation::new(
                ViolationCode::DuplicateEndpoint,
                &path,
                format!("{key} listed twice"),
            ));
        } else if store.connection(&key).is_none() {
            report.push(Violation::new(
                ViolationCode::UnknownConnection,
                &path,
                format!("no connection {key}"),
            ));
        }
    }

    let mut seen = BTreeSet::new();
    for (i, d) in msg.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        if !seen.insert(d.device_id.as_str()) {
            report.push(Violation::new(
                ViolationCode::DuplicateDevice,
                &path,
                format!("device `{}` listed twice", d.device_id),
            ));
            continue;
        }
        if store.device(&d.device_id).is_none() {
            report.push(Violation::new(
                ViolationCode::UnknownDevice,
                &path,
                format!("no device `{}`", d.device_id),
            ));
            continue;
        }
        let remaining: Vec<ConnectionKey> = store
            .connections_of(&d.device_id)
            .map(|c| c.key())
            .filter(|k| !keys.contains(k))
            .collect();
        if let Some(first) = remaining.first() {
            report.push(Violation::new(
                ViolationCode::DeviceInUse,
                &path,
                format!(
                    "`{}` still terminates {} connection(s), e.g. {first}",
                    d.device_id,
                    remaining.len()
                ),
            ));
        }
    }
}

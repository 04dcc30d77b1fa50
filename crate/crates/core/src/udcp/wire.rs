//! Reading and writing the JSON wire format.

use serde_json::Value;

use super::types::*;
use crate::canonical;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed document at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown command `{value}`")]
    UnknownCommand { value: String },
    #[error("missing required field `{path}`")]
    MissingField { path: String },
    #[error("invalid field `{path}`: {reason}")]
    InvalidField { path: String, reason: String },
}

impl ParseError {
    /// Location of the offending element, `$` for the document root.
    pub fn path(&self) -> &str {
        match self {
            ParseError::Malformed { .. } => "$",
            ParseError::UnknownCommand { .. } => "command",
            ParseError::MissingField { path } | ParseError::InvalidField { path, .. } => path,
        }
    }
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ParseError {
    ParseError::InvalidField {
        path: path.into(),
        reason: reason.into(),
    }
}

fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() || prefix == "." {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Parse and structurally check one wire document.
pub fn parse_message(text: &str) -> Result<UdcpMessage, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Malformed {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    parse_value(value)
}

pub fn parse_value(value: Value) -> Result<UdcpMessage, ParseError> {
    let obj = value
        .as_object()
        .ok_or_else(|| invalid("$", "expected a JSON object"))?;
    match obj.get("command") {
        None => {
            return Err(ParseError::MissingField {
                path: "command".into(),
            })
        }
        Some(Value::String(s)) => {
            if Command::parse(s).is_none() {
                return Err(ParseError::UnknownCommand { value: s.clone() });
            }
        }
        Some(_) => return Err(invalid("command", "expected a string")),
    }

    let msg: UdcpMessage = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        match missing_field_name(&inner) {
            Some(field) => ParseError::MissingField {
                path: join(&path, field),
            },
            None => invalid(if path == "." { "$".to_string() } else { path }, inner),
        }
    })?;
    check_structure(&msg)?;
    Ok(msg)
}

fn missing_field_name(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

fn check_endpoint(path: &str, e: &PortEndpoint) -> Result<(), ParseError> {
    if e.device_id.is_empty() {
        return Err(invalid(join(path, "device_id"), "must be non-empty"));
    }
    if e.elevation_ru < 1 || e.elevation_ru > MAX_ELEVATION_RU {
        return Err(invalid(
            join(path, "elevation_ru"),
            format!("must be in 1..={MAX_ELEVATION_RU}"),
        ));
    }
    if e.port < 1 {
        return Err(invalid(join(path, "port"), "must be >= 1"));
    }
    Ok(())
}

fn check_media(path: &str, m: &MediaSpec) -> Result<(), ParseError> {
    if m.kind != MediaKind::Network {
        if m.fiber_count.is_some() {
            return Err(invalid(
                join(path, "fiber_count"),
                "only network media carries fibers",
            ));
        }
        if m.connector.is_some() {
            return Err(invalid(
                join(path, "connector"),
                "only network media carries a connector",
            ));
        }
    }
    if m.fiber_count == Some(0) {
        return Err(invalid(join(path, "fiber_count"), "must be >= 1"));
    }
    for (field, v) in [
        ("length_m", m.length_m),
        ("bandwidth_gbps", m.bandwidth_gbps),
    ] {
        if let Some(v) = v {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(join(path, field), "must be a non-negative number"));
            }
        }
    }
    Ok(())
}

/// Field-level checks that need no store.
pub fn check_structure(msg: &UdcpMessage) -> Result<(), ParseError> {
    if msg.transaction_id.is_empty() {
        return Err(invalid("transaction_id", "must be non-empty"));
    }
    match msg.command {
        Command::Retrieve => {
            if msg.filter.is_none() {
                return Err(ParseError::MissingField {
                    path: "filter".into(),
                });
            }
            if msg.has_mutation_payload() {
                return Err(invalid("$", "retrieve carries no devices or connections"));
            }
        }
        _ => {
            if msg.filter.is_some() {
                return Err(invalid("filter", "only retrieve carries a filter"));
            }
        }
    }
    for (i, d) in msg.devices.iter().enumerate() {
        let path = format!("devices[{i}]");
        if d.device_id.is_empty() {
            return Err(invalid(join(&path, "device_id"), "must be non-empty"));
        }
        for (j, p) in d.panels.iter().enumerate() {
            let ppath = format!("{path}.panels[{j}]");
            if p.panel_id.is_empty() {
                return Err(invalid(join(&ppath, "panel_id"), "must be non-empty"));
            }
            if p.elevation_ru < 1 || p.elevation_ru > MAX_ELEVATION_RU {
                return Err(invalid(
                    join(&ppath, "elevation_ru"),
                    format!("must be in 1..={MAX_ELEVATION_RU}"),
                ));
            }
            if p.port_count < 1 {
                return Err(invalid(join(&ppath, "port_count"), "must be >= 1"));
            }
        }
    }
    for (i, c) in msg.connections.iter().enumerate() {
        let path = format!("connections[{i}]");
        check_endpoint(&join(&path, "a"), &c.a)?;
        check_endpoint(&join(&path, "b"), &c.b)?;
        if c.a == c.b {
            return Err(invalid(path, "connection joins an endpoint to itself"));
        }
        check_media(&join(&path, "media"), &c.media)?;
    }
    Ok(())
}

/// Deterministic rendering: keys sorted, arrays in canonical record order,
/// non-ASCII escaped.
pub fn serialize_canonical(msg: &UdcpMessage) -> String {
    let msg = msg.clone().canonicalized();
    canonical::to_canonical_string(&msg).expect("UDCP messages always encode")
}

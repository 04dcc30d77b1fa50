//! Connectivity protocol engine.
//!
//! A [`UdcpMessage`] is one stateless transaction (`create`, `retrieve`,
//! `update` or `delete`) over devices, their patch panels, and the
//! connections between panel ports. Messages are parsed from the JSON wire
//! format, validated against the [`AsBuiltStore`], and applied atomically:
//! either every record change lands or none does.

mod store;
mod types;
mod validate;
mod wire;

pub use store::{apply_message, retrieve_asbuilt, AsBuiltStore, RetrieveError};
pub use types::*;
pub use validate::{validate_message, ValidationReport, Violation, ViolationCode};
pub use wire::{check_structure, parse_message, parse_value, serialize_canonical, ParseError};

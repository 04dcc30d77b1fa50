//! Service layer over the DCIM core: a durable event log, a
//! single-writer engine, HTTP routes and the `dcim` command line.

pub mod cli;
pub mod engine;
pub mod eventlog;
pub mod http;

pub use engine::{Engine, EngineConfig, EngineError, Metrics, Snapshot};
pub use eventlog::{EventLog, LogEntry, LogPayload, ReplayError};
pub use http::{handle_request, HttpResponse};

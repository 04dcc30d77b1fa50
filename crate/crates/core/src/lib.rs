//! Core of a desk-scale data-center infrastructure manager.
//!
//! - [`udcp`]: connectivity protocol engine and the as-built record
//! - [`graph`]: dual-layer (structural + state) property graph
//! - [`reasoning`]: rules, anomalies with provenance, intent compiler, causal tracing
//! - [`energetics`]: power, heat, coolant and efficiency arithmetic plus control policies
//! - [`twinsim`]: deterministic digital-twin simulator driving the whole loop

pub mod canonical;
pub mod energetics;
pub mod graph;
pub mod reasoning;
pub mod twinsim;
pub mod udcp;

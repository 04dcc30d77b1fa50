//! The live store behind the HTTP routes and the CLI: as-built record,
//! knowledge graph and event log, mutated through one lock so commits
//! serialize while reads work from the latest committed view.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use dcim_core::canonical::{to_canonical_string, CanonicalError};
use dcim_core::energetics::{efficiency_report, EfficiencyInputs, EfficiencyReport};
use dcim_core::graph::{
    ingest_udcp, match_pattern, Graph, GraphDocument, GraphError, GraphStore, GraphView,
    PatternQuery, QueryResult, StateUpdate, Timestamp,
};
use dcim_core::reasoning::{builtin_rules, compile_intent, evaluate_rules, Anomaly, IntentError};
use dcim_core::udcp::{AsBuiltStore, Command, Filter, UdcpMessage, UdcpResult};
use serde::{Deserialize, Serialize};

use crate::eventlog::{EventLog, LogEntry, LogError, LogPayload};

pub const LOG_FILE: &str = "events.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encode(#[from] CanonicalError),
    #[error("I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("snapshot is malformed: {0}")]
    Snapshot(String),
    #[error("logged transaction {seq} no longer applies: {reason}")]
    Replay { seq: u64, reason: String },
}

/// Assumptions behind the live efficiency figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Facility overhead beyond IT and pumps, as a fraction of IT load.
    pub overhead_frac: f64,
    pub carbon_kg_per_it_kwh: f64,
    pub heat_reuse_frac: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            overhead_frac: 0.10,
            carbon_kg_per_it_kwh: 0.36,
            heat_reuse_frac: 0.2,
        }
    }
}

/// Current power draw read off the graph, with the efficiency figures it
/// implies over a one-hour basis. `efficiency` is absent while there is no
/// IT load to divide by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub racks: usize,
    pub it_kw: f64,
    pub pump_kw: f64,
    pub total_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencyReport>,
}

/// Full engine state at one log position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_seq: u64,
    pub asbuilt: UdcpMessage,
    pub graph: GraphDocument,
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Default)]
struct State {
    asbuilt: AsBuiltStore,
    graph: GraphStore,
    log: EventLog,
    anomalies: Vec<Anomaly>,
    seen: BTreeSet<String>,
    /// Sequence covered by the installed snapshot; the log continues after it.
    base_seq: u64,
}

impl State {
    fn from_snapshot(snap: Snapshot, log: EventLog) -> Result<State, EngineError> {
        let mut asbuilt = AsBuiltStore::new();
        let result = asbuilt.apply(&snap.asbuilt);
        if !result.is_applied() {
            return Err(EngineError::Snapshot(format!(
                "as-built record rejected: {:?}",
                result.errors
            )));
        }
        let graph = GraphStore::from_graph(Graph::from_document(snap.graph)?);
        let seen = snap
            .anomalies
            .iter()
            .map(|a| a.anomaly_id.clone())
            .collect();
        Ok(State {
            asbuilt,
            graph,
            log,
            anomalies: snap.anomalies,
            seen,
            base_seq: snap.last_seq,
        })
    }

    fn last_seq(&self) -> u64 {
        self.log.last_seq().max(self.base_seq)
    }

    fn record_anomaly(&mut self, a: Anomaly) -> bool {
        if !self.seen.insert(a.anomaly_id.clone()) {
            return false;
        }
        self.anomalies.push(a);
        true
    }

    /// Re-apply one logged entry. Logged transactions were accepted once,
    /// so a rejection now means the log and snapshot disagree.
    fn replay(&mut self, entry: &LogEntry) -> Result<(), EngineError> {
        match &entry.payload {
            LogPayload::Udcp(msg) => {
                let result = self.asbuilt.apply(msg);
                if !result.is_applied() {
                    let reason = result
                        .errors
                        .iter()
                        .map(|v| v.detail.clone())
                        .collect::<Vec<_>>()
                        .join("; ");
                    return Err(EngineError::Replay {
                        seq: entry.seq,
                        reason,
                    });
                }
                ingest_udcp(&mut self.graph, &result.deltas)?;
            }
            LogPayload::StateBatch(batch) => self.graph.apply_state_batch(batch)?,
            LogPayload::Anomaly(a) => {
                self.record_anomaly(a.clone());
            }
        }
        Ok(())
    }
}

pub struct Engine {
    state: Mutex<State>,
    config: EngineConfig,
    dir: Option<PathBuf>,
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

impl Engine {
    /// A store that lives only as long as the process.
    pub fn in_memory() -> Engine {
        Engine {
            state: Mutex::new(State::default()),
            config: EngineConfig::default(),
            dir: None,
        }
    }

    /// Open (or create) the data directory: install its snapshot, if any,
    /// then replay every logged entry after it.
    pub fn open(dir: &Path) -> Result<Engine, EngineError> {
        std::fs::create_dir_all(dir).map_err(|source| EngineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let log = EventLog::open(&dir.join(LOG_FILE))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = match std::fs::read_to_string(&snap_path) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text)
                    .map_err(|e| EngineError::Snapshot(e.to_string()))?;
                State::from_snapshot(snap, log)?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => State {
                log,
                ..State::default()
            },
            Err(source) => {
                return Err(EngineError::Io {
                    path: snap_path,
                    source,
                })
            }
        };
        let pending: Vec<LogEntry> = state.log.since(state.base_seq).to_vec();
        for entry in &pending {
            state.replay(entry)?;
        }
        Ok(Engine {
            state: Mutex::new(state),
            config: EngineConfig::default(),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn with_config(mut self, config: EngineConfig) -> Engine {
        self.config = config;
        self
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A panic mid-commit cannot leave a half-applied store: every
        // commit builds on copies and swaps them in last.
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Apply one UDCP transaction. Applied mutations are logged before they
    /// become visible; rejections and retrieves leave no log entry.
    pub fn apply(&self, msg: &UdcpMessage) -> Result<UdcpResult, EngineError> {
        let mut st = self.lock();
        let mut asbuilt = st.asbuilt.clone();
        let result = asbuilt.apply(msg);
        if !result.is_applied() || msg.command == Command::Retrieve {
            return Ok(result);
        }
        let mut graph = st.graph.clone();
        ingest_udcp(&mut graph, &result.deltas)?;
        let floor = st.base_seq;
        st.log
            .append(LogPayload::Udcp(msg.clone()), now_ms(), floor)?;
        st.asbuilt = asbuilt;
        st.graph = graph;
        Ok(result)
    }

    /// Commit a telemetry batch, then run the built-in rules over the new
    /// view. Returns the anomalies not reported before.
    pub fn ingest_state(&self, batch: Vec<StateUpdate>) -> Result<Vec<Anomaly>, EngineError> {
        let mut st = self.lock();
        let mut graph = st.graph.clone();
        graph.apply_state_batch(&batch)?;
        let at = batch.iter().map(|u| u.ts).max().unwrap_or(Timestamp(0));
        let floor = st.base_seq;
        st.log
            .append(LogPayload::StateBatch(batch), now_ms(), floor)?;
        st.graph = graph;

        let outcome = evaluate_rules(&st.graph.view(), &builtin_rules(), at);
        let mut fresh = Vec::new();
        for a in outcome.anomalies {
            if st.seen.contains(&a.anomaly_id) {
                continue;
            }
            st.log
                .append(LogPayload::Anomaly(a.clone()), now_ms(), floor)?;
            st.record_anomaly(a.clone());
            fresh.push(a);
        }
        Ok(fresh)
    }

    /// The latest committed graph; holding it never blocks writers.
    pub fn view(&self) -> GraphView {
        self.lock().graph.view()
    }

    pub fn asbuilt(&self) -> AsBuiltStore {
        self.lock().asbuilt.clone()
    }

    pub fn anomalies(&self) -> Vec<Anomaly> {
        self.lock().anomalies.clone()
    }

    pub fn query(&self, q: &PatternQuery) -> QueryResult {
        match_pattern(self.view().graph(), q)
    }

    pub fn intent(&self, text: &str) -> Result<QueryResult, IntentError> {
        let q = compile_intent(text)?;
        Ok(self.query(&q))
    }

    pub fn events_since(&self, seq: u64) -> Vec<LogEntry> {
        self.lock().log.since(seq).to_vec()
    }

    pub fn last_seq(&self) -> u64 {
        self.lock().last_seq()
    }

    pub fn metrics(&self) -> Metrics {
        let view = self.view();
        let sum = |label: &str| -> f64 {
            view.nodes_with_label(label)
                .filter_map(|n| n.attr("power_kw").and_then(|v| v.as_f64()))
                .fold(0.0, |acc, kw| acc + kw)
        };
        let racks = view.nodes_with_label("Rack").count();
        let it_kw = sum("Rack");
        let pump_kw = sum("Pump");
        let total_kw = it_kw * (1.0 + self.config.overhead_frac) + pump_kw;
        // One hour at the current draw.
        let it_kwh = it_kw;
        let efficiency = efficiency_report(&EfficiencyInputs {
            total_kw,
            it_kw,
            carbon_kg: self.config.carbon_kg_per_it_kwh * it_kwh,
            it_kwh,
            reused_heat_kwh_t: self.config.heat_reuse_frac * it_kwh,
            total_heat_kwh_t: it_kwh,
            work_units: racks as f64,
        })
        .ok();
        Metrics {
            racks,
            it_kw,
            pump_kw,
            total_kw,
            efficiency,
        }
    }

    pub fn snapshot(&self) -> Result<Snapshot, EngineError> {
        let st = self.lock();
        let asbuilt = st
            .asbuilt
            .retrieve(&Filter::default())
            .expect("an empty filter names no device");
        Ok(Snapshot {
            last_seq: st.last_seq(),
            asbuilt,
            graph: st.graph.graph().to_document(),
            anomalies: st.anomalies.clone(),
        })
    }

    /// Replace the whole state with `snap`. On disk the snapshot file is
    /// rewritten and the log emptied; later entries number on from the
    /// snapshot's sequence.
    pub fn restore(&self, snap: Snapshot) -> Result<(), EngineError> {
        let mut st = self.lock();
        let text = to_canonical_string(&snap)?;
        let mut next = State::from_snapshot(snap, EventLog::in_memory())?;
        if let Some(dir) = &self.dir {
            let path = dir.join(SNAPSHOT_FILE);
            let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
            std::fs::write(&tmp, text).map_err(|source| EngineError::Io {
                path: tmp.clone(),
                source,
            })?;
            std::fs::rename(&tmp, &path).map_err(|source| EngineError::Io { path, source })?;
        }
        std::mem::swap(&mut next.log, &mut st.log);
        next.log.truncate_after(0)?;
        *st = next;
        Ok(())
    }
}

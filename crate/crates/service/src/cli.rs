//! Batch command line. Machine-readable results go to stdout as canonical
//! JSON (or CSV); diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 rejected or invalid input, 2 internal failure
//! or bad usage.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use dcim_core::canonical::to_canonical_string;
use dcim_core::twinsim::{
    builtin_scenario, export_report, run_scenario, run_scenario_with_seed, Scenario, SimError,
};
use dcim_core::udcp::parse_message;
use serde::Serialize;

use crate::engine::{Engine, Snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dcim",
    version,
    about = "Infrastructure source of truth: connectivity, graph, reasoning and twin"
)]
pub struct Cli {
    /// Directory holding the event log and snapshot.
    #[arg(
        long,
        env = "DCIM_DATA_DIR",
        default_value = "dcim-data",
        global = true
    )]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "DCIM_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Apply one UDCP transaction document.
    Apply { file: PathBuf },
    /// Answer a natural-language question about the graph.
    Query { intent: String },
    /// Run a shipped scenario by name, or a scenario document by path.
    Simulate {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the per-tick series as CSV instead of the JSON report.
        #[arg(long)]
        csv: bool,
    },
    /// Current power and efficiency figures.
    Report,
    /// Write the full store state to a file.
    Snapshot { file: PathBuf },
    /// Replace the store state with a snapshot file.
    Restore { file: PathBuf },
}

/// Outcome of a subcommand: exit code, stdout text, stderr text.
struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Outcome {
        Outcome {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, stderr: impl Into<String>) -> Outcome {
        Outcome {
            code,
            stdout: String::new(),
            stderr: stderr.into(),
        }
    }
}

fn encode<T: Serialize>(value: &T) -> Result<String, Outcome> {
    to_canonical_string(value)
        .map(|s| s + "\n")
        .map_err(|e| Outcome::fail(EXIT_INTERNAL, e.to_string()))
}

fn read(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| {
        Outcome::fail(
            EXIT_REJECTED,
            format!("cannot read {}: {e}", path.display()),
        )
    })
}

fn open(dir: &Path) -> Result<Engine, Outcome> {
    Engine::open(dir).map_err(|e| {
        Outcome::fail(
            EXIT_INTERNAL,
            format!("cannot open data directory {}: {e}", dir.display()),
        )
    })
}

/// Parse `args` (program name first) and run. Never exits the process.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INTERNAL
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let outcome = execute(cli).unwrap_or_else(|o| o);
    let _ = out.write_all(outcome.stdout.as_bytes());
    if !outcome.stderr.is_empty() {
        let _ = writeln!(err, "{}", outcome.stderr.trim_end());
    }
    outcome.code
}

fn execute(cli: Cli) -> Result<Outcome, Outcome> {
    match cli.command {
        CliCommand::Serve { port, host } => {
            let engine = Arc::new(open(&cli.data_dir)?);
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| Outcome::fail(EXIT_INTERNAL, e.to_string()))?;
            eprintln!("dcim: serving on http://{addr}");
            runtime
                .block_on(crate::http::serve(engine, addr))
                .map_err(|e| Outcome::fail(EXIT_INTERNAL, format!("server on {addr}: {e}")))?;
            Ok(Outcome::ok(String::new()))
        }
        CliCommand::Apply { file } => {
            let msg = parse_message(&read(&file)?)
                .map_err(|e| Outcome::fail(EXIT_REJECTED, e.to_string()))?;
            let engine = open(&cli.data_dir)?;
            let result = engine
                .apply(&msg)
                .map_err(|e| Outcome::fail(EXIT_INTERNAL, e.to_string()))?;
            let stdout = encode(&result)?;
            if result.is_applied() {
                Ok(Outcome::ok(stdout))
            } else {
                let n = result.errors.len();
                Ok(Outcome {
                    code: EXIT_REJECTED,
                    stdout,
                    stderr: format!("transaction rejected with {n} violation(s)"),
                })
            }
        }
        CliCommand::Query { intent } => {
            let engine = open(&cli.data_dir)?;
            let result = engine
                .intent(&intent)
                .map_err(|e| Outcome::fail(EXIT_REJECTED, e.to_string()))?;
            Ok(Outcome::ok(encode(&result)?))
        }
        CliCommand::Simulate {
            scenario,
            seed,
            csv,
        } => {
            let s = load_scenario(&scenario)?;
            let report = match seed {
                Some(seed) => run_scenario_with_seed(&s, seed),
                None => run_scenario(&s),
            }
            .map_err(|e| Outcome::fail(EXIT_REJECTED, e.to_string()))?;
            let export =
                export_report(&report).map_err(|e| Outcome::fail(EXIT_INTERNAL, e.to_string()))?;
            Ok(Outcome::ok(if csv {
                export.csv
            } else {
                export.document + "\n"
            }))
        }
        CliCommand::Report => Ok(Outcome::ok(encode(&open(&cli.data_dir)?.metrics())?)),
        CliCommand::Snapshot { file } => {
            let snap = open(&cli.data_dir)?
                .snapshot()
                .map_err(|e| Outcome::fail(EXIT_INTERNAL, e.to_string()))?;
            let text = encode(&snap)?;
            std::fs::write(&file, &text).map_err(|e| {
                Outcome::fail(
                    EXIT_INTERNAL,
                    format!("cannot write {}: {e}", file.display()),
                )
            })?;
            Ok(Outcome::ok(encode(
                &serde_json::json!({ "last_seq": snap.last_seq }),
            )?))
        }
        CliCommand::Restore { file } => {
            let snap: Snapshot = serde_json::from_str(&read(&file)?)
                .map_err(|e| Outcome::fail(EXIT_REJECTED, format!("malformed snapshot: {e}")))?;
            let last_seq = snap.last_seq;
            open(&cli.data_dir)?
                .restore(snap)
                .map_err(|e| Outcome::fail(EXIT_REJECTED, e.to_string()))?;
            Ok(Outcome::ok(encode(
                &serde_json::json!({ "last_seq": last_seq }),
            )?))
        }
    }
}

/// A shipped scenario name, or else a path to a scenario document.
fn load_scenario(name: &str) -> Result<Scenario, Outcome> {
    match builtin_scenario(name) {
        Ok(s) => Ok(s),
        Err(SimError::UnknownScenario(_)) if Path::new(name).is_file() => {
            Scenario::from_json(&read(Path::new(name))?)
                .map_err(|e| Outcome::fail(EXIT_REJECTED, e.to_string()))
        }
        Err(e) => Err(Outcome::fail(EXIT_REJECTED, e.to_string())),
    }
}

//! Request routing, kept free of any server framework so the same function
//! backs the network listener and the tests.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use dcim_core::canonical::value_to_canonical_string;
use dcim_core::graph::PatternQuery;
use dcim_core::twinsim::{builtin_scenario, run_scenario, run_scenario_with_seed, SimError};
use dcim_core::udcp::parse_message;
use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::Engine;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Canonical JSON.
    pub body: String,
}

impl HttpResponse {
    fn json<T: Serialize>(status: u16, value: &T) -> HttpResponse {
        match dcim_core::canonical::to_canonical_string(value) {
            Ok(body) => HttpResponse { status, body },
            Err(e) => HttpResponse::error(500, &e.to_string()),
        }
    }

    fn error(status: u16, message: &str) -> HttpResponse {
        HttpResponse::value(status, json!({ "error": message }))
    }

    fn value(status: u16, v: Value) -> HttpResponse {
        HttpResponse {
            status,
            body: value_to_canonical_string(&v),
        }
    }
}

#[derive(serde::Deserialize)]
struct SimulateRequest {
    scenario: String,
    #[serde(default)]
    seed: Option<u64>,
}

/// Route one request. `target` is the path plus optional query string.
pub fn handle_request(engine: &Engine, method: &str, target: &str, body: &[u8]) -> HttpResponse {
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let text = match std::str::from_utf8(body) {
        Ok(t) => t,
        Err(_) => return HttpResponse::error(400, "body is not UTF-8"),
    };
    match (method, path) {
        ("POST", "/udcp") => post_udcp(engine, text),
        ("POST", "/query") => match serde_json::from_str::<PatternQuery>(text) {
            Ok(q) => HttpResponse::json(200, &engine.query(&q)),
            Err(e) => HttpResponse::error(400, &format!("malformed pattern query: {e}")),
        },
        ("POST", "/intent") => post_intent(engine, text),
        ("GET", "/metrics") => HttpResponse::json(200, &engine.metrics()),
        ("GET", "/events") => match since_param(query) {
            Ok(since) => HttpResponse::json(200, &engine.events_since(since)),
            Err(msg) => HttpResponse::error(400, &msg),
        },
        ("POST", "/simulate") => post_simulate(text),
        _ => HttpResponse::error(404, &format!("no route for {method} {path}")),
    }
}

fn post_udcp(engine: &Engine, text: &str) -> HttpResponse {
    let msg = match parse_message(text) {
        Ok(m) => m,
        Err(e) => return HttpResponse::error(400, &e.to_string()),
    };
    match engine.apply(&msg) {
        Ok(result) => HttpResponse::json(if result.is_applied() { 200 } else { 409 }, &result),
        Err(e) => HttpResponse::error(500, &e.to_string()),
    }
}

/// Accepts `{"text": "..."}` or the utterance as the raw body.
fn post_intent(engine: &Engine, text: &str) -> HttpResponse {
    let utterance = match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(obj)) => match obj.get("text") {
            Some(Value::String(s)) => s.clone(),
            _ => return HttpResponse::error(400, "expected {\"text\": \"...\"}"),
        },
        Ok(Value::String(s)) => s,
        _ => text.trim().to_string(),
    };
    match engine.intent(&utterance) {
        Ok(result) => HttpResponse::json(200, &result),
        Err(e) => HttpResponse::value(
            400,
            json!({
                "error": e.to_string(),
                "position": e.position,
                "token": e.token,
                "expected": e.expected,
            }),
        ),
    }
}

fn post_simulate(text: &str) -> HttpResponse {
    let req: SimulateRequest = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            return HttpResponse::error(
                400,
                &format!("expected {{\"scenario\": name, \"seed\"?: n}}: {e}"),
            )
        }
    };
    let run = builtin_scenario(&req.scenario).and_then(|s| match req.seed {
        Some(seed) => run_scenario_with_seed(&s, seed),
        None => run_scenario(&s),
    });
    match run {
        Ok(report) => HttpResponse::json(200, &report),
        Err(SimError::UnknownScenario(name)) => {
            HttpResponse::error(404, &format!("unknown scenario `{name}`"))
        }
        Err(e) => HttpResponse::error(500, &e.to_string()),
    }
}

fn since_param(query: &str) -> Result<u64, String> {
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        if let Some(v) = pair.strip_prefix("since=") {
            return v
                .parse()
                .map_err(|_| format!("`since` must be a sequence number, got `{v}`"));
        }
    }
    Ok(0)
}

async fn dispatch(
    State(engine): State<Arc<Engine>>,
    method: Method,
    uri: Uri,
    body: Bytes,
) -> Response {
    let target = uri
        .path_and_query()
        .map_or_else(|| uri.path().to_string(), |pq| pq.as_str().to_string());
    // Simulations can run for seconds; keep them off the async workers so
    // reads stay responsive.
    let resp = tokio::task::spawn_blocking(move || {
        handle_request(&engine, method.as_str(), &target, &body)
    })
    .await;
    let resp =
        resp.unwrap_or_else(|e| HttpResponse::error(500, &format!("request handler failed: {e}")));
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        resp.body,
    )
        .into_response()
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new().fallback(dispatch).with_state(engine)
}

/// Serve until the process is stopped.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(engine)).await
}

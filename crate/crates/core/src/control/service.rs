//! HTTP endpoints and the server-sent-event push stream.
//!
//! | route            | body                                   |
//! |------------------|----------------------------------------|
//! | `GET /status`    | [`RunHandle`](super::RunHandle)        |
//! | `GET /snapshot`  | latest [`Snapshot`] or `null`          |
//! | `GET /config`    | the run's config                       |
//! | `GET /events`    | recent events, `?since=STEP`           |
//! | `POST /command`  | [`Command`] in, [`Ack`] out            |
//! | `GET /stream`    | SSE: `state`, then `snapshot`…, `terminal` |

use std::convert::Infallible;
use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use super::{spawn, Ack, Command, ErrorCode, RunClient, RunOptions, ServerMessage};
use crate::engine::SimulationConfig;

pub fn router(client: RunClient) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/snapshot", get(snapshot))
        .route("/config", get(config))
        .route("/events", get(events))
        .route("/command", post(command))
        .route("/stream", get(stream_messages))
        .with_state(client)
}

async fn status(State(c): State<RunClient>) -> Response {
    Json(c.status()).into_response()
}

async fn snapshot(State(c): State<RunClient>) -> Response {
    Json(c.snapshot()).into_response()
}

async fn config(State(c): State<RunClient>) -> Response {
    Json(c.config().clone()).into_response()
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u32,
}

async fn events(State(c): State<RunClient>, Query(q): Query<Since>) -> Response {
    Json(c.events(q.since)).into_response()
}

async fn command(State(c): State<RunClient>, body: Bytes) -> Response {
    let cmd: Command = match serde_json::from_slice(&body) {
        Ok(cmd) => cmd,
        Err(e) => {
            let ack = Ack::rejected("UNKNOWN", c.status().status, ErrorCode::Malformed, e.to_string());
            return (StatusCode::BAD_REQUEST, Json(ack)).into_response();
        }
    };
    let ack = c.command(cmd).await;
    let code = match ack.error.as_ref().map(|e| e.code) {
        None => StatusCode::OK,
        Some(ErrorCode::RunTerminated) => StatusCode::CONFLICT,
        Some(ErrorCode::QueueFull) => StatusCode::SERVICE_UNAVAILABLE,
        Some(_) => StatusCode::BAD_REQUEST,
    };
    (code, Json(ack)).into_response()
}

fn sse_event(m: &ServerMessage) -> SseEvent {
    SseEvent::default().event(m.name()).data(serde_json::to_string(m).expect("message serializes"))
}

async fn stream_messages(State(c): State<RunClient>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let (state, rx) = c.subscribe();
    let terminal = matches!(&state, ServerMessage::State { run, .. } if run.status.is_terminal());
    let first = stream::iter([Ok(sse_event(&state))]);
    let rest = stream::unfold((rx, terminal), |(mut rx, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(m) => {
                    let end = matches!(m, ServerMessage::Terminal { .. });
                    return Some((Ok(sse_event(&m)), (rx, end)));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(futures::StreamExt::chain(first, rest)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

/// Starts the run and serves it on `addr` until the future is dropped.
pub async fn serve(config: SimulationConfig, addr: SocketAddr, opts: RunOptions) -> std::io::Result<()> {
    let (client, _thread) = spawn(config, opts).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("control service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(client))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Entry point for the `serve` subcommand.
pub fn serve_blocking(config: SimulationConfig, port: u16, paused: bool) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let opts = RunOptions { paused, interval: Duration::from_millis(50) };
    rt.block_on(serve(config, SocketAddr::from(([127, 0, 0, 1], port)), opts))
}

//! Steering a single run: a controller thread owns the [`World`] and drains a
//! bounded command queue at step boundaries; snapshots go out on a broadcast
//! channel. The HTTP service in [`service`] is a thin layer over [`RunClient`].

pub mod service;

use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use crate::engine::config::{check_value, SCHEMA_VERSION};
use crate::engine::{EngineError, Event, ParamPath, ScheduledChange, SimulationConfig, Snapshot, World};

pub use service::{router, serve, serve_blocking};

/// Recent events kept for `GET /events`.
const EVENT_HISTORY: usize = 2000;
const QUEUE_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommandKind {
    SetParam { path: String, value: u32 },
    Pause,
    Resume,
    Step {
        #[serde(default = "one")]
        n: u32,
    },
    SnapshotRequest,
    Stop,
}

fn one() -> u32 {
    1
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::SetParam { .. } => "SET_PARAM",
            CommandKind::Pause => "PAUSE",
            CommandKind::Resume => "RESUME",
            CommandKind::Step { .. } => "STEP",
            CommandKind::SnapshotRequest => "SNAPSHOT_REQUEST",
            CommandKind::Stop => "STOP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    #[serde(flatten)]
    pub kind: CommandKind,
    /// Client wall time, echoed back in the acknowledgment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued_at: Option<String>,
}

impl From<CommandKind> for Command {
    fn from(kind: CommandKind) -> Self {
        Command { kind, issued_at: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Running,
    Paused,
    Done,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    InvalidParamPath,
    InvalidValue,
    RunTerminated,
    QueueFull,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub issued_at: Option<String>,
    /// Step before which the command took (or will take) effect.
    pub applied_step: Option<u32>,
    /// For SET_PARAM: the value in force for that step after last-writer-wins.
    pub value: Option<u32>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Ack {
    pub fn rejected(command: &str, status: RunStatus, code: ErrorCode, message: impl Into<String>) -> Ack {
        Ack {
            ok: false,
            command: command.to_string(),
            issued_at: None,
            applied_step: None,
            value: None,
            status,
            snapshot: None,
            error: Some(ErrorBody { code, message: message.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHandle {
    pub schema_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    /// Steps completed so far.
    pub step: u32,
    pub steps: u32,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Messages on the push stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent once on subscription.
    State { run: RunHandle, snapshot: Option<Snapshot>, command_log: Vec<ScheduledChange> },
    Snapshot { snapshot: Snapshot },
    Terminal { run: RunHandle },
}

impl ServerMessage {
    pub fn name(&self) -> &'static str {
        match self {
            ServerMessage::State { .. } => "state",
            ServerMessage::Snapshot { .. } => "snapshot",
            ServerMessage::Terminal { .. } => "terminal",
        }
    }
}

#[derive(Debug)]
struct Shared {
    handle: RunHandle,
    snapshot: Option<Snapshot>,
    events: VecDeque<Event>,
    command_log: Vec<ScheduledChange>,
}

struct Request {
    command: Command,
    reply: oneshot::Sender<Ack>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub paused: bool,
    /// Pause between steps while running.
    pub interval: Duration,
}

/// Cheap, cloneable access to a controlled run.
#[derive(Clone)]
pub struct RunClient {
    tx: SyncSender<Request>,
    shared: Arc<RwLock<Shared>>,
    stream: broadcast::Sender<ServerMessage>,
    config: Arc<SimulationConfig>,
}

impl RunClient {
    fn enqueue(&self, command: Command) -> Result<oneshot::Receiver<Ack>, Ack> {
        let (reply, rx) = oneshot::channel();
        let name = command.kind.name();
        match self.tx.try_send(Request { command, reply }) {
            Ok(()) => Ok(rx),
            Err(TrySendError::Full(_)) => Err(Ack::rejected(name, self.status().status, ErrorCode::QueueFull, "command queue is full")),
            Err(TrySendError::Disconnected(_)) => Err(self.terminated(name)),
        }
    }

    fn terminated(&self, name: &str) -> Ack {
        Ack::rejected(name, self.status().status, ErrorCode::RunTerminated, "run has terminated")
    }

    pub async fn command(&self, command: Command) -> Ack {
        let name = command.kind.name();
        match self.enqueue(command) {
            Ok(rx) => rx.await.unwrap_or_else(|_| self.terminated(name)),
            Err(ack) => ack,
        }
    }

    /// Blocking variant for use outside an async runtime.
    pub fn command_blocking(&self, command: Command) -> Ack {
        let name = command.kind.name();
        match self.enqueue(command) {
            Ok(rx) => rx.blocking_recv().unwrap_or_else(|_| self.terminated(name)),
            Err(ack) => ack,
        }
    }

    pub fn status(&self) -> RunHandle {
        self.shared.read().expect("state lock").handle.clone()
    }

    pub fn snapshot(&self) -> Option<Snapshot> {
        self.shared.read().expect("state lock").snapshot.clone()
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Recent events with `step >= since`.
    pub fn events(&self, since: u32) -> Vec<Event> {
        self.shared.read().expect("state lock").events.iter().filter(|e| e.step >= since).cloned().collect()
    }

    /// Applied commands as event-schedule entries.
    pub fn command_log(&self) -> Vec<ScheduledChange> {
        self.shared.read().expect("state lock").command_log.clone()
    }

    /// Catch-up state plus a receiver for every later message.
    pub fn subscribe(&self) -> (ServerMessage, broadcast::Receiver<ServerMessage>) {
        let shared = self.shared.read().expect("state lock");
        let rx = self.stream.subscribe();
        let state = ServerMessage::State {
            run: shared.handle.clone(),
            snapshot: shared.snapshot.clone(),
            command_log: shared.command_log.clone(),
        };
        (state, rx)
    }
}

/// Builds the world and starts its controller thread.
pub fn spawn(config: SimulationConfig, opts: RunOptions) -> Result<(RunClient, JoinHandle<()>), EngineError> {
    let world = World::new(config.clone(), false)?;
    let digest = config.digest();
    let handle = RunHandle {
        schema_version: SCHEMA_VERSION,
        run_id: format!("run-{}-{}", &digest[..12], config.seed),
        status: if opts.paused { RunStatus::Paused } else { RunStatus::Running },
        step: 0,
        steps: config.steps,
        config_digest: digest,
        error: None,
    };
    let shared = Arc::new(RwLock::new(Shared { handle, snapshot: None, events: VecDeque::new(), command_log: Vec::new() }));
    let (tx, rx) = mpsc::sync_channel(QUEUE_DEPTH);
    let (stream, _) = broadcast::channel(1024);
    let mut controller = Controller {
        world,
        status: if opts.paused { RunStatus::Paused } else { RunStatus::Running },
        remaining: 0,
        pending: Vec::new(),
        events_seen: 0,
        shared: shared.clone(),
        stream: stream.clone(),
        interval: opts.interval,
    };
    if controller.world.is_done() {
        controller.finish(RunStatus::Done, None);
    }
    let thread = std::thread::Builder::new()
        .name("run-controller".into())
        .spawn(move || controller.run(rx))
        .expect("spawn controller thread");
    Ok((RunClient { tx, shared, stream, config: Arc::new(config) }, thread))
}

struct Controller {
    world: World,
    status: RunStatus,
    /// Steps still owed to STEP commands while paused.
    remaining: u32,
    pending: Vec<(ParamPath, u32)>,
    events_seen: usize,
    shared: Arc<RwLock<Shared>>,
    stream: broadcast::Sender<ServerMessage>,
    interval: Duration,
}

impl Controller {
    fn active(&self) -> bool {
        self.status == RunStatus::Running || (self.status == RunStatus::Paused && self.remaining > 0)
    }

    fn run(mut self, rx: Receiver<Request>) {
        while !self.status.is_terminal() {
            let mut batch = Vec::new();
            if !self.active() {
                match rx.recv() {
                    Ok(r) => batch.push(r),
                    Err(_) => {
                        self.finish(RunStatus::Done, None);
                        break;
                    }
                }
            }
            batch.extend(rx.try_iter());
            self.handle_batch(batch);
            if self.active() {
                self.step();
                if !self.interval.is_zero() && self.status == RunStatus::Running {
                    std::thread::sleep(self.interval);
                }
            }
        }
        // answer anything still queued
        for r in rx.try_iter() {
            let _ = r.reply.send(Ack::rejected(r.command.kind.name(), self.status, ErrorCode::RunTerminated, "run has terminated"));
        }
    }

    fn ack(&self, command: &Command) -> Ack {
        Ack {
            ok: true,
            command: command.kind.name().to_string(),
            issued_at: command.issued_at.clone(),
            applied_step: None,
            value: None,
            status: self.status,
            snapshot: None,
            error: None,
        }
    }

    /// Handles every command received since the last boundary. Concurrent
    /// SET_PARAMs on one path resolve last-writer-wins; every one of them is
    /// acknowledged with the value that will be in force.
    fn handle_batch(&mut self, batch: Vec<Request>) {
        let mut deferred = Vec::new();
        for Request { command, reply } in batch {
            let name = command.kind.name();
            if self.status.is_terminal() {
                let _ = reply.send(Ack::rejected(name, self.status, ErrorCode::RunTerminated, "run has terminated"));
                continue;
            }
            match &command.kind {
                CommandKind::SetParam { path, value } => {
                    let p: ParamPath = match path.parse() {
                        Ok(p) => p,
                        Err(e) => {
                            let _ = reply.send(Ack::rejected(name, self.status, ErrorCode::InvalidParamPath, format!("{e}")));
                            continue;
                        }
                    };
                    if let Err(m) = check_value(p, *value, self.world.banks.len()) {
                        let _ = reply.send(Ack::rejected(name, self.status, ErrorCode::InvalidValue, m));
                        continue;
                    }
                    self.pending.push((p, *value));
                    deferred.push((command, p, reply));
                    continue;
                }
                CommandKind::Pause => {
                    if self.status == RunStatus::Running {
                        self.status = RunStatus::Paused;
                    }
                    self.remaining = 0;
                }
                CommandKind::Resume => {
                    self.status = RunStatus::Running;
                    self.remaining = 0;
                }
                CommandKind::Step { n } => {
                    if *n == 0 {
                        let _ = reply.send(Ack::rejected(name, self.status, ErrorCode::InvalidValue, "STEP needs n >= 1"));
                        continue;
                    }
                    self.status = RunStatus::Paused;
                    self.remaining += n;
                }
                CommandKind::SnapshotRequest => {}
                CommandKind::Stop => self.finish(RunStatus::Done, None),
            }
            self.publish_status();
            let mut ack = self.ack(&command);
            ack.applied_step = Some(self.world.next_step);
            if command.kind == CommandKind::SnapshotRequest {
                // the last published snapshot; the opening state before any step
                let last = self.shared.read().expect("state lock").snapshot.clone();
                ack.snapshot = Some(last.unwrap_or_else(|| self.world.snapshot()));
            }
            let _ = reply.send(ack);
        }
        for (command, p, reply) in deferred {
            let value = self.pending.iter().rev().find(|(q, _)| *q == p).map(|(_, v)| *v);
            let mut ack = self.ack(&command);
            ack.applied_step = Some(self.world.next_step);
            ack.value = value;
            let _ = reply.send(ack);
        }
    }

    fn step(&mut self) {
        let commands = std::mem::take(&mut self.pending);
        match self.world.run_step_with(&commands) {
            Ok(snapshot) => {
                self.remaining = self.remaining.saturating_sub(1);
                {
                    let mut shared = self.shared.write().expect("state lock");
                    for (p, v) in commands {
                        shared.command_log.push(ScheduledChange { step: snapshot.step, param: p.to_string(), value: v });
                    }
                    for e in &self.world.events[self.events_seen..] {
                        if shared.events.len() == EVENT_HISTORY {
                            shared.events.pop_front();
                        }
                        shared.events.push_back(e.clone());
                    }
                    self.events_seen = self.world.events.len();
                    shared.snapshot = Some(snapshot.clone());
                    shared.handle.step = self.world.next_step;
                }
                let _ = self.stream.send(ServerMessage::Snapshot { snapshot });
                if self.world.is_done() {
                    self.finish(RunStatus::Done, None);
                }
            }
            Err(e) => self.finish(RunStatus::Failed, Some(e.to_string())),
        }
    }

    fn publish_status(&self) {
        self.shared.write().expect("state lock").handle.status = self.status;
    }

    fn finish(&mut self, status: RunStatus, error: Option<String>) {
        self.status = status;
        self.remaining = 0;
        let run = {
            let mut shared = self.shared.write().expect("state lock");
            shared.handle.status = status;
            shared.handle.error = error;
            shared.handle.clone()
        };
        let _ = self.stream.send(ServerMessage::Terminal { run });
    }
}

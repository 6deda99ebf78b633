//! HTTP front end for supervised sessions.
//!
//! Decisions for one session are serialized by that session's mutex; the
//! decision entry is written to the log before the engine mutates anything.
//! Observers read the backlog and subscribe to live entries under the same
//! lock, so a stream never skips or repeats a sequence number.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use rks_core::config::TrialConfig;
use rks_core::record::{CycleRow, TrialRecord};
use rks_core::runner::timestamp;

use crate::engine::{Decision, LogEvent, PendingTransfer, Phase, SessionEngine, SessionStatus};
use crate::error::BridgeError;
use crate::log::{read_entries, replay, AuditLog, AuditLogEntry};
use crate::prompts::{self, Prompt};

const CHANNEL_CAPACITY: usize = 256;

struct Inner {
    engine: SessionEngine,
    log: AuditLog,
}

struct SessionHandle {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<AuditLogEntry>,
}

impl SessionHandle {
    fn new(engine: SessionEngine, log: AuditLog) -> Arc<Self> {
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Arc::new(SessionHandle {
            inner: Mutex::new(Inner { engine, log }),
            tx,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Snapshot returned by the session endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub phase: Phase,
    pub created_at: String,
    pub pending_transfer: Option<PendingTransfer>,
    pub prompt: Option<Prompt>,
    pub blend: f64,
    pub cycles: Vec<CycleRow>,
    pub last_seq: u64,
    pub record: Option<TrialRecord>,
}

impl SessionView {
    fn of(inner: &Inner) -> Self {
        let e = &inner.engine;
        SessionView {
            id: e.id().to_owned(),
            status: e.status(),
            phase: e.phase(),
            created_at: e.created_at().to_owned(),
            pending_transfer: e.pending_transfer(),
            prompt: e.pending_transfer().and_then(|t| t.phase.prompt()).map(Prompt::from),
            blend: e.blend(),
            cycles: e.cycles().to_vec(),
            last_seq: inner.log.last_seq(),
            record: e.record().cloned(),
        }
    }
}

/// Session registry shared by all request handlers.
pub struct Bridge {
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    log_dir: Option<PathBuf>,
}

impl Bridge {
    /// Sessions persist their logs under `log_dir` when given; logs already
    /// there are replayed and their sessions resumed.
    pub fn new(log_dir: Option<PathBuf>) -> Result<Self, BridgeError> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &log_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_none_or(|e| e != "jsonl") {
                    continue;
                }
                let engine = replay(&read_entries(&path)?)?;
                let log = AuditLog::reopen(&path)?;
                sessions.insert(engine.id().to_owned(), SessionHandle::new(engine, log));
            }
        }
        Ok(Bridge {
            sessions: RwLock::new(sessions),
            log_dir,
        })
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, BridgeError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| BridgeError::UnknownSession(id.to_owned()))
    }

    pub fn create_session(&self, mut config: TrialConfig) -> Result<SessionView, BridgeError> {
        if config.rng_seed.is_none() {
            config.rng_seed = Some(rand::random());
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let now = timestamp();
        let (engine, created) = SessionEngine::new(id.clone(), config, &now)?;
        let mut log = match &self.log_dir {
            Some(dir) => AuditLog::create(&id, dir)?,
            None => AuditLog::in_memory(&id),
        };
        log.append(created, &now)?;
        let handle = SessionHandle::new(engine, log);
        let view = SessionView::of(&handle.lock());
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, handle);
        Ok(view)
    }

    pub fn session(&self, id: &str) -> Result<SessionView, BridgeError> {
        Ok(SessionView::of(&self.handle(id)?.lock()))
    }

    pub fn list(&self) -> Vec<SessionView> {
        let handles: Vec<_> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        let mut views: Vec<SessionView> = handles.iter().map(|h| SessionView::of(&h.lock())).collect();
        views.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        views
    }

    pub fn submit(&self, id: &str, mut decision: Decision) -> Result<SessionView, BridgeError> {
        let handle = self.handle(id)?;
        let mut inner = handle.lock();
        inner.engine.check(&decision)?;
        let now = timestamp();
        decision.session_id = Some(id.to_owned());
        decision.timestamp = Some(now.clone());

        let entry = inner.log.append(LogEvent::Decision(decision.clone()), &now)?.clone();
        let _ = handle.tx.send(entry);
        for event in inner.engine.apply(&decision, &now) {
            let entry = inner.log.append(event, &now)?.clone();
            let _ = handle.tx.send(entry);
        }
        Ok(SessionView::of(&inner))
    }

    pub fn entries(&self, id: &str, from: u64) -> Result<Vec<AuditLogEntry>, BridgeError> {
        Ok(self.handle(id)?.lock().log.since(from).to_vec())
    }

    /// Backlog from `from` plus a receiver for everything appended later.
    pub fn subscribe(
        &self,
        id: &str,
        from: u64,
    ) -> Result<(Vec<AuditLogEntry>, broadcast::Receiver<AuditLogEntry>), BridgeError> {
        let handle = self.handle(id)?;
        let inner = handle.lock();
        let rx = handle.tx.subscribe();
        Ok((inner.log.since(from).to_vec(), rx))
    }
}

impl IntoResponse for BridgeError {
    fn into_response(self) -> Response {
        let status = match &self {
            BridgeError::ConfigInvalid(_) => StatusCode::BAD_REQUEST,
            BridgeError::UnknownSession(_) => StatusCode::NOT_FOUND,
            BridgeError::StaleTransfer { .. } | BridgeError::SessionNotAwaiting(_) => StatusCode::CONFLICT,
            BridgeError::InvalidRubric(_) | BridgeError::InvalidDecision(_) => StatusCode::UNPROCESSABLE_ENTITY,
            BridgeError::Replay(_) | BridgeError::Io(_) | BridgeError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct FromQuery {
    from: Option<u64>,
}

async fn create(State(b): State<Arc<Bridge>>, body: axum::body::Bytes) -> Result<impl IntoResponse, BridgeError> {
    let config: TrialConfig = serde_json::from_slice(&body).map_err(|e| BridgeError::ConfigInvalid(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(b.create_session(config)?)))
}

async fn list(State(b): State<Arc<Bridge>>) -> Json<Vec<SessionView>> {
    Json(b.list())
}

async fn show(State(b): State<Arc<Bridge>>, Path(id): Path<String>) -> Result<Json<SessionView>, BridgeError> {
    Ok(Json(b.session(&id)?))
}

async fn decide(
    State(b): State<Arc<Bridge>>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Json<SessionView>, BridgeError> {
    let decision: Decision = serde_json::from_slice(&body).map_err(|e| BridgeError::InvalidDecision(e.to_string()))?;
    Ok(Json(b.submit(&id, decision)?))
}

async fn log(
    State(b): State<Arc<Bridge>>,
    Path(id): Path<String>,
    Query(q): Query<FromQuery>,
) -> Result<Json<Vec<AuditLogEntry>>, BridgeError> {
    Ok(Json(b.entries(&id, q.from.unwrap_or(1))?))
}

async fn prompt_list() -> Json<Vec<Prompt>> {
    Json(prompts::all())
}

fn sse_event(entry: &AuditLogEntry) -> Result<Event, Infallible> {
    let event = Event::default()
        .id(entry.seq.to_string())
        .event(entry.event.kind())
        .json_data(entry)
        .expect("entries serialize");
    Ok(event)
}

struct Tail {
    bridge: Arc<Bridge>,
    id: String,
    rx: broadcast::Receiver<AuditLogEntry>,
    last: u64,
    buffered: VecDeque<AuditLogEntry>,
}

/// Live entries after `last`; a lagging receiver refills from the log.
fn tail(t: Tail) -> impl Stream<Item = AuditLogEntry> {
    stream::unfold(t, |mut t| async move {
        loop {
            if let Some(e) = t.buffered.pop_front() {
                t.last = e.seq;
                return Some((e, t));
            }
            match t.rx.recv().await {
                Ok(e) if e.seq <= t.last => continue,
                Ok(e) => {
                    t.last = e.seq;
                    return Some((e, t));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = t.bridge.entries(&t.id, t.last + 1).ok()?;
                    t.buffered.extend(missed);
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    })
}

async fn events(
    State(b): State<Arc<Bridge>>,
    Path(id): Path<String>,
    Query(q): Query<FromQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, BridgeError> {
    let from = q.from.unwrap_or(1).max(1);
    let (backlog, rx) = b.subscribe(&id, from)?;
    let last = backlog.last().map_or(from - 1, |e| e.seq);
    let live = tail(Tail {
        bridge: b.clone(),
        id,
        rx,
        last,
        buffered: VecDeque::new(),
    });
    let stream = stream::iter(backlog).chain(live).map(|e| sse_event(&e));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(bridge: Arc<Bridge>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/decisions", post(decide))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/log", get(log))
        .route("/prompts", get(prompt_list))
        .with_state(bridge)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, log_dir: Option<PathBuf>) -> Result<(), BridgeError> {
    let bridge = Arc::new(Bridge::new(log_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, bridge).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, bridge: Arc<Bridge>) -> Result<(), BridgeError> {
    axum::serve(listener, router(bridge)).await?;
    Ok(())
}

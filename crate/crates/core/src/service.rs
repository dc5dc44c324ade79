//! HTTP and WebSocket API over [`Session`]s.
//!
//! Control calls are JSON; motion fields are `.flo` bodies; the mesh is OBJ
//! text. `GET /sessions/{id}/frames` upgrades to a WebSocket that carries
//! simulation progress as JSON text and rendered frames as binary messages:
//! a 4-byte little-endian frame index, an 8-byte little-endian revision,
//! then PNG bytes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};

use crate::edit::ObjectSpec;
use crate::error::Error;
use crate::io::png::encode_png;
use crate::io::SparseHint;
use crate::session::{CreateRequest, Request, Session, SessionInfo, SimulateRequest};
use crate::sim::StepDiagnostics;

/// Environment variable holding the bind address.
pub const BIND_ENV: &str = "SURFLUID_BIND";
/// Environment variable naming the snapshot directory.
pub const SNAPSHOT_ENV: &str = "SURFLUID_SNAPSHOT_DIR";
pub const DEFAULT_BIND: &str = "127.0.0.1:8765";

/// Messages pushed to frame streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Hello { revision: u64 },
    /// One simulation step of the mutation that will commit as `revision`.
    Progress {
        revision: u64,
        step: usize,
        total: usize,
        max_div_after: f64,
        particles: usize,
        cg_iterations: usize,
    },
    Committed { revision: u64 },
    /// Binary frame messages of this render follow.
    Render { revision: u64, frames: usize, field: usize, cyclic: bool },
    Done { revision: u64 },
    Error { error: String, message: String },
}

/// Commands a stream client may send.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Command {
    Render(RenderQuery),
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default)]
pub struct RenderQuery {
    pub field: usize,
    pub frames: usize,
    pub cyclic: bool,
    /// Render as soon as the stream opens.
    pub render: bool,
}

impl Default for RenderQuery {
    fn default() -> Self {
        Self {
            field: 0,
            frames: crate::render::DEFAULT_FRAMES,
            cyclic: true,
            render: true,
        }
    }
}

struct Handle {
    /// Serializes mutations.
    writer: Mutex<()>,
    /// Last committed state; readers clone the `Arc`.
    current: RwLock<Arc<Session>>,
    events: broadcast::Sender<Event>,
}

impl Handle {
    fn snapshot(&self) -> Arc<Session> {
        Arc::clone(&self.current.read().expect("session lock"))
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Handle>>>>,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(snapshot_dir: Option<PathBuf>) -> Self {
        Self {
            sessions: Arc::default(),
            snapshot_dir,
        }
    }

    /// Snapshot directory from [`SNAPSHOT_ENV`].
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(SNAPSHOT_ENV).map(PathBuf::from))
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }

    fn insert(&self, session: Session) -> (String, SessionInfo) {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let info = session.info();
        let (events, _) = broadcast::channel(256);
        let handle = Handle {
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(session)),
            events,
        };
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(handle));
        (id, info)
    }
}

/// JSON error body with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub message: String,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            kind: "NotFound".into(),
            message,
        }
    }

    fn conflict(expected: u64, current: u64) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            kind: "RevisionConflict".into(),
            message: format!("request was based on revision {expected}, session is at {current}"),
        }
    }
}

/// Status for an engine error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NoHints
        | Error::InvalidConfig(_)
        | Error::ObjectOutOfFrame
        | Error::SolverDiverged { .. }
        | Error::SingularSystem(_)
        | Error::AllHoles
        | Error::DegenerateTriangle(_)
        | Error::EmptySequence => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_for(&e),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.kind, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    #[serde(flatten)]
    pub info: SessionInfo,
}

/// Body of mutating calls: the payload plus an optional base revision.
#[derive(Debug, Deserialize)]
pub struct Guarded<T> {
    #[serde(flatten)]
    pub body: T,
    #[serde(default)]
    pub base_revision: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct HintsBody {
    pub hints: Vec<SparseHint>,
}

#[derive(Debug, Deserialize)]
pub struct ReplayBody {
    pub log: Vec<Request>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/replay", post(replay_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/hints", put(put_hints))
        .route("/sessions/{id}/simulate", post(simulate))
        .route("/sessions/{id}/objects", post(add_object))
        .route("/sessions/{id}/objects/{index}", delete(remove_object))
        .route("/sessions/{id}/motion/{frame}", get(get_motion))
        .route("/sessions/{id}/mesh", get(get_mesh))
        .route("/sessions/{id}/diagnostics", get(get_diagnostics))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/snapshot", post(snapshot))
        .route("/sessions/{id}/frames", get(stream_frames))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("worker panicked")
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let session = blocking(move || Session::create(req)).await?;
    let (id, info) = app.insert(session);
    Ok((StatusCode::CREATED, Json(Created { id, info })))
}

async fn replay_session(
    State(app): State<AppState>,
    Json(body): Json<ReplayBody>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let session = blocking(move || Session::replay(&body.log)).await?;
    let (id, info) = app.insert(session);
    Ok((StatusCode::CREATED, Json(Created { id, info })))
}

async fn session_info(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(app.get(&id)?.snapshot().info()))
}

/// Run one mutation: check the base revision, compute off the async
/// runtime, then publish the new state.
async fn mutate(app: &AppState, id: &str, base: Option<u64>, req: Request) -> ApiResult<Json<SessionInfo>> {
    let handle = app.get(id)?;
    let _guard = handle.writer.lock().await;
    let current = handle.snapshot();
    if let Some(b) = base {
        if b != current.revision {
            return Err(ApiError::conflict(b, current.revision));
        }
    }
    let next_rev = current.revision + 1;
    let events = handle.events.clone();
    let total = match &req {
        Request::Simulate(s) => s.warmup_steps + s.frames,
        _ => 0,
    };
    let mut work = (*current).clone();
    let work = blocking(move || {
        let progress = |d: &StepDiagnostics| {
            let _ = events.send(Event::Progress {
                revision: next_rev,
                step: d.step,
                total,
                max_div_after: d.max_div_after,
                particles: d.particles,
                cg_iterations: d.cg_iterations,
            });
        };
        work.apply(req, progress).map(|_| work)
    })
    .await?;
    let info = work.info();
    *handle.current.write().expect("session lock") = Arc::new(work);
    let _ = handle.events.send(Event::Committed { revision: info.revision });
    Ok(Json(info))
}

async fn put_hints(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(g): Json<Guarded<HintsBody>>,
) -> ApiResult<Json<SessionInfo>> {
    mutate(&app, &id, g.base_revision, Request::PutHints { hints: g.body.hints }).await
}

async fn simulate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(g): Json<Guarded<SimulateRequest>>,
) -> ApiResult<Json<SessionInfo>> {
    mutate(&app, &id, g.base_revision, Request::Simulate(g.body)).await
}

async fn add_object(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(g): Json<Guarded<ObjectSpec>>,
) -> ApiResult<Json<SessionInfo>> {
    mutate(&app, &id, g.base_revision, Request::AddObject(g.body)).await
}

#[derive(Debug, Default, Deserialize)]
pub struct RevisionQuery {
    pub base_revision: Option<u64>,
}

async fn remove_object(
    State(app): State<AppState>,
    Path((id, index)): Path<(String, usize)>,
    Query(q): Query<RevisionQuery>,
) -> ApiResult<Json<SessionInfo>> {
    mutate(&app, &id, q.base_revision, Request::RemoveObject { index }).await
}

fn with_revision(mut r: Response, revision: u64) -> Response {
    r.headers_mut()
        .insert("x-revision", HeaderValue::from_str(&revision.to_string()).expect("digits"));
    r
}

async fn get_motion(
    State(app): State<AppState>,
    Path((id, frame)): Path<(String, usize)>,
) -> ApiResult<Response> {
    let s = app.get(&id)?.snapshot();
    if frame >= s.fields.len() {
        return Err(ApiError::not_found(format!(
            "frame {frame} not available ({} fields at revision {})",
            s.fields.len(),
            s.revision
        )));
    }
    let body = s.motion_flo(frame)?;
    let r = ([(header::CONTENT_TYPE, "application/octet-stream")], body).into_response();
    Ok(with_revision(r, s.revision))
}

async fn get_mesh(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = app.get(&id)?.snapshot();
    let r = ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], s.mesh.to_obj()).into_response();
    Ok(with_revision(r, s.revision))
}

async fn get_diagnostics(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let s = app.get(&id)?.snapshot();
    Ok(with_revision(Json(s.diagnostics.clone()).into_response(), s.revision))
}

async fn get_log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = app.get(&id)?.snapshot();
    let body = serde_json::json!({ "log": s.log });
    Ok(with_revision(Json(body).into_response(), s.revision))
}

async fn snapshot(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let s = app.get(&id)?.snapshot();
    let Some(root) = app.snapshot_dir.clone() else {
        return Err(ApiError {
            status: StatusCode::CONFLICT,
            kind: "SnapshotsDisabled".into(),
            message: format!("set {SNAPSHOT_ENV} to enable snapshots"),
        });
    };
    let dir = root.join(&id).join(format!("rev{:06}", s.revision));
    let out = blocking(move || -> crate::Result<PathBuf> {
        s.scene.save(dir.join("scene"))?;
        let doc = serde_json::json!({
            "revision": s.revision,
            "config": s.config,
            "log": s.log,
        });
        std::fs::write(dir.join("session.json"), serde_json::to_vec_pretty(&doc)?)?;
        Ok(dir)
    })
    .await?;
    Ok(Json(serde_json::json!({ "path": out })))
}

async fn stream_frames(
    ws: WebSocketUpgrade,
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> ApiResult<Response> {
    let handle = app.get(&id)?;
    Ok(ws.on_upgrade(move |socket| run_stream(socket, handle, q)))
}

async fn send_event(socket: &mut WebSocket, e: &Event) -> bool {
    let text = serde_json::to_string(e).expect("event serializes");
    socket.send(Message::Text(text.into())).await.is_ok()
}

/// Render on the committed snapshot and push every frame.
async fn send_render(socket: &mut WebSocket, handle: &Handle, q: RenderQuery) -> bool {
    let s = handle.snapshot();
    let revision = s.revision;
    let rendered = blocking(move || {
        let seq = s.render(q.field, q.frames, q.cyclic)?;
        seq.frames.iter().map(encode_png).collect::<crate::Result<Vec<_>>>()
    })
    .await;
    let pngs = match rendered {
        Ok(p) => p,
        Err(e) => {
            let e = ApiError::from(e);
            return send_event(socket, &Event::Error { error: e.kind, message: e.message }).await;
        }
    };
    let start = Event::Render {
        revision,
        frames: pngs.len(),
        field: q.field,
        cyclic: q.cyclic,
    };
    if !send_event(socket, &start).await {
        return false;
    }
    for (i, png) in pngs.into_iter().enumerate() {
        let mut msg = Vec::with_capacity(12 + png.len());
        msg.extend_from_slice(&(i as u32).to_le_bytes());
        msg.extend_from_slice(&revision.to_le_bytes());
        msg.extend_from_slice(&png);
        if socket.send(Message::Binary(msg.into())).await.is_err() {
            return false;
        }
    }
    send_event(socket, &Event::Done { revision }).await
}

async fn run_stream(mut socket: WebSocket, handle: Arc<Handle>, q: RenderQuery) {
    let mut events = handle.events.subscribe();
    let revision = handle.snapshot().revision;
    if !send_event(&mut socket, &Event::Hello { revision }).await {
        return;
    }
    if q.render && !handle.snapshot().fields.is_empty() && !send_render(&mut socket, &handle, q).await {
        return;
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(e) => if !send_event(&mut socket, &e).await { return },
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(t))) => {
                    match serde_json::from_str::<Command>(t.as_str()) {
                        Ok(Command::Render(rq)) => {
                            if !send_render(&mut socket, &handle, rq).await { return }
                        }
                        Err(e) => {
                            let ev = Event::Error { error: "BadCommand".into(), message: e.to_string() };
                            if !send_event(&mut socket, &ev).await { return }
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Bind address from [`BIND_ENV`], else `port` on localhost, else the default.
pub fn bind_address(port: Option<u16>) -> Result<SocketAddr, std::net::AddrParseError> {
    match (port, std::env::var(BIND_ENV)) {
        (Some(p), Ok(addr)) => {
            let mut a: SocketAddr = addr.parse()?;
            a.set_port(p);
            Ok(a)
        }
        (Some(p), Err(_)) => Ok(SocketAddr::from(([127, 0, 0, 1], p))),
        (None, Ok(addr)) => addr.parse(),
        (None, Err(_)) => DEFAULT_BIND.parse(),
    }
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

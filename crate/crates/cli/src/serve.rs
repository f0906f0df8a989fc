//! Session server for recording trajectories interactively.
//!
//! Every session owns one engine instance. Request and response bodies are
//! JSON documents described by `schema/serve.schema.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use agentest_core::engine::{decode_actions, step, Action, GameDescription, GameState, Interaction, Pos, Status, Trajectory};
use agentest_core::fixtures::Game;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// The published schema document.
pub const SCHEMA: &str = include_str!("../schema/serve.schema.json");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub game: String,
    pub level: u32,
    #[serde(default)]
    pub tester: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionRequest {
    /// One token of `UDLRXN`.
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvatarView {
    pub x: i32,
    pub y: i32,
    pub dir: String,
    pub state: String,
    pub alive: bool,
}

/// Board content; two boards are equal exactly when the game states are.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    pub width: usize,
    pub height: usize,
    /// One glyph per cell, row by row.
    pub rows: Vec<String>,
    /// Sprite names per cell in row-major order, avatar excluded.
    pub cells: Vec<Vec<String>>,
    pub avatar: AvatarView,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub version: u32,
    pub session: String,
    pub game: String,
    pub level: u32,
    pub tick: u32,
    pub status: String,
    pub finished: bool,
    /// Number of actions applied so far.
    pub history: usize,
    pub legal_actions: Vec<String>,
    pub board: Board,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionView {
    pub eta0: String,
    pub eta1: String,
    pub x: i32,
    pub y: i32,
    pub dir: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub avatar_state: String,
    pub mover: String,
}

impl InteractionView {
    pub fn of(desc: &GameDescription, z: &Interaction) -> Self {
        Self {
            eta0: desc.name(z.eta0).to_string(),
            eta1: desc.name(z.eta1).to_string(),
            x: z.pos.x,
            y: z.pos.y,
            dir: format!("{:?}", z.dir),
            kind: format!("{:?}", z.kind),
            avatar_state: desc.name(z.avatar_state).to_string(),
            mover: format!("{:?}", z.mover),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepResponse {
    pub version: u32,
    pub state: SessionState,
    pub interactions: Vec<InteractionView>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinishResponse {
    pub version: u32,
    pub state: SessionState,
    pub trajectory: Trajectory,
    /// File the trajectory was appended to.
    pub path: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub version: u32,
    pub error: String,
}

#[derive(Debug)]
pub enum ApiError {
    UnknownGame(String),
    UnknownLevel(String, u32),
    UnknownSession(String),
    BadAction(String),
    Terminated(String),
    Io(std::io::Error),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::UnknownGame(g) => (StatusCode::NOT_FOUND, format!("unknown game {g}")),
            ApiError::UnknownLevel(g, l) => (StatusCode::NOT_FOUND, format!("game {g} has no level {l}")),
            ApiError::UnknownSession(s) => (StatusCode::NOT_FOUND, format!("unknown session {s}")),
            ApiError::BadAction(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Terminated(s) => (StatusCode::CONFLICT, format!("session {s} has ended")),
            ApiError::Io(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        };
        (code, Json(ErrorBody { version: SCHEMA_VERSION, error: msg })).into_response()
    }
}

struct Session {
    game: String,
    level: u32,
    tester: String,
    desc: Arc<GameDescription>,
    state: GameState,
    actions: Vec<Action>,
    finished: bool,
}

pub struct ServerState {
    games: BTreeMap<String, Game>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next: AtomicU64,
    out_dir: PathBuf,
}

impl ServerState {
    pub fn new(games: Vec<Game>, out_dir: PathBuf) -> Self {
        Self {
            games: games.into_iter().map(|g| (g.id.clone(), g)).collect(),
            sessions: Mutex::new(HashMap::new()),
            next: AtomicU64::new(1),
            out_dir,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

fn legal_actions(s: &Session) -> Vec<String> {
    if s.finished || s.state.status != Status::Running {
        return Vec::new();
    }
    Action::ALL
        .iter()
        .filter(|&&a| a != Action::Use || s.state.use_enabled)
        .map(|a| a.token().to_string())
        .collect()
}

fn board(desc: &GameDescription, state: &GameState) -> Board {
    let mut cells = Vec::with_capacity(state.width * state.height);
    for y in 0..state.height as i32 {
        for x in 0..state.width as i32 {
            cells.push(state.cell(Pos::new(x, y)).iter().map(|&s| desc.name(s).to_string()).collect());
        }
    }
    let a = state.avatar;
    Board {
        width: state.width,
        height: state.height,
        rows: state.render(desc).lines().map(String::from).collect(),
        cells,
        avatar: AvatarView { x: a.pos.x, y: a.pos.y, dir: format!("{:?}", a.dir), state: desc.name(a.state).to_string(), alive: a.alive },
    }
}

fn view(id: &str, s: &Session) -> SessionState {
    SessionState {
        version: SCHEMA_VERSION,
        session: id.to_string(),
        game: s.game.clone(),
        level: s.level,
        tick: s.state.tick,
        status: format!("{:?}", s.state.status),
        finished: s.finished,
        history: s.actions.len(),
        legal_actions: legal_actions(s),
        board: board(&s.desc, &s.state),
    }
}

async fn create(State(st): State<Arc<ServerState>>, Json(req): Json<CreateSession>) -> Result<Json<SessionState>, ApiError> {
    let game = st.games.get(&req.game).ok_or_else(|| ApiError::UnknownGame(req.game.clone()))?;
    let level = game.level(req.level).map_err(|_| ApiError::UnknownLevel(req.game.clone(), req.level))?;
    let id = format!("s{}", st.next.fetch_add(1, Ordering::Relaxed));
    let session = Session {
        game: game.id.clone(),
        level: level.id,
        tester: if req.tester.is_empty() { "human".into() } else { req.tester },
        desc: game.desc.clone(),
        state: level.initial.clone(),
        actions: Vec::new(),
        finished: false,
    };
    let v = view(&id, &session);
    st.sessions.lock().expect("session map lock").insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(v))
}

async fn get_state(State(st): State<Arc<ServerState>>, Path(id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    let s = st.session(&id)?;
    let s = s.lock().expect("session lock");
    Ok(Json(view(&id, &s)))
}

async fn act(
    State(st): State<Arc<ServerState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<StepResponse>, ApiError> {
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session lock");
    if s.finished || s.state.status != Status::Running {
        return Err(ApiError::Terminated(id));
    }
    let action = match decode_actions(req.action.trim()).as_deref() {
        Some([a]) => *a,
        _ => return Err(ApiError::BadAction(format!("expected one action token of UDLRXN, got {:?}", req.action))),
    };
    let desc = s.desc.clone();
    let out = step(&desc, &mut s.state, action).map_err(|e| ApiError::BadAction(e.to_string()))?;
    s.actions.push(action);
    let interactions = out.interactions.iter().map(|z| InteractionView::of(&desc, z)).collect();
    Ok(Json(StepResponse { version: SCHEMA_VERSION, state: view(&id, &s), interactions }))
}

async fn finish(State(st): State<Arc<ServerState>>, Path(id): Path<String>) -> Result<Json<FinishResponse>, ApiError> {
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session lock");
    if s.finished {
        return Err(ApiError::Terminated(id));
    }
    let trajectory = Trajectory::new(s.game.clone(), s.level, s.tester.clone(), s.actions.clone());
    let dir = st.out_dir.join("sessions");
    std::fs::create_dir_all(&dir).map_err(ApiError::Io)?;
    let path = dir.join(format!("{id}.jsonl"));
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(ApiError::Io)?;
    writeln!(f, "{}", trajectory.to_jsonl()).map_err(ApiError::Io)?;
    s.finished = true;
    log::info!("session {id} finished with {} actions", s.actions.len());
    Ok(Json(FinishResponse {
        version: SCHEMA_VERSION,
        state: view(&id, &s),
        trajectory,
        path: path.display().to_string(),
    }))
}

async fn schema() -> impl IntoResponse {
    ([(axum::http::header::CONTENT_TYPE, "application/schema+json")], SCHEMA)
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(get_state))
        .route("/sessions/{id}/action", post(act))
        .route("/sessions/{id}/finish", post(finish))
        .with_state(state)
}

/// Serves `games` on `bind` until the process is stopped.
pub async fn serve(games: Vec<Game>, bind: &str, out_dir: PathBuf) -> anyhow::Result<()> {
    let app = router(Arc::new(ServerState::new(games, out_dir)));
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

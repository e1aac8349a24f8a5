//! JSON-over-HTTP session service.
//!
//! Each session sits behind its own mutex; a request that finds it held gets
//! `429` with `Retry-After` instead of queueing. Views are served from a
//! snapshot refreshed after every mutation, so reads never wait on a running
//! automation burst. With a data directory configured every session keeps a
//! `<id>.json` with its inputs and an append-only `<id>.journal`, and
//! [`AppState::recover`] rebuilds sessions from them by replay.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ifwer_core::shrinkers::{default_refit_every, run_steps, Strategy};
use ifwer_core::simulation::{build_scorer, rep_rng, Generator, ScorerKind};
use ifwer_core::{AnalystView, Journal, Session, SessionConfig, Tree};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{AppError, AppResult};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    fn busy() -> ApiError {
        ApiError::new(StatusCode::TOO_MANY_REQUESTS, "another mutation is in progress")
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl From<ifwer_core::Error> for ApiError {
    fn from(e: ifwer_core::Error) -> ApiError {
        use ifwer_core::Error as E;
        let status = match e {
            E::Stopped | E::AdjustedStart(_) => StatusCode::CONFLICT,
            E::Fit(_) | E::Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> ApiError {
        match e {
            AppError::Core(c) => c.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.message }));
        if self.status == StatusCode::TOO_MANY_REQUESTS {
            (self.status, [(header::RETRY_AFTER, "1")], body).into_response()
        } else {
            (self.status, body).into_response()
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Inputs needed to rebuild a session from its journal.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stored {
    config: SessionConfig,
    ids: Vec<i64>,
    pvalues: Vec<f64>,
    covariates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parents: Option<Vec<Option<usize>>>,
}

struct Live {
    session: Session,
    /// Journal records already appended to disk.
    flushed: usize,
}

pub struct SessionEntry {
    live: Mutex<Live>,
    snapshot: RwLock<Arc<AnalystView>>,
    ids: Vec<i64>,
    tree: Option<Tree>,
}

impl SessionEntry {
    pub fn view(&self) -> Arc<AnalystView> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Holds the mutation lock, as a long-running request would.
    pub fn hold(&self) -> std::sync::MutexGuard<'_, impl Sized> {
        self.live.lock().expect("session lock")
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<SessionEntry>>>>,
    dir: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn in_memory() -> AppState {
        AppState::default()
    }

    /// State persisted under `dir`, with any sessions found there replayed.
    pub fn recover(dir: &Path) -> AppResult<AppState> {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let state = AppState {
            sessions: Arc::default(),
            dir: Some(Arc::new(dir.to_path_buf())),
        };
        let entries = std::fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| AppError::Persist(format!("bad file name {}", path.display())))?
                .to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
            let stored: Stored =
                serde_json::from_str(&text).map_err(|e| AppError::Persist(format!("{}: {e}", path.display())))?;
            let jpath = dir.join(format!("{id}.journal"));
            let jtext = std::fs::read_to_string(&jpath).map_err(|e| AppError::io(&jpath, e))?;
            let journal = Journal::parse(&jtext)?;
            let session = Session::replay(&journal, &stored.pvalues, stored.covariates.clone(), stored.config.clone())?;
            let tree = stored.parents.clone().map(Tree::from_parents).transpose()?;
            let flushed = journal.records.len();
            state.insert(id, session, flushed, stored.ids, tree);
        }
        Ok(state)
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionEntry>> {
        self.sessions.read().expect("registry lock").get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn insert(&self, id: String, session: Session, flushed: usize, ids: Vec<i64>, tree: Option<Tree>) -> Arc<SessionEntry> {
        let entry = Arc::new(SessionEntry {
            snapshot: RwLock::new(Arc::new(session.view())),
            live: Mutex::new(Live { session, flushed }),
            ids,
            tree,
        });
        self.sessions
            .write()
            .expect("registry lock")
            .insert(id, entry.clone());
        entry
    }

    fn journal_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.journal")))
    }

    fn persist_new(&self, id: &str, stored: &Stored, session: &Session) -> AppResult<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{id}.json"));
        let text = serde_json::to_string(stored).map_err(|e| AppError::Persist(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
        let jpath = dir.join(format!("{id}.journal"));
        std::fs::write(&jpath, format!("{}\n", Journal::header(session.digest()))).map_err(|e| AppError::io(&jpath, e))
    }

    /// Appends journal records written since the last flush.
    fn flush(&self, id: &str, live: &mut Live) -> AppResult<()> {
        let log = live.session.exclusion_log();
        if let Some(path) = self.journal_path(id) {
            if live.flushed < log.len() {
                let mut file = OpenOptions::new()
                    .append(true)
                    .open(&path)
                    .map_err(|e| AppError::io(&path, e))?;
                let mut text = String::new();
                for r in &log[live.flushed..] {
                    text.push_str(&r.to_string());
                    text.push('\n');
                }
                file.write_all(text.as_bytes()).map_err(|e| AppError::io(&path, e))?;
            }
        }
        live.flushed = log.len();
        Ok(())
    }

    /// Runs `f` under the session's mutation lock, then persists and
    /// refreshes the snapshot. Contention is reported rather than awaited.
    fn mutate<F>(&self, id: &str, f: F) -> ApiResult<Arc<AnalystView>>
    where
        F: FnOnce(&mut Session, &SessionEntry) -> ApiResult<()>,
    {
        let entry = self.session(id).ok_or_else(|| ApiError::not_found(id))?;
        let mut live = match entry.live.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(ApiError::busy()),
            Err(TryLockError::Poisoned(_)) => {
                return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "session lock poisoned"))
            }
        };
        let result = f(&mut live.session, &entry);
        self.flush(id, &mut live)?;
        let view = Arc::new(live.session.view());
        *entry.snapshot.write().expect("snapshot lock") = view.clone();
        result.map(|_| view)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct InlineData {
    pub pvalues: Vec<f64>,
    #[serde(default)]
    pub covariates: Vec<Vec<f64>>,
    /// Parent index per hypothesis for tree-structured data.
    #[serde(default)]
    pub parents: Option<Vec<Option<usize>>>,
    /// External ids reported by `/result`; `1..=n` when absent.
    #[serde(default)]
    pub ids: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    pub config: SessionConfig,
    #[serde(default)]
    pub data: Option<InlineData>,
    #[serde(default)]
    pub generator: Option<Generator>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Created {
    pub session_id: String,
    pub view: Arc<AnalystView>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExcludeRequest {
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AutoRequest {
    /// `cone_peel`, `subtree_prune` or `lowest_score`.
    pub strategy: String,
    #[serde(default)]
    pub params: Value,
    pub steps: usize,
    #[serde(default)]
    pub scorer: ScorerKind,
}

impl AutoRequest {
    fn strategy(&self) -> ApiResult<Strategy> {
        let mut obj = match &self.params {
            Value::Null => serde_json::Map::new(),
            Value::Object(m) => m.clone(),
            _ => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "params must be an object")),
        };
        obj.insert("kind".into(), Value::String(self.strategy.clone()));
        serde_json::from_value(Value::Object(obj))
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("bad strategy: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultBody {
    pub rejected: Vec<i64>,
    pub indices: Vec<usize>,
    pub step: usize,
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
}

async fn create(State(state): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<(StatusCode, Json<Created>)> {
    let (pvalues, covariates, parents, ids) = match (req.data, req.generator) {
        (Some(d), None) => {
            let n = d.pvalues.len();
            let ids = d.ids.unwrap_or_else(|| (1..=n as i64).collect());
            if ids.len() != n {
                return Err(unprocessable(format!("{} ids for {n} p-values", ids.len())));
            }
            (d.pvalues, d.covariates, d.parents, ids)
        }
        (None, Some(g)) => {
            let sim = g.generate(&mut rep_rng(req.seed, 0))?;
            let ids = (1..=sim.pvalues.len() as i64).collect();
            let parents = sim.tree.map(|t| t.parents().to_vec());
            (sim.pvalues, sim.covariates, parents, ids)
        }
        _ => return Err(unprocessable("give exactly one of data or generator")),
    };
    let tree = parents.clone().map(Tree::from_parents).transpose()?;
    if let Some(t) = &tree {
        if t.len() != pvalues.len() {
            return Err(unprocessable("parents and p-values differ in length"));
        }
    }
    let session = Session::create(&pvalues, covariates.clone(), req.config.clone())?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let stored = Stored {
        config: req.config,
        ids: ids.clone(),
        pvalues,
        covariates,
        parents,
    };
    state.persist_new(&id, &stored, &session)?;
    let entry = state.insert(id.clone(), session, 0, ids, tree);
    {
        let mut live = entry.live.lock().expect("session lock");
        state.flush(&id, &mut live)?;
    }
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            view: entry.view(),
        }),
    ))
}

async fn view(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Arc<AnalystView>>> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(entry.view()))
}

async fn exclude(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ExcludeRequest>,
) -> ApiResult<Json<Arc<AnalystView>>> {
    let view = state.mutate(&id, |s, _| {
        s.exclude(&req.indices)?;
        Ok(())
    })?;
    Ok(Json(view))
}

async fn auto(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<AutoRequest>,
) -> ApiResult<Json<Arc<AnalystView>>> {
    let strategy = req.strategy()?;
    let task = tokio::task::spawn_blocking(move || {
        state.mutate(&id, |s, entry| {
            if s.is_stopped() {
                return Err(ifwer_core::Error::Stopped.into());
            }
            let dim = s.records().first().map_or(0, |r| r.covariates().len());
            let mut scorer = build_scorer(req.scorer, entry.tree.as_ref(), dim);
            let refit = default_refit_every(s.len());
            run_steps(s, &strategy, scorer.as_mut(), entry.tree.as_ref(), refit, Some(req.steps))?;
            Ok(())
        })
    });
    let view = task
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(view))
}

async fn adjusted_start(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Arc<AnalystView>>> {
    let view = state.mutate(&id, |s, _| {
        s.adjusted_start()?;
        Ok(())
    })?;
    Ok(Json(view))
}

async fn journal(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Journal>> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let live = match entry.live.try_lock() {
        Ok(g) => g,
        Err(TryLockError::WouldBlock) => return Err(ApiError::busy()),
        Err(TryLockError::Poisoned(_)) => {
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "session lock poisoned"))
        }
    };
    Ok(Json(live.session.journal()))
}

async fn result(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ResultBody>> {
    let entry = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let view = entry.view();
    let Some(indices) = view.rejected.clone() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is still active"));
    };
    Ok(Json(ResultBody {
        rejected: indices.iter().map(|&i| entry.ids[i]).collect(),
        indices,
        step: view.step,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/exclude", post(exclude))
        .route("/sessions/{id}/auto", post(auto))
        .route("/sessions/{id}/adjusted-start", post(adjusted_start))
        .route("/sessions/{id}/journal", get(journal))
        .route("/sessions/{id}/result", get(result))
        .with_state(state)
}

pub async fn serve(addr: &str, data_dir: Option<&Path>) -> AppResult<()> {
    let state = match data_dir {
        Some(dir) => AppState::recover(dir)?,
        None => AppState::in_memory(),
    };
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::io(addr, e))?;
    eprintln!("listening on {addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io(addr, e))
}

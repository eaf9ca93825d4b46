//! HTTP+JSON annotation service.
//!
//! | method | path                         | body / result                          |
//! |--------|------------------------------|----------------------------------------|
//! | POST   | `/sessions`                  | [`CreateSession`] → [`SessionCreated`] |
//! | GET    | `/sessions/{id}/prediction`  | [`PredictionView`]                     |
//! | POST   | `/sessions/{id}/annotations` | [`AnnotationBatch`] → [`DeltaSummary`] |
//! | GET    | `/sessions/{id}/report`      | [`SessionReport`]                      |
//! | GET    | `/checkpoints`               | list of [`CheckpointInfo`]             |
//!
//! Errors come back as `{"error": "..."}` with a 4xx/5xx status.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{assemble_input, Chromagram, FeatureMatrix};
use crate::labels::{frames_from_intervals, parse_lab, HarmonyFrameLabel};
use crate::model::Serenade;
use crate::session::{
    AnnotationBatch, DeltaSummary, PredictionView, Session, SessionError, SessionReport,
};
use crate::training::{load_features, load_track, Checkpoint, CheckpointError};

/// Service configuration, a flat TOML table:
///
/// ```toml
/// port = 8080
/// checkpoint_dir = "checkpoints"
/// corpus_dir = "corpus"
/// session_dir = "sessions"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    /// Sessions are kept in memory only when unset.
    pub session_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint_dir: PathBuf::from("checkpoints"),
            corpus_dir: None,
            session_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads a config file; relative directories resolve against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut config.checkpoint_dir);
            config.corpus_dir.as_mut().map(fix);
            config.session_dir.as_mut().map(fix);
        }
        Ok(config)
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown checkpoint {0:?}")]
    UnknownCheckpoint(String),
    #[error("unknown track {0:?}")]
    UnknownTrack(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("checkpoint {id:?}: {source}")]
    Checkpoint {
        id: String,
        #[source]
        source: CheckpointError,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_)
            | ServiceError::UnknownCheckpoint(_)
            | ServiceError::UnknownTrack(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Session(
                SessionError::InvalidCell { .. }
                | SessionError::InvalidRange { .. }
                | SessionError::GroundTruthLength { .. }
                | SessionError::Features(_),
            ) => StatusCode::BAD_REQUEST,
            ServiceError::Checkpoint { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub id: String,
    pub epoch: usize,
    pub params: usize,
    pub validation_loss: Option<f64>,
}

/// Checkpoints are `<id>.srnd` files, loaded once and shared read-only.
pub struct CheckpointStore {
    dir: PathBuf,
    loaded: Mutex<HashMap<String, (Arc<Serenade>, CheckpointInfo)>>,
}

impl CheckpointStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointStore {
            dir: dir.into(),
            loaded: Mutex::new(HashMap::new()),
        }
    }

    pub fn ids(&self) -> Result<Vec<String>, ServiceError> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".srnd").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn get(&self, id: &str) -> Result<(Arc<Serenade>, CheckpointInfo), ServiceError> {
        if let Some(hit) = self.loaded.lock().expect("store lock").get(id) {
            return Ok(hit.clone());
        }
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(ServiceError::UnknownCheckpoint(id.to_string()));
        }
        let path = self.dir.join(format!("{id}.srnd"));
        if !path.is_file() {
            return Err(ServiceError::UnknownCheckpoint(id.to_string()));
        }
        let ck = Checkpoint::load(&path).map_err(|source| ServiceError::Checkpoint {
            id: id.to_string(),
            source,
        })?;
        let info = CheckpointInfo {
            id: id.to_string(),
            epoch: ck.meta.epoch,
            params: ck.model.param_count(),
            validation_loss: ck
                .meta
                .validation_loss
                .get(ck.meta.epoch.wrapping_sub(1))
                .copied(),
        };
        let entry = (Arc::new(ck.model), info);
        self.loaded
            .lock()
            .expect("store lock")
            .insert(id.to_string(), entry.clone());
        Ok(entry)
    }
}

/// Chromagrams as `CHRO1` text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureUpload {
    pub treble: String,
    pub bass: String,
}

/// Ground truth as `.lab` text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabUpload {
    pub chords: String,
    #[serde(default)]
    pub keys: String,
}

/// Either `track` (a stem in the corpus directory) or `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub checkpoint: String,
    #[serde(default)]
    pub track: Option<String>,
    #[serde(default)]
    pub features: Option<FeatureUpload>,
    #[serde(default)]
    pub ground_truth: Option<LabUpload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub checkpoint: String,
    pub frames: usize,
    pub has_ground_truth: bool,
    pub prediction: PredictionView,
}

type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

pub struct AppState {
    pub config: ServiceConfig,
    pub checkpoints: CheckpointStore,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            checkpoints: CheckpointStore::new(&config.checkpoint_dir),
            config,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Replays every session stored under `session_dir`. Sessions whose
    /// checkpoint is gone are skipped with a warning.
    pub fn restore_sessions(&self) -> Result<usize, ServiceError> {
        let Some(root) = &self.config.session_dir else {
            return Ok(0);
        };
        if !root.exists() {
            return Ok(0);
        }
        let mut restored = 0;
        for entry in std::fs::read_dir(root)? {
            let dir = entry?.path();
            if !dir.join("session.json").is_file() {
                continue;
            }
            let session = Session::stored_checkpoint(&dir)
                .map_err(ServiceError::from)
                .and_then(|ck| self.checkpoints.get(&ck))
                .and_then(|(model, _)| Ok(Session::open(&dir, model)?));
            match session {
                Ok(s) => {
                    self.insert(s);
                    restored += 1;
                }
                Err(e) => log::warn!("skipping session {}: {e}", dir.display()),
            }
        }
        Ok(restored)
    }

    fn insert(&self, session: Session) {
        let id = session.id().to_string();
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn new_id(&self) -> String {
        loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !self
                .sessions
                .read()
                .expect("sessions lock")
                .contains_key(&id)
            {
                return id;
            }
        }
    }

    fn load_input(
        &self,
        req: &CreateSession,
    ) -> Result<(FeatureMatrix, Option<Vec<HarmonyFrameLabel>>), ServiceError> {
        let bad = |m: String| ServiceError::BadRequest(m);
        let (features, mut gt) = match (&req.track, &req.features) {
            (Some(track), None) => {
                let dir = self
                    .config
                    .corpus_dir
                    .as_ref()
                    .ok_or_else(|| bad("no corpus_dir configured".into()))?;
                if track.is_empty() || track.contains(['/', '\\']) || track.starts_with('.') {
                    return Err(ServiceError::UnknownTrack(track.clone()));
                }
                let stem = dir.join(track);
                if !dir.join(format!("{track}.treble.chroma")).is_file() {
                    return Err(ServiceError::UnknownTrack(track.clone()));
                }
                if dir.join(format!("{track}.chords.lab")).is_file() {
                    let (f, labels) = load_track(&stem).map_err(SessionError::from)?;
                    (f, Some(labels))
                } else {
                    (load_features(&stem).map_err(SessionError::from)?, None)
                }
            }
            (None, Some(upload)) => {
                let treble =
                    Chromagram::parse(&upload.treble).map_err(|e| bad(format!("treble: {e}")))?;
                let bass =
                    Chromagram::parse(&upload.bass).map_err(|e| bad(format!("bass: {e}")))?;
                (
                    assemble_input(&treble, &bass).map_err(|e| bad(e.to_string()))?,
                    None,
                )
            }
            _ => return Err(bad("give exactly one of `track` and `features`".into())),
        };
        if let Some(lab) = &req.ground_truth {
            let chords = parse_lab(&lab.chords).map_err(|e| bad(format!("chords: {e}")))?;
            let keys = parse_lab(&lab.keys).map_err(|e| bad(format!("keys: {e}")))?;
            gt = Some(
                frames_from_intervals(&chords, &keys, features.hop(), features.frames())
                    .map_err(|e| bad(e.to_string()))?,
            );
        }
        Ok((features, gt))
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::BadRequest(format!("worker failed: {e}")))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionCreated>), ServiceError> {
    let created = blocking(move || {
        let (model, _) = state.checkpoints.get(&req.checkpoint)?;
        let (features, gt) = state.load_input(&req)?;
        let id = state.new_id();
        let session = match &state.config.session_dir {
            Some(root) => {
                Session::create_persistent(root, &id, &req.checkpoint, model, features, gt)?
            }
            None => Session::create(&id, &req.checkpoint, model, features, gt)?,
        };
        let out = SessionCreated {
            id,
            checkpoint: req.checkpoint.clone(),
            frames: session.frames(),
            has_ground_truth: session.ground_truth().is_some(),
            prediction: session.view(),
        };
        state.insert(session);
        Ok(out)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_prediction(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PredictionView>, ServiceError> {
    let session = state.session(&id)?;
    let guard = session.lock().await;
    Ok(Json(guard.view()))
}

/// Batches for one session queue on its lock; inference runs off the
/// async workers.
async fn post_annotations(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(batch): Json<AnnotationBatch>,
) -> Result<Json<DeltaSummary>, ServiceError> {
    let session = state.session(&id)?;
    let mut guard = session.lock_owned().await;
    let delta = blocking(move || Ok(guard.annotate_batch(&batch)?)).await?;
    Ok(Json(delta))
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionReport>, ServiceError> {
    let session = state.session(&id)?;
    let guard = session.lock().await;
    Ok(Json(guard.report()?))
}

async fn list_checkpoints(
    State(state): State<Arc<AppState>>,
) -> Result<Json<Vec<CheckpointInfo>>, ServiceError> {
    let list = blocking(move || {
        let mut out = Vec::new();
        for id in state.checkpoints.ids()? {
            match state.checkpoints.get(&id) {
                Ok((_, info)) => out.push(info),
                Err(e) => log::warn!("{e}"),
            }
        }
        Ok(out)
    })
    .await?;
    Ok(Json(list))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/prediction", get(get_prediction))
        .route("/sessions/{id}/annotations", post(post_annotations))
        .route("/sessions/{id}/report", get(get_report))
        .route("/checkpoints", get(list_checkpoints))
        .with_state(state)
}

/// Restores stored sessions and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = Arc::new(AppState::new(config));
    let restored = state.restore_sessions()?;
    if restored > 0 {
        log::info!("restored {restored} sessions");
    }
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let c =
            ServiceConfig::from_toml("port = 9000\ncheckpoint_dir = \"ck\"\ncorpus_dir = \"c\"")
                .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.checkpoint_dir, PathBuf::from("ck"));
        assert_eq!(c.corpus_dir, Some(PathBuf::from("c")));
        assert_eq!(c.session_dir, None);
        assert!(ServiceConfig::from_toml("prot = 1").is_err());
        assert_eq!(
            ServiceConfig::from_toml("").unwrap(),
            ServiceConfig::default()
        );
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("serve.toml");
        std::fs::write(&path, "checkpoint_dir = \"ck\"\nsession_dir = \"/abs\"").unwrap();
        let c = ServiceConfig::load(&path).unwrap();
        assert_eq!(c.checkpoint_dir, dir.path().join("ck"));
        assert_eq!(c.session_dir, Some(PathBuf::from("/abs")));
    }

    #[test]
    fn path_like_checkpoint_ids_are_unknown() {
        let store = CheckpointStore::new("/nonexistent");
        for id in ["../x", "", ".hidden", "a/b"] {
            assert!(matches!(
                store.get(id),
                Err(ServiceError::UnknownCheckpoint(_))
            ));
        }
    }
}

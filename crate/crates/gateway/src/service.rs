//! The HTTP/JSON API. Round-state mutations all go through one loop owner
//! behind a lock; training runs as a background job and commits atomically.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Body;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use scatgate::classify::Sample;
use scatgate::dataset::{self, LabelSource};
use scatgate::embed::{fit_projection, project, ProjectionModel};
use scatgate::frame::{encode_png8, thumbnail};
use scatgate::physics::{RealismConfig, RealismReport};
use scatgate::pipeline::score_frame;
use scatgate::rounds::{Composition, HitlLoop, ReviewQueueItem, RoundTargets};
use scatgate::{Origin, PatternClass, RoundStatus, Verdict};

use crate::config::ServiceConfig;
use crate::error::{GatewayError, Result};
use crate::workspace::{discover_datasets, human_verdicts, Workspace};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
const IDEMPOTENCY_LOG: &str = "idempotency.jsonl";
const DEFAULT_PER_PAGE: usize = 50;
const MAX_PER_PAGE: usize = 500;

/// Image id and thumbnail side.
type ThumbKey = (String, usize);

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    datasets: Vec<PathBuf>,
    workspace: Workspace,
    lp: RwLock<HitlLoop>,
    /// Serializes mutating requests so an idempotency key is claimed once.
    gate: tokio::sync::Mutex<()>,
    samples: Mutex<Option<Arc<HashMap<String, Sample>>>>,
    projection: Mutex<Option<Arc<ProjectionModel>>>,
    thumbs: Mutex<HashMap<ThumbKey, Arc<Vec<u8>>>>,
    realism: Mutex<HashMap<String, RealismReport>>,
    replies: Mutex<HashMap<String, StoredReply>>,
    jobs: Mutex<HashMap<String, Job>>,
    next_job: AtomicU64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredReply {
    key: String,
    status: u16,
    body: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: String,
    pub round: u32,
    pub status: JobStatus,
    pub progress: f64,
    pub message: Option<String>,
    pub created: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub result: Option<Value>,
}

impl AppState {
    /// Opens the configured dataset and its loop.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let datasets = discover_datasets(&config.data_root)?;
        let root = match &config.dataset {
            Some(name) => datasets
                .iter()
                .find(|p| p.file_name().is_some_and(|n| n == name.as_str()))
                .cloned()
                .ok_or_else(|| {
                    GatewayError::Config(format!("dataset {name} not found under the data root"))
                })?,
            None => datasets.first().cloned().ok_or_else(|| {
                GatewayError::Config("no dataset with a manifest under the data root".into())
            })?,
        };
        let workspace = Workspace::open(&root)?;
        let lp = workspace.open_loop()?;
        let replies = load_replies(&root.join(IDEMPOTENCY_LOG))?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                datasets,
                workspace,
                lp: RwLock::new(lp),
                gate: tokio::sync::Mutex::new(()),
                samples: Mutex::new(None),
                projection: Mutex::new(None),
                thumbs: Mutex::new(HashMap::new()),
                realism: Mutex::new(HashMap::new()),
                replies: Mutex::new(replies),
                jobs: Mutex::new(HashMap::new()),
                next_job: AtomicU64::new(1),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn workspace(&self) -> &Workspace {
        &self.inner.workspace
    }

    fn read_loop(&self) -> std::sync::RwLockReadGuard<'_, HitlLoop> {
        self.inner.lp.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_loop(&self) -> std::sync::RwLockWriteGuard<'_, HitlLoop> {
        self.inner.lp.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Samples for the active dataset, computed once off the async runtime.
    async fn samples(&self) -> Result<Arc<HashMap<String, Sample>>> {
        if let Some(s) = lock(&self.inner.samples).clone() {
            return Ok(s);
        }
        let state = self.clone();
        blocking(move || state.samples_blocking()).await
    }

    fn samples_blocking(&self) -> Result<Arc<HashMap<String, Sample>>> {
        let mut slot = lock(&self.inner.samples);
        if let Some(s) = slot.clone() {
            return Ok(s);
        }
        let s = Arc::new(self.inner.workspace.samples()?);
        *slot = Some(s.clone());
        Ok(s)
    }

    fn store_reply(&self, reply: StoredReply) -> Result<()> {
        let path = self.inner.workspace.root().join(IDEMPOTENCY_LOG);
        append_line(&path, &reply)?;
        lock(&self.inner.replies).insert(reply.key.clone(), reply);
        Ok(())
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::Internal(e.to_string()))?
}

fn load_replies(path: &std::path::Path) -> Result<HashMap<String, StoredReply>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let rows: Vec<StoredReply> = dataset::read_jsonl(path)?;
    Ok(rows.into_iter().map(|r| (r.key.clone(), r)).collect())
}

fn append_line<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GatewayError::io(path, e))?;
    let line = serde_json::to_string(value).map_err(|e| GatewayError::Internal(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| GatewayError::io(path, e))
}

/// Runs a mutation at most once per idempotency key. A retry with a key that
/// already succeeded gets the stored reply back verbatim.
async fn idempotent<F, Fut>(state: &AppState, key: Option<String>, run: F) -> Response
where
    F: FnOnce() -> Fut,
    Fut: std::future::Future<Output = Result<(StatusCode, Value)>>,
{
    let _gate = state.inner.gate.lock().await;
    if let Some(k) = &key {
        if let Some(r) = lock(&state.inner.replies).get(k).cloned() {
            let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::OK);
            return (status, [("idempotent-replay", "true")], Json(r.body)).into_response();
        }
    }
    match run().await {
        Ok((status, body)) => {
            if let Some(k) = key {
                let reply = StoredReply {
                    key: k,
                    status: status.as_u16(),
                    body: body.clone(),
                };
                if let Err(e) = state.store_reply(reply) {
                    return e.into_response();
                }
            }
            (status, Json(body)).into_response()
        }
        Err(e) => e.into_response(),
    }
}

fn header_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| GatewayError::Internal(e.to_string()))
}

// ── router ───────────────────────────────────────────────────────────────────

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/datasets", get(datasets))
        .route("/images", get(images))
        .route("/images/{id}/thumb", get(image_thumb))
        .route("/images/{id}/raw", get(image_raw))
        .route("/images/{id}/realism", get(image_realism))
        .route("/rounds", get(rounds_list))
        .route("/rounds/seed", post(rounds_seed))
        .route("/rounds/{n}", get(round_get))
        .route("/rounds/{n}/queue", get(round_queue))
        .route("/rounds/{n}/propose", post(round_propose))
        .route("/rounds/{n}/build-next", post(round_build_next))
        .route("/labels", post(labels_post))
        .route("/reports/rounds", get(reports_rounds))
        .route("/projection", get(projection))
        .route("/jobs/train", post(jobs_train))
        .route("/jobs/{id}", get(job_get))
        .fallback(|| async { GatewayError::NotFound("no such endpoint".into()) })
        .layer(middleware::from_fn_with_state(state.clone(), require_token));
    let mut app = Router::new().nest("/api", api).with_state(state.clone());
    if let Some(dir) = &state.inner.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if !state.inner.config.cors_allowlist.is_empty() {
        let origins: Vec<HeaderValue> = state
            .inner
            .config
            .cors_allowlist
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([
                    header::AUTHORIZATION,
                    header::CONTENT_TYPE,
                    header::HeaderName::from_static(IDEMPOTENCY_HEADER),
                ]),
        );
    }
    app
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &state.inner.config.auth_token else {
        return next.run(req).await;
    };
    if req.uri().path() == "/health" || req.method() == Method::OPTIONS {
        return next.run(req).await;
    }
    let given = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        next.run(req).await
    } else {
        GatewayError::Unauthorized.into_response()
    }
}

/// Binds and serves until ctrl-c or SIGTERM. Label writes are synchronous
/// appends, so nothing is pending once in-flight requests finish.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let addr = config.listen;
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| GatewayError::Config(format!("cannot listen on {addr}: {e}")))?;
    log::info!("serving {} on http://{addr}", state.inner.workspace.name());
    serve_on(listener, state, shutdown_signal()).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| GatewayError::Internal(e.to_string()))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

// ── read endpoints ───────────────────────────────────────────────────────────

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": state.inner.workspace.name(),
    }))
}

#[derive(Serialize)]
struct DatasetSummary {
    name: String,
    images: usize,
    experimental: usize,
    generated: usize,
    active: bool,
}

async fn datasets(State(state): State<AppState>) -> Result<Json<Vec<DatasetSummary>>> {
    let active = state.inner.workspace.root().to_path_buf();
    let mut out = Vec::new();
    for root in &state.inner.datasets {
        let ws = Workspace::open(root)?;
        let entries = ws.manifest().entries();
        let experimental = entries
            .iter()
            .filter(|e| e.origin == Origin::Experimental)
            .count();
        out.push(DatasetSummary {
            name: ws.name(),
            images: entries.len(),
            experimental,
            generated: entries.len() - experimental,
            active: *root == active,
        });
    }
    Ok(Json(out))
}

#[derive(Deserialize)]
struct ImageQuery {
    dataset: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
    filter: Option<String>,
}

#[derive(Serialize)]
struct ImageSummary {
    id: String,
    origin: Origin,
    pattern: PatternClass,
    caption: Option<String>,
    label: Option<Verdict>,
    label_source: Option<LabelSource>,
}

async fn images(State(state): State<AppState>, Query(q): Query<ImageQuery>) -> Result<Json<Value>> {
    let active = &state.inner.workspace;
    let other;
    let ws = match &q.dataset {
        Some(name) if *name != active.name() => {
            let root = state
                .inner
                .datasets
                .iter()
                .find(|p| p.file_name().is_some_and(|n| n == name.as_str()))
                .ok_or_else(|| GatewayError::NotFound(format!("dataset {name}")))?;
            other = Workspace::open(root)?;
            &other
        }
        _ => active,
    };
    let is_active = std::ptr::eq(ws, active);
    let per_page = q.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(GatewayError::Usage(format!(
            "per_page must be in 1..={MAX_PER_PAGE}"
        )));
    }
    let page = q.page.unwrap_or(1);
    if page == 0 {
        return Err(GatewayError::Usage("page numbers start at 1".into()));
    }
    let lp = state.read_loop();
    let queued: std::collections::HashSet<&str> = lp
        .current()
        .map(|r| r.queue.iter().map(|q| q.image_id.as_str()).collect())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for e in ws.manifest().entries() {
        let id = e.id();
        let label = if is_active {
            lp.labels().effective(&id)
        } else {
            None
        };
        let keep = match q.filter.as_deref().unwrap_or("all") {
            "all" => true,
            "experimental" => e.origin == Origin::Experimental,
            "generated" => e.origin == Origin::Generated,
            "realistic" => label.is_some_and(|l| l.verdict == Verdict::Realistic),
            "fake" => label.is_some_and(|l| l.verdict == Verdict::Fake),
            "unlabeled" => label.is_none(),
            "queued" => queued.contains(id.as_str()),
            other => return Err(GatewayError::Usage(format!("unknown filter {other:?}"))),
        };
        if keep {
            rows.push(ImageSummary {
                label: label.map(|l| l.verdict),
                label_source: label.map(|l| l.source),
                id,
                origin: e.origin,
                pattern: e.pattern,
                caption: e.caption.clone(),
            });
        }
    }
    let total = rows.len();
    let items: Vec<ImageSummary> = rows
        .into_iter()
        .skip((page - 1) * per_page)
        .take(per_page)
        .collect();
    Ok(Json(json!({
        "dataset": ws.name(),
        "page": page,
        "per_page": per_page,
        "total": total,
        "items": to_value(&items)?,
    })))
}

#[derive(Deserialize)]
struct ThumbQuery {
    side: Option<usize>,
}

async fn image_thumb(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ThumbQuery>,
) -> Result<Response> {
    let side = q.side.unwrap_or(state.inner.config.thumb_side);
    if side == 0 {
        return Err(GatewayError::Usage("side must be positive".into()));
    }
    let key = (id.clone(), side);
    let cached = lock(&state.inner.thumbs).get(&key).cloned();
    let bytes = match cached {
        Some(b) => b,
        None => {
            let ws = state.inner.workspace.clone();
            let bytes = blocking(move || {
                let frame = ws.load_frame(&id)?;
                Ok(Arc::new(encode_png8(&thumbnail(&frame, side)?)?))
            })
            .await?;
            lock(&state.inner.thumbs).insert(key, bytes.clone());
            bytes
        }
    };
    Ok((
        [(header::CONTENT_TYPE, "image/png")],
        Body::from(bytes.as_ref().clone()),
    )
        .into_response())
}

async fn image_raw(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let path = state.inner.workspace.image_path(&id)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| GatewayError::io(&path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let mime = match ext.as_str() {
        "png" => "image/png",
        "tif" | "tiff" => "image/tiff",
        _ => "application/octet-stream",
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or(id);
    Ok((
        [
            (header::CONTENT_TYPE, mime.to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{name}\""),
            ),
        ],
        bytes,
    )
        .into_response())
}

async fn image_realism(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<RealismReport>> {
    if let Some(r) = lock(&state.inner.realism).get(&id).cloned() {
        return Ok(Json(r));
    }
    let ws = state.inner.workspace.clone();
    let key = id.clone();
    let report = blocking(move || {
        let pattern = ws.manifest().find(&id).map(|e| e.pattern);
        let frame = ws.load_frame(&id)?;
        Ok(score_frame(&frame, pattern, &RealismConfig::default())?)
    })
    .await?;
    lock(&state.inner.realism).insert(key, report.clone());
    Ok(Json(report))
}

#[derive(Serialize)]
struct RoundSummary {
    index: u32,
    status: RoundStatus,
    targets: RoundTargets,
    composition: Composition,
    training: usize,
    validation: usize,
    trained: bool,
    queued: usize,
    reviewed: usize,
}

async fn rounds_list(State(state): State<AppState>) -> Json<Vec<RoundSummary>> {
    let lp = state.read_loop();
    Json(
        lp.rounds()
            .iter()
            .map(|r| RoundSummary {
                index: r.index,
                status: r.status,
                targets: r.targets,
                composition: r.composition,
                training: r.training.len(),
                validation: r.validation.len(),
                trained: r.is_trained(),
                queued: r.queue.len(),
                reviewed: r.reviewed.len(),
            })
            .collect(),
    )
}

async fn round_get(State(state): State<AppState>, Path(n): Path<u32>) -> Result<Json<Value>> {
    let lp = state.read_loop();
    let r = lp
        .round(n)
        .ok_or_else(|| GatewayError::NotFound(format!("round {n}")))?;
    Ok(Json(to_value(r)?))
}

#[derive(Serialize)]
struct QueueEntry<'a> {
    #[serde(flatten)]
    item: &'a ReviewQueueItem,
    human_verdict: Option<Verdict>,
}

async fn round_queue(State(state): State<AppState>, Path(n): Path<u32>) -> Result<Json<Value>> {
    let lp = state.read_loop();
    let r = lp
        .round(n)
        .ok_or_else(|| GatewayError::NotFound(format!("round {n}")))?;
    let human = human_verdicts(&lp, n);
    let items: Vec<QueueEntry> = r
        .queue
        .iter()
        .map(|item| QueueEntry {
            item,
            human_verdict: human.get(item.image_id.as_str()).map(|l| l.verdict),
        })
        .collect();
    let pending = items.iter().filter(|i| i.human_verdict.is_none()).count();
    Ok(Json(
        json!({ "round": n, "status": r.status, "pending": pending, "items": to_value(&items)? }),
    ))
}

async fn reports_rounds(State(state): State<AppState>) -> Result<Json<Value>> {
    Ok(Json(to_value(&state.read_loop().report())?))
}

#[derive(Deserialize)]
struct ProjectionQuery {
    model: Option<String>,
}

#[derive(Serialize)]
struct ProjectedPoint {
    id: String,
    x: f64,
    y: f64,
    origin: Origin,
    label: Option<Verdict>,
    p_realistic: Option<f64>,
}

/// 2-D principal-component view of the feature space, optionally colored by
/// one classifier of the latest trained round.
async fn projection(
    State(state): State<AppState>,
    Query(q): Query<ProjectionQuery>,
) -> Result<Json<Value>> {
    let samples = state.samples().await?;
    let cached = lock(&state.inner.projection).clone();
    let model = match cached {
        Some(m) => m,
        None => {
            let s = samples.clone();
            let ws = state.inner.workspace.clone();
            let m = blocking(move || {
                let ids: Vec<String> = ws.manifest().entries().iter().map(|e| e.id()).collect();
                let rows: Vec<&[f64]> = ids.iter().map(|id| s[id].features.as_slice()).collect();
                Ok(Arc::new(fit_projection(&rows, 2)?))
            })
            .await?;
            *lock(&state.inner.projection) = Some(m.clone());
            m
        }
    };
    let classifier = match &q.model {
        None => None,
        Some(name) => {
            let lp = state.read_loop();
            let round = lp
                .rounds()
                .iter()
                .rev()
                .find(|r| r.is_trained())
                .ok_or_else(|| GatewayError::Conflict("no trained round".into()))?;
            if !round.models.contains(name) {
                return Err(GatewayError::NotFound(format!(
                    "model {name} in round {}",
                    round.index
                )));
            }
            let m = state
                .inner
                .workspace
                .load_models(round.index, std::slice::from_ref(name))?;
            m.into_iter().next()
        }
    };
    let lp = state.read_loop();
    let mut points = Vec::new();
    for e in state.inner.workspace.manifest().entries() {
        let id = e.id();
        let sample = &samples[&id];
        let xy = project(&model, &sample.features)?;
        let p = match &classifier {
            Some(c) => Some(c.predict_proba(sample)?.p_realistic()),
            None => None,
        };
        points.push(ProjectedPoint {
            x: xy[0],
            y: xy[1],
            origin: e.origin,
            label: lp.labels().effective(&id).map(|l| l.verdict),
            p_realistic: p,
            id,
        });
    }
    Ok(Json(json!({
        "model": q.model,
        "explained_variance": model.explained_variance(),
        "points": to_value(&points)?,
    })))
}

async fn job_get(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Job>> {
    lock(&state.inner.jobs)
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| GatewayError::NotFound(format!("job {id}")))
}

// ── mutating endpoints ───────────────────────────────────────────────────────

async fn rounds_seed(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let s = state.clone();
    idempotent(&state, header_key(&headers), || async move {
        let mut lp = s.write_loop();
        let round = lp.seed()?;
        Ok((StatusCode::CREATED, to_value(round)?))
    })
    .await
}

async fn round_propose(
    State(state): State<AppState>,
    Path(n): Path<u32>,
    headers: HeaderMap,
) -> Response {
    let s = state.clone();
    idempotent(&state, header_key(&headers), || async move {
        let samples = s.samples().await?;
        let s2 = s.clone();
        let queue = blocking(move || {
            let mut lp = s2.write_loop();
            s2.inner.workspace.propose(&mut lp, n, &samples, Utc::now())
        })
        .await?;
        Ok((
            StatusCode::OK,
            json!({ "round": n, "queue": to_value(&queue)? }),
        ))
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct BuildNextBody {
    /// Explicit targets; otherwise the dataset's next-round targets.
    targets: Option<RoundTargets>,
    /// Multiplies the chosen targets.
    scale: Option<f64>,
}

async fn round_build_next(
    State(state): State<AppState>,
    Path(n): Path<u32>,
    headers: HeaderMap,
    body: Option<Json<BuildNextBody>>,
) -> Response {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let s = state.clone();
    idempotent(&state, header_key(&headers), || async move {
        let base = body
            .targets
            .unwrap_or(s.inner.workspace.settings().next_targets);
        let targets = match body.scale {
            Some(f) => base.scaled(f)?,
            None => {
                base.validate()?;
                base
            }
        };
        let mut lp = s.write_loop();
        let next = lp.build_next(n, &targets)?;
        Ok((StatusCode::CREATED, to_value(next)?))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    image_id: String,
    verdict: Verdict,
    annotator: String,
    #[serde(default)]
    idempotency_key: Option<String>,
}

/// Records one human verdict on an image queued in the current round.
async fn labels_post(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<LabelBody>,
) -> Response {
    let key = header_key(&headers).or_else(|| body.idempotency_key.clone());
    let s = state.clone();
    idempotent(&state, key, || async move {
        if s.inner.workspace.manifest().find(&body.image_id).is_none() {
            return Err(GatewayError::NotFound(format!("image {}", body.image_id)));
        }
        if body.annotator.trim().is_empty() {
            return Err(GatewayError::Usage("annotator is required".into()));
        }
        let mut lp = s.write_loop();
        let round = lp
            .current()
            .ok_or_else(|| GatewayError::Conflict("the loop has not been seeded".into()))?;
        let n = round.index;
        if !round.queue.iter().any(|q| q.image_id == body.image_id) {
            return Err(GatewayError::Conflict(format!(
                "image {} is not in the review queue of round {n}",
                body.image_id
            )));
        }
        lp.review(
            n,
            &[(body.image_id.clone(), body.verdict)],
            &body.annotator,
            Utc::now(),
        )?;
        let record = lp
            .labels()
            .latest_human(&body.image_id)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| GatewayError::Internal("label was not stored".into()))?;
        Ok((StatusCode::CREATED, to_value(&record)?))
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainBody {
    round: Option<u32>,
}

/// Starts training the round's classifiers in the background.
async fn jobs_train(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Option<Json<TrainBody>>,
) -> Response {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let s = state.clone();
    idempotent(&state, header_key(&headers), || async move {
        let n = {
            let lp = s.read_loop();
            let current = lp
                .current()
                .ok_or_else(|| GatewayError::Conflict("the loop has not been seeded".into()))?;
            let n = body.round.unwrap_or(current.index);
            let round = lp
                .round(n)
                .ok_or_else(|| GatewayError::NotFound(format!("round {n}")))?;
            if n != current.index
                || !matches!(
                    round.status,
                    RoundStatus::Collecting | RoundStatus::Training
                )
            {
                return Err(GatewayError::Conflict(format!(
                    "round {n} is {} and cannot be trained",
                    round.status
                )));
            }
            n
        };
        if let Some(j) = lock(&s.inner.jobs).values().find(|j| {
            j.kind == "train" && matches!(j.status, JobStatus::Queued | JobStatus::Running)
        }) {
            return Err(GatewayError::Conflict(format!(
                "training job {} is still running",
                j.id
            )));
        }
        let id = format!("job-{}", s.inner.next_job.fetch_add(1, Ordering::SeqCst));
        let job = Job {
            id: id.clone(),
            kind: "train".into(),
            round: n,
            status: JobStatus::Queued,
            progress: 0.0,
            message: None,
            created: Utc::now(),
            finished: None,
            result: None,
        };
        lock(&s.inner.jobs).insert(id.clone(), job.clone());
        let runner = s.clone();
        tokio::task::spawn_blocking(move || run_train_job(&runner, &id, n));
        Ok((StatusCode::ACCEPTED, to_value(&job)?))
    })
    .await
}

fn update_job(state: &AppState, id: &str, f: impl FnOnce(&mut Job)) {
    if let Some(j) = lock(&state.inner.jobs).get_mut(id) {
        f(j);
    }
}

fn run_train_job(state: &AppState, id: &str, round: u32) {
    update_job(state, id, |j| {
        j.status = JobStatus::Running;
        j.message = Some("computing features".into());
    });
    let outcome = (|| -> Result<Value> {
        let samples = state.samples_blocking()?;
        update_job(state, id, |j| {
            j.progress = 0.3;
            j.message = Some("training classifiers".into());
        });
        // train on a snapshot so label writes are not blocked meanwhile
        let snapshot = state
            .read_loop()
            .round(round)
            .cloned()
            .ok_or_else(|| GatewayError::NotFound(format!("round {round}")))?;
        let training = state.inner.workspace.train(&snapshot, &samples)?;
        update_job(state, id, |j| j.progress = 0.9);
        let mut lp = state.write_loop();
        state
            .inner
            .workspace
            .commit_training(&mut lp, round, &training)?;
        Ok(json!({
            "round": round,
            "models": training.models.iter().map(|m| m.id.clone()).collect::<Vec<_>>(),
            "vote": to_value(&training.vote)?,
            "report": to_value(&training.report)?,
        }))
    })();
    update_job(state, id, |j| {
        j.finished = Some(Utc::now());
        match outcome {
            Ok(result) => {
                j.status = JobStatus::Succeeded;
                j.progress = 1.0;
                j.message = None;
                j.result = Some(result);
            }
            Err(e) => {
                log::warn!("training job {} failed: {e}", j.id);
                j.status = JobStatus::Failed;
                j.message = Some(e.to_string());
            }
        }
    });
}

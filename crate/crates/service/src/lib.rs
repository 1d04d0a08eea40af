//! HTTP API over a workspace: corpus browsing, heatmaps, topics, search,
//! relevance judgments and evaluation, plus the static workbench under
//! `/ui/`.
//!
//! Every payload is the serialized output of the matching library
//! operation. Errors are `{code, message}` with 404 for unknown ids, 409
//! while a reload runs, 422 for malformed requests.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use clav_core::eval::{compile_report, record_judgment, Judgment, JudgmentStore};
use clav_core::simsearch::{Query as SearchQuery, SearchHit};
use clav_core::termmatch::heatmap_paths;
use clav_core::topics::locate_keywords;
use clav_core::workspace::Workspace;
use clav_core::Error;

mod snapshot;

pub use snapshot::{LoadedBackend, LoadedTopics, Snapshot};

pub type Loader = Arc<dyn Fn(&Workspace) -> clav_core::Result<Snapshot> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    workspace: Workspace,
    snapshot: RwLock<Arc<Snapshot>>,
    reloading: AtomicBool,
    judgments: Mutex<JudgmentStore>,
    loader: Loader,
}

impl AppState {
    pub fn open(workspace: Workspace) -> clav_core::Result<Self> {
        Self::with_loader(workspace, Arc::new(Snapshot::load))
    }

    /// State whose reloads go through `loader`.
    pub fn with_loader(workspace: Workspace, loader: Loader) -> clav_core::Result<Self> {
        let snapshot = loader(&workspace)?;
        for w in &snapshot.warnings {
            tracing::warn!("{w}");
        }
        let judgments = JudgmentStore::open(&workspace.judgments_path())?;
        Ok(AppState {
            inner: Arc::new(Inner {
                workspace,
                snapshot: RwLock::new(Arc::new(snapshot)),
                reloading: AtomicBool::new(false),
                judgments: Mutex::new(judgments),
                loader,
            }),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.inner.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn workspace(&self) -> &Workspace {
        &self.inner.workspace
    }
}

pub fn router(state: AppState) -> Router {
    let ui = ServeDir::new(state.workspace().ui_dir()).append_index_html_on_directories(true);
    Router::new()
        .route("/api/corpus/stats", get(corpus_stats))
        .route("/api/documents", get(documents))
        .route("/api/documents/{id}/paragraphs", get(paragraphs))
        .route("/api/heatmap/{doc_id}", get(heatmap))
        .route("/api/topics", get(topics))
        .route("/api/topics/{k}/terms", get(topic_terms))
        .route("/api/topics/{k}/keywords", get(topic_keywords))
        .route("/api/search", post(search))
        .route("/api/queries", get(queries))
        .route("/api/results", get(results))
        .route("/api/results/{backend}/{query_id}", get(result_list))
        .route("/api/judgments", get(judgments).post(post_judgment))
        .route("/api/eval", get(eval))
        .route("/api/admin/reload", post(reload))
        .nest_service("/ui", ui)
        .with_state(state)
}

/// Binds `bind` and serves until Ctrl-C.
pub async fn serve(workspace: Workspace, bind: &str) -> clav_core::Result<()> {
    let state = tokio::task::spawn_blocking(move || AppState::open(workspace))
        .await
        .expect("loader task")?;
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot bind {bind}: {e}"))))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFound(_) | Error::Missing { .. } => Self::not_found(e.to_string()),
            Error::InvalidInput(_)
            | Error::Unembeddable(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroVector
            | Error::Config(_) => Self::unprocessable(e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections come back as 422 `{code, message}`.
struct JsonBody<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(rejection) => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "malformed_body",
                rejection.body_text(),
            )),
        }
    }
}

async fn corpus_stats(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.snapshot().corpus.stats())
}

async fn documents(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.snapshot().corpus.documents().to_vec())
}

async fn paragraphs(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    let doc = snap
        .corpus
        .document(&id)
        .ok_or_else(|| ApiError::not_found(format!("document `{id}` not found")))?;
    let page = match params.get("page") {
        None => None,
        Some(p) => {
            let page: u32 = p
                .parse()
                .map_err(|_| ApiError::unprocessable(format!("page `{p}` is not a positive integer")))?;
            if page == 0 || page > doc.page_count {
                return Err(ApiError::not_found(format!("page {page} of `{id}` not found")));
            }
            Some(page)
        }
    };
    let list: Vec<_> = snap
        .corpus
        .document_paragraphs(&id)
        .iter()
        .filter(|p| page.is_none_or(|pg| p.reference.page == pg))
        .cloned()
        .collect();
    Ok(Json(list).into_response())
}

async fn heatmap(
    State(state): State<AppState>,
    Path(doc_id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    if snap.corpus.document(&doc_id).is_none() {
        return Err(ApiError::not_found(format!("document `{doc_id}` not found")));
    }
    let (csv, truth) = heatmap_paths(&state.workspace().heatmap_dir(), &doc_id);
    let (path, content_type) = match params.get("part").map(String::as_str) {
        None | Some("csv") => (csv, "text/csv; charset=utf-8"),
        Some("truth") => (truth, "application/json"),
        Some(other) => return Err(ApiError::unprocessable(format!("unknown part `{other}`"))),
    };
    let bytes = fs::read(&path)
        .map_err(|_| ApiError::not_found(format!("no heatmap for `{doc_id}`; run `clav heatmap`")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

#[derive(Serialize)]
struct TopicSummary {
    k: usize,
    mean_coherence: f64,
    per_topic: Vec<f64>,
    top_n: usize,
}

async fn topics(State(state): State<AppState>) -> impl IntoResponse {
    let snap = state.snapshot();
    let list: Vec<TopicSummary> = snap
        .topics
        .iter()
        .map(|(&k, t)| TopicSummary {
            k,
            mean_coherence: t.coherence.mean,
            per_topic: t.coherence.per_topic.clone(),
            top_n: t.coherence.top_n,
        })
        .collect();
    Json(list)
}

fn topics_for(snap: &Snapshot, k: &str) -> ApiResult<usize> {
    let k: usize = k
        .parse()
        .map_err(|_| ApiError::unprocessable(format!("k `{k}` is not an integer")))?;
    if !snap.topics.contains_key(&k) {
        return Err(ApiError::not_found(format!("no fitted model with k={k}")));
    }
    Ok(k)
}

fn usize_param(params: &HashMap<String, String>, name: &str, default: usize) -> ApiResult<usize> {
    params.get(name).map_or(Ok(default), |v| {
        v.parse()
            .map_err(|_| ApiError::unprocessable(format!("`{name}` must be a non-negative integer")))
    })
}

#[derive(Serialize)]
struct TopicTerms {
    topic: usize,
    coherence: f64,
    terms: Vec<(String, f64)>,
}

async fn topic_terms(
    State(state): State<AppState>,
    Path(k): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    let k = topics_for(&snap, &k)?;
    let n = usize_param(&params, "n", snap.config.coherence_top_n)?;
    let loaded = &snap.topics[&k];
    let list = (0..k)
        .map(|t| {
            Ok(TopicTerms {
                topic: t,
                coherence: loaded.coherence.per_topic[t],
                terms: loaded.model.top_terms(t, n)?,
            })
        })
        .collect::<clav_core::Result<Vec<_>>>()?;
    Ok(Json(list).into_response())
}

async fn topic_keywords(
    State(state): State<AppState>,
    Path(k): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    let k = topics_for(&snap, &k)?;
    let raw = params
        .get("q")
        .ok_or_else(|| ApiError::unprocessable("missing `q` (comma-separated keywords)"))?;
    let keywords: Vec<String> = raw
        .split(',')
        .flat_map(|kw| snap.normalizer.terms(kw))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let top_n = usize_param(&params, "top_n", snap.config.keyword_top_n)?;
    let theta = match params.get("theta") {
        None => snap.config.keyword_theta,
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::unprocessable("`theta` must be a number"))?,
    };
    Ok(Json(locate_keywords(&snap.topics[&k].model, &keywords, top_n, theta)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineQuery {
    id: Option<String>,
    #[serde(default)]
    keyword: String,
    sentence: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchRequest {
    query_id: Option<String>,
    query: Option<InlineQuery>,
    backend: Option<String>,
    top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query_id: String,
    pub backend: String,
    pub hits: Vec<SearchHit>,
}

async fn search(State(state): State<AppState>, JsonBody(req): JsonBody<SearchRequest>) -> ApiResult<Response> {
    let snap = state.snapshot();
    let query = match (req.query_id, req.query) {
        (Some(id), None) => snap
            .queries
            .iter()
            .find(|q| q.id == id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("query `{id}` not found")))?,
        (None, Some(q)) => {
            if q.sentence.trim().is_empty() {
                return Err(ApiError::unprocessable("query sentence is empty"));
            }
            SearchQuery::new(q.id.unwrap_or_else(|| "inline".into()), q.keyword, q.sentence)
        }
        _ => return Err(ApiError::unprocessable("give exactly one of `query_id` and `query`")),
    };
    let backend = req.backend.unwrap_or_else(|| snap.config.backend.clone());
    if !snap.backends.contains_key(&backend) {
        return Err(ApiError::not_found(format!("backend `{backend}` is not available")));
    }
    let top_k = req.top_k.unwrap_or(snap.config.top_k);
    if top_k == 0 {
        return Err(ApiError::unprocessable("top_k must be at least 1"));
    }
    let hits = tokio::task::spawn_blocking(move || {
        let ctx = snap.search_context(&backend).expect("checked above");
        ctx.search(&query, top_k).map(|hits| SearchResponse {
            query_id: query.id.clone(),
            backend,
            hits,
        })
    })
    .await
    .expect("search task")?;
    Ok(Json(hits).into_response())
}

async fn queries(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.snapshot().queries.clone())
}

#[derive(Serialize)]
struct ResultSummary {
    backend: String,
    query_id: String,
    hits: usize,
    error: Option<String>,
}

async fn results(State(state): State<AppState>) -> impl IntoResponse {
    let snap = state.snapshot();
    let list: Vec<ResultSummary> = snap
        .bundles
        .iter()
        .flat_map(|b| {
            b.results.iter().map(|r| ResultSummary {
                backend: b.backend.clone(),
                query_id: r.query_id.clone(),
                hits: r.outcome.as_ref().map_or(0, Vec::len),
                error: r.outcome.as_ref().err().cloned(),
            })
        })
        .collect();
    Json(list)
}

async fn result_list(
    State(state): State<AppState>,
    Path((backend, query_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    let hits = snap
        .bundles
        .iter()
        .find(|b| b.backend == backend)
        .and_then(|b| b.hits(&query_id))
        .ok_or_else(|| ApiError::not_found(format!("no results for `{query_id}` with `{backend}`")))?;
    Ok(Json(SearchResponse {
        query_id,
        backend,
        hits: hits.to_vec(),
    })
    .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentRequest {
    query_id: String,
    backend_id: String,
    rank: u32,
    relevant: bool,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn post_judgment(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<JudgmentRequest>,
) -> ApiResult<Response> {
    let snap = state.snapshot();
    let mut store = state.inner.judgments.lock().await;
    let ts = now_millis();
    record_judgment(
        &mut store,
        &snap.bundles,
        &req.query_id,
        &req.backend_id,
        req.rank,
        req.relevant,
        ts,
    )?;
    let saved: Judgment = store.entries().last().cloned().expect("just appended");
    Ok((StatusCode::CREATED, Json(saved)).into_response())
}

async fn judgments(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.inner.judgments.lock().await.entries().to_vec())
}

async fn eval(State(state): State<AppState>) -> impl IntoResponse {
    let snap = state.snapshot();
    let store = state.inner.judgments.lock().await;
    Json(compile_report(&store, &snap.bundles))
}

async fn reload(State(state): State<AppState>) -> ApiResult<Response> {
    if state.inner.reloading.swap(true, Ordering::SeqCst) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "reload_in_progress",
            "a reload is already running",
        ));
    }
    let st = state.clone();
    let loaded = tokio::task::spawn_blocking(move || (st.inner.loader)(&st.inner.workspace)).await;
    let result = match loaded {
        Ok(Ok(snapshot)) => {
            let body = json!({
                "stats": snapshot.corpus.stats(),
                "backends": snapshot.backends.keys().collect::<Vec<_>>(),
                "warnings": snapshot.warnings,
            });
            *state.inner.snapshot.write().expect("snapshot lock") = Arc::new(snapshot);
            Ok(Json(body).into_response())
        }
        Ok(Err(e)) => Err(ApiError::from(e)),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    };
    state.inner.reloading.store(false, Ordering::SeqCst);
    result
}

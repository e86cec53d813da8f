//! HTTP suggestion service and backend protocol endpoints.
//!
//! | route                | purpose                                  |
//! |----------------------|------------------------------------------|
//! | `POST /v1/suggest`   | top-n completions of a prefix            |
//! | `POST /v1/next`      | next-word distribution                   |
//! | `POST /v1/logprobs`  | per-token log-likelihoods                |
//! | `POST /v1/embed`     | per-token vectors                        |
//! | `GET  /v1/vocab`     | backend vocabulary (id = position)       |
//! | `POST /v1/jobs/evaluate`, `GET /v1/jobs/{id}` | background evaluation |
//! | `GET  /healthz`      | liveness and model identity              |

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::backend::{Backend, BackendError};
use crate::generate::{complete, GenerateError, GenerationConfig};
use crate::harness::{run_evaluation, EvalOptions, GeneratedCandidates, Metric};
use crate::metrics::Embedder;
use crate::preprocess::tokenize_words;
use crate::protocol::*;
use crate::vocab::{SOS_ID, TokenId};

pub const DEFAULT_BATCH_LIMIT: usize = 64;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_parameter", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<BackendError> for ApiError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unavailable(m) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", m),
            BackendError::Protocol(m) | BackendError::Model(m) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "model_failure", m)
            }
        }
    }
}

impl From<GenerateError> for ApiError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::EmptyPrefix => ApiError::bad_request("prefix is empty"),
            GenerateError::InvalidConfig(m) => ApiError::unprocessable(m),
            GenerateError::Backend(b) => b.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

/// Shared, read-only model state plus the job table.
pub struct ServiceState {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    default_backend: String,
    /// Backend answering `/v1/next` and `/v1/logprobs`.
    protocol_backend: Arc<dyn Backend>,
    static_embedder: Option<Arc<dyn Embedder>>,
    contextual_embedder: Option<Arc<dyn Embedder>>,
    model_hash: String,
    batch_limit: usize,
    jobs: Mutex<HashMap<u64, JobStatus>>,
    next_job: AtomicU64,
}

impl ServiceState {
    pub fn new(backend: Arc<dyn Backend>, model_hash: impl Into<String>) -> ServiceState {
        let name = backend.name().to_string();
        let mut backends = BTreeMap::new();
        backends.insert(name.clone(), backend.clone());
        ServiceState {
            backends,
            default_backend: name,
            protocol_backend: backend,
            static_embedder: None,
            contextual_embedder: None,
            model_hash: model_hash.into(),
            batch_limit: DEFAULT_BATCH_LIMIT,
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        }
    }

    /// Registers another backend for `/v1/suggest`; `make_default` routes
    /// requests without a `backend` field to it.
    pub fn with_backend(mut self, backend: Arc<dyn Backend>, make_default: bool) -> ServiceState {
        let name = backend.name().to_string();
        if make_default {
            self.default_backend = name.clone();
        }
        self.backends.insert(name, backend);
        self
    }

    pub fn with_static_embedder(mut self, embedder: Arc<dyn Embedder>) -> ServiceState {
        self.static_embedder = Some(embedder);
        self
    }

    pub fn with_contextual_embedder(mut self, embedder: Arc<dyn Embedder>) -> ServiceState {
        self.contextual_embedder = Some(embedder);
        self
    }

    pub fn with_batch_limit(mut self, limit: usize) -> ServiceState {
        self.batch_limit = limit;
        self
    }

    fn backend(&self, name: Option<&str>) -> Result<Arc<dyn Backend>, ApiError> {
        let name = name.unwrap_or(&self.default_backend);
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::unprocessable(format!("unknown backend `{name}`")))
    }

    fn check_batch(&self, n: usize) -> Result<(), ApiError> {
        if n > self.batch_limit {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "batch_too_large",
                format!("batch of {n} exceeds limit {}", self.batch_limit),
            ));
        }
        Ok(())
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/suggest", post(suggest))
        .route("/v1/next", post(next))
        .route("/v1/logprobs", post(logprobs))
        .route("/v1/embed", post(embed))
        .route("/v1/vocab", get(vocab))
        .route("/v1/jobs/evaluate", post(start_evaluation))
        .route("/v1/jobs/{id}", get(job_status))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    let backend = &state.backends[&state.default_backend];
    Json(Health {
        status: "ok".into(),
        backend: state.default_backend.clone(),
        model_hash: state.model_hash.clone(),
        eos_reliable: backend.eos_reliable(),
        vocab_size: state.protocol_backend.vocab().len(),
    })
}

async fn vocab(State(state): State<Arc<ServiceState>>) -> Json<VocabResponse> {
    let vocab = state.protocol_backend.vocab();
    Json(VocabResponse {
        tokens: vocab.tokens().to_vec(),
        hash: vocab.hash(),
    })
}

async fn suggest(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<SuggestRequest>, JsonRejection>,
) -> Result<Json<SuggestResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if tokenize_words(&req.prefix).is_empty() {
        return Err(ApiError::bad_request("prefix is empty"));
    }
    let config = req.generation_config();
    config.validate()?;
    let backend = state.backend(req.backend.as_deref())?;
    let name = backend.name().to_string();
    let (candidates, latency_ms) = tokio::task::spawn_blocking(move || {
        let started = Instant::now();
        let out = complete(backend.as_ref(), &req.prefix, &config);
        (out, started.elapsed().as_secs_f64() * 1e3)
    })
    .await
    .map_err(join_error)?;
    Ok(Json(SuggestResponse {
        candidates: candidates?.into_iter().map(SuggestCandidate::from).collect(),
        backend: name,
        latency_ms,
    }))
}

fn protocol_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(b)| b)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema_violation", e.body_text()))
}

async fn next(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<NextRequest>, JsonRejection>,
) -> Result<Json<NextResponse>, ApiError> {
    let req = protocol_body(body)?;
    let backend = state.protocol_backend.clone();
    let dist = tokio::task::spawn_blocking(move || {
        let vocab = backend.vocab();
        let mut context: Vec<TokenId> = vec![SOS_ID];
        context.extend(vocab.ids(&req.context_words));
        backend.next_dist(&context)
    })
    .await
    .map_err(join_error)??;
    let (vocab_ids, probs) = dist
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > 0.0)
        .map(|(i, p)| (i as TokenId, p))
        .unzip();
    Ok(Json(NextResponse { vocab_ids, probs }))
}

async fn logprobs(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<SentencesRequest>, JsonRejection>,
) -> Result<Json<LogprobsResponse>, ApiError> {
    let req = protocol_body(body)?;
    state.check_batch(req.sentences.len())?;
    let backend = state.protocol_backend.clone();
    let items = tokio::task::spawn_blocking(move || {
        req.sentences
            .iter()
            .map(|s| {
                backend.score_words(&tokenize_words(s)).map(|scored| LogprobsItem {
                    tokens: scored.tokens,
                    logprobs: scored.logprobs,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .await
    .map_err(join_error)??;
    Ok(Json(LogprobsResponse { items }))
}

async fn embed(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<EmbedRequest>, JsonRejection>,
) -> Result<Json<EmbedResponse>, ApiError> {
    let req = protocol_body(body)?;
    state.check_batch(req.sentences.len())?;
    let embedder = match req.mode {
        EmbedMode::Static => state.static_embedder.clone(),
        EmbedMode::Contextual => state.contextual_embedder.clone(),
    }
    .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "mode_unavailable", "embedding mode not configured"))?;
    let items = req
        .sentences
        .iter()
        .map(|s| {
            embedder
                .embed(s)
                .map(|e| EmbedItem {
                    tokens: e.tokens().to_vec(),
                    vectors: e.vectors().to_vec(),
                })
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "model_failure", e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(EmbedResponse { items }))
}

async fn start_evaluation(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<EvaluateJobRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let backend = state.backend(req.backend.as_deref())?;
    let embedder = state
        .contextual_embedder
        .clone()
        .or_else(|| state.static_embedder.clone())
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "embedding_unavailable", "no embedding provider configured"))?;
    let id = state.next_job.fetch_add(1, Ordering::Relaxed);
    let total = req.seeds.len();
    state.jobs.lock().unwrap().insert(
        id,
        JobStatus {
            id,
            state: JobState::Running,
            done: 0,
            total,
            report: None,
            error: None,
        },
    );
    let job_state = state.clone();
    tokio::task::spawn_blocking(move || {
        let source = GeneratedCandidates {
            backend: backend.as_ref(),
            config: GenerationConfig {
                rng_seed: Some(req.seed.unwrap_or(0)),
                ..GenerationConfig::default()
            },
        };
        let metric = match req.metric {
            JobMetric::Bertscore => Metric::BertScoreF,
            JobMetric::Cosine => Metric::AvgCosine,
        };
        let options = EvalOptions {
            aggregate: req.aggregate,
            ..EvalOptions::default()
        };
        let progress = |done: usize, _total: usize| {
            if let Some(job) = job_state.jobs.lock().unwrap().get_mut(&id) {
                job.done = done;
            }
        };
        let result = run_evaluation(&req.seeds, &source, embedder.as_ref(), metric, &options, &progress);
        let mut jobs = job_state.jobs.lock().unwrap();
        let job = jobs.get_mut(&id).expect("job registered");
        match result {
            Ok(report) => {
                job.state = JobState::Done;
                job.done = report.references;
                job.report = Some(report);
            }
            Err(e) => {
                job.state = JobState::Failed;
                job.error = Some(e.to_string());
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { id })))
}

async fn job_status(State(state): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Result<Json<JobStatus>, ApiError> {
    state
        .jobs
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no job {id}")))
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServiceState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// A server running on its own thread and runtime; shut down on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn spawn(state: ServiceState, addr: SocketAddr) -> std::io::Result<ServerHandle> {
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = router(Arc::new(state));
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Binds an ephemeral port on the loopback interface.
    pub fn spawn_local(state: ServiceState) -> std::io::Result<ServerHandle> {
        ServerHandle::spawn(state, SocketAddr::from(([127, 0, 0, 1], 0)))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

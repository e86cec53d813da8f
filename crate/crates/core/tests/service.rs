mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use serde_json::{json, Value};

use cc_autocomplete::backend::{Backend, BackendError};
use cc_autocomplete::generate::{complete, GenerationConfig};
use cc_autocomplete::metrics::{ScoredSequence, StaticEmbeddings};
use cc_autocomplete::ngram::NGramModel;
use cc_autocomplete::preprocess::load_seeds;
use cc_autocomplete::remote::RemoteBackend;
use cc_autocomplete::service::{ServerHandle, ServiceState};
use cc_autocomplete::vocab::{Vocabulary, SOS_ID};

use common::{assert_schema, crate_dir, demo_model};

const TABLE_V_PREFIX: &str = "Reports have chills, fever,";

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

fn read(resp: ureq::http::Response<ureq::Body>) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.into_body().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

fn post(url: &str, body: &Value) -> (u16, Value) {
    read(agent().post(url).send_json(body).unwrap())
}

fn post_raw(url: &str, body: &str) -> (u16, Value) {
    read(agent().post(url).header("content-type", "application/json").send(body).unwrap())
}

fn get(url: &str) -> (u16, Value) {
    read(agent().get(url).call().unwrap())
}

fn static_embeddings() -> Arc<StaticEmbeddings> {
    Arc::new(StaticEmbeddings::load(&crate_dir().join("data/demo_embeddings.tsv")).unwrap())
}

fn demo_server() -> (ServerHandle, Arc<NGramModel>) {
    let model = demo_model();
    let state = ServiceState::new(model.clone(), model.model_hash()).with_static_embedder(static_embeddings());
    (ServerHandle::spawn_local(state).unwrap(), model)
}

/// Backend whose every call fails the given way.
struct Broken {
    vocab: Vocabulary,
    unavailable: bool,
}

impl Broken {
    fn new(unavailable: bool) -> Broken {
        Broken {
            vocab: Vocabulary::from_words(["a", "b"]),
            unavailable,
        }
    }

    fn err(&self) -> BackendError {
        if self.unavailable {
            BackendError::Unavailable("warming up".into())
        } else {
            BackendError::Model("CUDA out of memory".into())
        }
    }
}

impl Backend for Broken {
    fn name(&self) -> &str {
        if self.unavailable {
            "sleepy"
        } else {
            "crashy"
        }
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_dist(&self, _: &[u32]) -> Result<Vec<f64>, BackendError> {
        Err(self.err())
    }

    fn score_words(&self, _: &[String]) -> Result<ScoredSequence, BackendError> {
        Err(self.err())
    }
}

#[test]
fn suggest_returns_n_prefix_preserving_candidates() {
    let (server, _) = demo_server();
    let (status, body) = post(&format!("{}/v1/suggest", server.url()), &json!({"prefix": TABLE_V_PREFIX, "n": 5}));
    assert_eq!(status, 200, "{body}");
    assert_schema("suggest_response", &body);
    let candidates = body["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 5);
    let logprobs: Vec<f64> = candidates.iter().map(|c| c["logprob"].as_f64().unwrap()).collect();
    for c in candidates {
        assert!(c["text"].as_str().unwrap().starts_with(TABLE_V_PREFIX));
    }
    assert!(logprobs.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn suggest_rejects_bad_requests() {
    let (server, _) = demo_server();
    let url = format!("{}/v1/suggest", server.url());
    let cases = [
        (post(&url, &json!({"prefix": ""})), 400),
        (post(&url, &json!({"prefix": "  ,  "})), 400),
        (post_raw(&url, "{\"prefix\": "), 400),
        (post(&url, &json!({"n": 3})), 400),
        (post(&url, &json!({"prefix": "pt reports", "temperature": 0.0})), 422),
        (post(&url, &json!({"prefix": "pt reports", "top_p": 1.5})), 422),
        (post(&url, &json!({"prefix": "pt reports", "top_k": 0})), 422),
        (post(&url, &json!({"prefix": "pt reports", "n": 0})), 422),
        (post(&url, &json!({"prefix": "pt reports", "backend": "nope"})), 422),
    ];
    for ((status, body), want) in cases {
        assert_eq!(status, want, "{body}");
        assert_schema("error", &body);
    }
}

#[test]
fn backend_failures_map_to_status_codes() {
    let model = demo_model();
    let state = ServiceState::new(Arc::new(Broken::new(false)), "none")
        .with_backend(model, true)
        .with_backend(Arc::new(Broken::new(true)), false);
    let server = ServerHandle::spawn_local(state).unwrap();
    let (status, body) = post(
        &format!("{}/v1/suggest", server.url()),
        &json!({"prefix": "pt reports", "backend": "sleepy"}),
    );
    assert_eq!(status, 503, "{body}");
    assert_schema("error", &body);
    let (status, body) = post(&format!("{}/v1/logprobs", server.url()), &json!({"sentences": ["a b"]}));
    assert_eq!(status, 500);
    assert!(body["message"].as_str().unwrap().contains("CUDA out of memory"));
}

#[test]
fn greedy_is_deterministic_including_concurrent_requests() {
    let (server, _) = demo_server();
    let url = format!("{}/v1/suggest", server.url());
    let req = json!({"prefix": "Pt reports left", "n": 1, "do_sample": false});
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("latency_ms");
        v
    };
    let first = strip(post(&url, &req).1);
    for _ in 0..3 {
        assert_eq!(strip(post(&url, &req).1), first);
    }
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (url, req) = (url.clone(), req.clone());
            std::thread::spawn(move || post(&url, &req).1)
        })
        .collect();
    for h in handles {
        assert_eq!(strip(h.join().unwrap()), first);
    }
}

#[test]
fn seeded_sampling_is_reproducible_over_http() {
    let (server, _) = demo_server();
    let url = format!("{}/v1/suggest", server.url());
    let req = json!({"prefix": TABLE_V_PREFIX, "seed": 42});
    assert_eq!(post(&url, &req).1["candidates"], post(&url, &req).1["candidates"]);
}

#[test]
fn next_endpoint_matches_model() {
    let (server, model) = demo_server();
    let (status, body) = post(&format!("{}/v1/next", server.url()), &json!({"context_words": []}));
    assert_eq!(status, 200);
    assert_schema("next_response", &body);
    let probs: Vec<f64> = serde_json::from_value(body["probs"].clone()).unwrap();
    let ids: Vec<usize> = serde_json::from_value(body["vocab_ids"].clone()).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let local = NGramModel::next_dist(&model, &[SOS_ID]);
    for (i, p) in ids.iter().zip(&probs) {
        assert_eq!(local[*i], *p);
    }
    let (status, body) = post(&format!("{}/v1/next", server.url()), &json!({"context": ["pt"]}));
    assert_eq!(status, 422);
    assert_schema("error", &body);
}

#[test]
fn logprobs_endpoint_contract() {
    let (server, model) = demo_server();
    let url = format!("{}/v1/logprobs", server.url());
    let (status, body) = post(&url, &json!({"sentences": ["Pt reports left knee", "Denies fever"]}));
    assert_eq!(status, 200);
    assert_schema("logprobs_response", &body);
    let items = body["items"].as_array().unwrap();
    assert_eq!(items[0]["logprobs"].as_array().unwrap().len(), 5);
    assert_eq!(items[0]["tokens"].as_array().unwrap().last().unwrap(), "<eos>");
    let local = model.score(&["Pt", "reports", "left", "knee"]);
    let remote: Vec<f64> = serde_json::from_value(items[0]["logprobs"].clone()).unwrap();
    assert_eq!(remote, local.logprobs);

    let too_many: Vec<String> = (0..65).map(|i| format!("sentence {i}")).collect();
    let (status, body) = post(&url, &json!({"sentences": too_many}));
    assert_eq!(status, 413);
    assert_schema("error", &body);
    assert_eq!(post(&url, &json!({"sentences": "not a list"})).0, 422);
}

#[test]
fn embed_endpoint_contract() {
    let (server, _) = demo_server();
    let url = format!("{}/v1/embed", server.url());
    let s = "Pt reports left knee pain";
    let (status, body) = post(&url, &json!({"sentences": [s, s], "mode": "static"}));
    assert_eq!(status, 200);
    assert_schema("embed_response", &body);
    let items = body["items"].as_array().unwrap();
    assert_eq!(items[0], items[1]);
    assert_eq!(items[0]["tokens"].as_array().unwrap().len(), 5);
    let (status, body) = post(&url, &json!({"sentences": [s], "mode": "contextual"}));
    assert_eq!(status, 422);
    assert_schema("error", &body);
    assert_eq!(post(&url, &json!({"sentences": [s], "mode": "sideways"})).0, 422);
}

#[test]
fn health_and_vocab_endpoints() {
    let (server, model) = demo_server();
    let (status, health) = get(&format!("{}/healthz", server.url()));
    assert_eq!(status, 200);
    assert_schema("healthz", &health);
    assert_eq!(health["model_hash"], model.model_hash());
    let (_, vocab) = get(&format!("{}/v1/vocab", server.url()));
    assert_schema("vocab", &vocab);
    assert_eq!(vocab["tokens"].as_array().unwrap().len(), model.vocabulary().len());
}

#[test]
fn remote_backend_is_transparent() {
    let (server, model) = demo_server();
    let remote = RemoteBackend::connect(&server.url()).unwrap();
    assert_eq!(remote.vocab().tokens(), model.vocabulary().tokens());
    for prefix in ["Pt reports left", TABLE_V_PREFIX, "unseen words entirely"] {
        for config in [
            GenerationConfig { rng_seed: Some(9), ..GenerationConfig::default() },
            GenerationConfig { n_return: 2, ..GenerationConfig::greedy() },
        ] {
            let local = complete(model.as_ref(), prefix, &config).unwrap();
            let over_http = complete(&remote, prefix, &config).unwrap();
            assert_eq!(local, over_http, "prefix {prefix:?}");
        }
    }
    let words: Vec<String> = ["Pt", "reports", "fever"].map(String::from).to_vec();
    assert_eq!(remote.score_words(&words).unwrap(), model.score(&words));
}

#[test]
fn remote_backend_reports_unreachable_server() {
    let err = RemoteBackend::connect("http://127.0.0.1:9").err().unwrap();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
}

#[test]
fn evaluation_job_runs_in_background() {
    let (server, _) = demo_server();
    let seeds = load_seeds(&crate_dir().join("tests/fixtures/eval/seeds.tsv")).unwrap();
    let (status, created) = post(
        &format!("{}/v1/jobs/evaluate", server.url()),
        &json!({"seeds": &seeds[..6], "metric": "cosine", "seed": 5}),
    );
    assert_eq!(status, 202, "{created}");
    let id = created["id"].as_u64().unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let status = loop {
        let (_, status) = get(&format!("{}/v1/jobs/{id}", server.url()));
        assert_schema("job_status", &status);
        if status["state"] != "running" || Instant::now() > deadline {
            break status;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(status["state"], "done", "{status}");
    assert_eq!(status["done"], 6);
    for column in status["report"]["columns"].as_array().unwrap() {
        let counts: Vec<u64> = serde_json::from_value(column["counts"].clone()).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 6);
    }
    assert_eq!(get(&format!("{}/v1/jobs/999", server.url())).0, 404);
}

#[test]
fn requests_validate_against_published_schemas() {
    assert_schema("suggest_request", &serde_json::to_value(cc_autocomplete::protocol::SuggestRequest::new("pt")).unwrap());
    assert_schema("next_request", &json!({"context_words": ["pt", "reports"]}));
    assert_schema("logprobs_request", &json!({"sentences": ["pt reports"]}));
    assert_schema("embed_request", &json!({"sentences": ["pt reports"], "mode": "contextual"}));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_requests_yield_schema_valid_responses(
        prefix in "[A-Za-z ,]{0,30}",
        n in 0usize..7,
        do_sample in any::<bool>(),
        temperature in prop::option::of(-0.5f64..3.0),
        top_k in prop::option::of(0usize..60),
        top_p in prop::option::of(0.0f64..1.2),
        max_new_words in 0usize..8,
        seed in prop::option::of(0u64..1000),
    ) {
        static SERVER: std::sync::OnceLock<(ServerHandle, Arc<NGramModel>)> = std::sync::OnceLock::new();
        let (server, _) = SERVER.get_or_init(demo_server);
        let mut req = json!({"prefix": prefix, "n": n, "do_sample": do_sample, "max_new_words": max_new_words});
        if let Some(t) = temperature { req["temperature"] = json!(t); }
        if let Some(k) = top_k { req["top_k"] = json!(k); }
        if let Some(p) = top_p { req["top_p"] = json!(p); }
        if let Some(s) = seed { req["seed"] = json!(s); }
        let (status, body) = post(&format!("{}/v1/suggest", server.url()), &req);
        match status {
            200 => {
                assert_schema("suggest_response", &body);
                prop_assert_eq!(body["candidates"].as_array().unwrap().len(), n);
            }
            400 | 422 => assert_schema("error", &body),
            other => prop_assert!(false, "unexpected status {other}: {body}"),
        }
    }
}

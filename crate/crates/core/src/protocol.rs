//! JSON bodies exchanged over HTTP. Schemas for these live in `schemas/`.

use serde::{Deserialize, Serialize};

use crate::generate::{Candidate, GenerationConfig, StopReason};
use crate::harness::{Aggregate, ScenarioReport};
use crate::preprocess::SeedRecord;
use crate::vocab::TokenId;

fn default_n() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub prefix: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_true")]
    pub do_sample: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default = "default_n")]
    pub max_new_words: usize,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SuggestRequest {
    pub fn new(prefix: impl Into<String>) -> SuggestRequest {
        SuggestRequest {
            prefix: prefix.into(),
            n: 5,
            do_sample: true,
            temperature: 1.0,
            top_k: None,
            top_p: None,
            max_new_words: 5,
            backend: None,
            seed: None,
        }
    }

    /// Unset filters fall back to the engine defaults.
    pub fn generation_config(&self) -> GenerationConfig {
        let defaults = GenerationConfig::default();
        GenerationConfig {
            n_return: self.n,
            do_sample: self.do_sample,
            temperature: self.temperature,
            top_k: self.top_k.or(defaults.top_k),
            top_p: self.top_p.or(defaults.top_p),
            max_new_words: self.max_new_words,
            max_len: defaults.max_len,
            rng_seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestCandidate {
    pub text: String,
    pub completion: String,
    pub logprob: f64,
    pub stop: StopReason,
}

impl From<Candidate> for SuggestCandidate {
    fn from(c: Candidate) -> Self {
        SuggestCandidate {
            text: c.full_text,
            completion: c.completion_words.join(" "),
            logprob: c.total_logprob,
            stop: c.stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub candidates: Vec<SuggestCandidate>,
    pub backend: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencesRequest {
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobsItem {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobsResponse {
    pub items: Vec<LogprobsItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    Contextual,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub sentences: Vec<String>,
    pub mode: EmbedMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedItem {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub items: Vec<EmbedItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextRequest {
    pub context_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextResponse {
    pub vocab_ids: Vec<TokenId>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabResponse {
    pub tokens: Vec<String>,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub backend: String,
    pub model_hash: String,
    pub eos_reliable: bool,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobMetric {
    Bertscore,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateJobRequest {
    pub seeds: Vec<SeedRecord>,
    pub metric: JobMetric,
    #[serde(default)]
    pub aggregate: Aggregate,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub state: JobState,
    pub done: usize,
    pub total: usize,
    pub report: Option<ScenarioReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: u64,
}

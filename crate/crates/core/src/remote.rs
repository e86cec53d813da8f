//! HTTP clients for backends and embedding providers that speak the wire
//! protocol (`/v1/next`, `/v1/logprobs`, `/v1/embed`).

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::backend::{Backend, BackendError};
use crate::metrics::{EmbeddedSentence, Embedder, MetricError, ScoredSequence};
use crate::protocol::{
    EmbedMode, EmbedRequest, EmbedResponse, Health, LogprobsResponse, NextRequest, NextResponse, SentencesRequest,
    VocabResponse,
};
use crate::vocab::{TokenId, Vocabulary, SOS_ID};

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}

fn map_err(url: &str, e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::StatusCode(503) => BackendError::Unavailable(format!("{url}: 503")),
        ureq::Error::StatusCode(code) if code >= 500 => BackendError::Model(format!("{url}: HTTP {code}")),
        ureq::Error::StatusCode(code) => BackendError::Protocol(format!("{url}: HTTP {code}")),
        ureq::Error::Json(e) => BackendError::Protocol(format!("{url}: {e}")),
        other => BackendError::Unavailable(format!("{url}: {other}")),
    }
}

fn post<B: Serialize, T: DeserializeOwned>(agent: &ureq::Agent, url: &str, body: &B) -> Result<T, BackendError> {
    agent
        .post(url)
        .send_json(body)
        .and_then(|r| r.into_body().with_config().limit(256 << 20).read_json())
        .map_err(|e| map_err(url, e))
}

fn get<T: DeserializeOwned>(agent: &ureq::Agent, url: &str) -> Result<T, BackendError> {
    agent
        .get(url)
        .call()
        .and_then(|r| r.into_body().with_config().limit(256 << 20).read_json())
        .map_err(|e| map_err(url, e))
}

/// A backend reached over HTTP. The vocabulary is fetched once at connect.
pub struct RemoteBackend {
    base: String,
    name: String,
    vocab: Vocabulary,
    eos_reliable: bool,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn connect(base_url: &str) -> Result<RemoteBackend, BackendError> {
        let base = base_url.trim_end_matches('/').to_string();
        let agent = agent();
        let health: Health = get(&agent, &format!("{base}/healthz"))?;
        let vocab: VocabResponse = get(&agent, &format!("{base}/v1/vocab"))?;
        let vocab = Vocabulary::from_token_list(vocab.tokens).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(RemoteBackend {
            name: format!("remote:{}", health.backend),
            base,
            vocab,
            eos_reliable: health.eos_reliable,
            agent,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        let start = context.iter().take_while(|&&t| t == SOS_ID).count();
        let context_words = context[start..]
            .iter()
            .map(|&id| {
                self.vocab
                    .token(id)
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::Protocol(format!("token id {id} outside vocabulary")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let resp: NextResponse = post(&self.agent, &format!("{}/v1/next", self.base), &NextRequest { context_words })?;
        if resp.vocab_ids.len() != resp.probs.len() {
            return Err(BackendError::Protocol("vocab_ids and probs differ in length".into()));
        }
        let mut dist = vec![0.0; self.vocab.len()];
        for (&id, &p) in resp.vocab_ids.iter().zip(&resp.probs) {
            let slot = dist
                .get_mut(id as usize)
                .ok_or_else(|| BackendError::Protocol(format!("token id {id} outside vocabulary")))?;
            *slot = p;
        }
        Ok(dist)
    }

    fn score_words(&self, words: &[String]) -> Result<ScoredSequence, BackendError> {
        let body = SentencesRequest {
            sentences: vec![words.join(" ")],
        };
        let resp: LogprobsResponse = post(&self.agent, &format!("{}/v1/logprobs", self.base), &body)?;
        let item = resp
            .items
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("empty logprobs response".into()))?;
        let scored = ScoredSequence {
            tokens: item.tokens,
            logprobs: item.logprobs,
        };
        if !scored.is_well_formed() {
            return Err(BackendError::Protocol("malformed scored sequence".into()));
        }
        Ok(scored)
    }

    fn eos_reliable(&self) -> bool {
        self.eos_reliable
    }
}

/// Embeddings fetched from a `/v1/embed` endpoint.
pub struct RemoteEmbedder {
    base: String,
    mode: EmbedMode,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, mode: EmbedMode) -> RemoteEmbedder {
        RemoteEmbedder {
            base: base_url.trim_end_matches('/').to_string(),
            mode,
            agent: agent(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddedSentence, MetricError> {
        let body = EmbedRequest {
            sentences: vec![text.to_string()],
            mode: self.mode,
        };
        let resp: EmbedResponse = post(&self.agent, &format!("{}/v1/embed", self.base), &body)
            .map_err(|e| MetricError::Unavailable(e.to_string()))?;
        let item = resp
            .items
            .into_iter()
            .next()
            .ok_or_else(|| MetricError::Unavailable("empty embed response".into()))?;
        EmbeddedSentence::new(item.tokens, item.vectors)
    }

    fn provenance(&self) -> String {
        let mode = match self.mode {
            EmbedMode::Contextual => "contextual",
            EmbedMode::Static => "static",
        };
        format!("remote:{}/v1/embed ({mode})", self.base)
    }
}

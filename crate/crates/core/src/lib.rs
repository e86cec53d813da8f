//! Chief-complaint autocompletion and evaluation.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`corpus`] reads raw triage exports into records.
//! 2. [`preprocess`] cuts off past-history sections, segments sentences,
//!    drops sentences under four words, splits 80/10/10 and derives 30%/50%
//!    seed prefixes and a vocabulary.
//! 3. [`ngram`] trains a smoothed n-gram model; [`generate`] decodes top-n
//!    completions from any [`backend::Backend`], in-process or over HTTP
//!    ([`remote`], [`service`]).
//! 4. [`metrics`] and [`harness`] score completions against references with
//!    perplexity, BERTScore and averaged-vector cosine, and bucket the results.

pub mod backend;
pub mod corpus;
pub mod generate;
pub mod harness;
pub mod metrics;
pub mod ngram;
pub mod preprocess;
pub mod protocol;
pub mod remote;
pub mod service;
pub mod vocab;

pub use backend::{Backend, BackendError};
pub use generate::{complete, Candidate, GenerationConfig, StopReason};
pub use metrics::{EmbeddedSentence, Embedder, ScoredSequence};
pub use ngram::NGramModel;
pub use vocab::Vocabulary;

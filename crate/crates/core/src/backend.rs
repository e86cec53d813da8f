//! The contract every language-model backend satisfies, in-process or remote.

use crate::metrics::ScoredSequence;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend model failure: {0}")]
    Model(String),
}

/// A word-level language model.
///
/// Token ids index into [`Backend::vocab`]; ids 0..=3 are the reserved
/// `<sos>`, `<eos>`, `<unk>`, `<pad>` tokens.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn vocab(&self) -> &Vocabulary;

    /// Dense next-word distribution over the vocabulary given `context`,
    /// which normally starts with `<sos>`.
    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>, BackendError>;

    /// Log-likelihood of each word of `words` followed by `<eos>`, conditioned
    /// from `<sos>`.
    fn score_words(&self, words: &[String]) -> Result<ScoredSequence, BackendError>;

    /// Whether `<eos>` predictions can be trusted. When false the decoder
    /// never stops on `<eos>` and always fills the word budget.
    fn eos_reliable(&self) -> bool {
        true
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        (**self).next_dist(context)
    }

    fn score_words(&self, words: &[String]) -> Result<ScoredSequence, BackendError> {
        (**self).score_words(words)
    }

    fn eos_reliable(&self) -> bool {
        (**self).eos_reliable()
    }
}

//! Count-based n-gram language model with interpolated absolute discounting.
//!
//! For a context `h` seen `c(h)` times with `N1+(h)` distinct followers:
//!
//! ```text
//! P(w | h) = max(c(h, w) - D, 0) / c(h)  +  D * N1+(h) / c(h) * P(w | h')
//! ```
//!
//! where `h'` drops the oldest word of `h`. The recursion bottoms out in a
//! uniform distribution over the whole vocabulary, so every token keeps some
//! probability in every context. Unseen contexts fall through to the next
//! shorter one unchanged.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{Backend, BackendError};
use crate::metrics::ScoredSequence;
use crate::vocab::{TokenId, Vocabulary, EOS, EOS_ID, SOS, SOS_ID};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.75;

const FORMAT: &str = "cc-ngram";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum NgramError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    BadOrder,
    #[error("discount must lie in (0, 1), got {0}")]
    BadDiscount(f64),
    #[error("vocabulary hash mismatch: model has {model}, expected {expected}")]
    VocabMismatch { model: String, expected: String },
    #[error("unsupported model file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    followers: BTreeMap<TokenId, u64>,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    vocab: Vocabulary,
    /// `levels[k]` maps contexts of length `k` to follower counts.
    levels: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
    name: String,
}

impl NGramModel {
    /// Counts every n-gram of order `<= order` over the sentences, each
    /// framed as `<sos>`^(order-1) words `<eos>`. Out-of-vocabulary words
    /// are counted as `<unk>`.
    pub fn train<S: AsRef<str>>(
        sentences: &[Vec<S>],
        vocab: Vocabulary,
        order: usize,
        discount: f64,
    ) -> Result<NGramModel, NgramError> {
        if order == 0 {
            return Err(NgramError::BadOrder);
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(NgramError::BadDiscount(discount));
        }
        if sentences.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        let mut levels: Vec<HashMap<Vec<TokenId>, ContextCounts>> = vec![HashMap::new(); order];
        let mut framed = Vec::new();
        for sentence in sentences {
            framed.clear();
            framed.resize(order - 1, SOS_ID);
            framed.extend(sentence.iter().map(|w| vocab.id(w.as_ref())));
            framed.push(EOS_ID);
            for target in order - 1..framed.len() {
                let word = framed[target];
                for (k, level) in levels.iter_mut().enumerate() {
                    let entry = level.entry(framed[target - k..target].to_vec()).or_default();
                    entry.total += 1;
                    *entry.followers.entry(word).or_default() += 1;
                }
            }
        }
        Ok(NGramModel {
            order,
            discount,
            vocab,
            levels,
            name: format!("ngram-{order}"),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn with_name(mut self, name: impl Into<String>) -> NGramModel {
        self.name = name.into();
        self
    }

    /// The last `order - 1` tokens of `context`, left-padded with `<sos>`.
    fn history(&self, context: &[TokenId]) -> Vec<TokenId> {
        let n = self.order - 1;
        let tail = &context[context.len().saturating_sub(n)..];
        let mut h = vec![SOS_ID; n - tail.len()];
        h.extend_from_slice(tail);
        h
    }

    /// Levels that apply to `history`, shortest first.
    fn applicable<'a>(&'a self, history: &'a [TokenId]) -> impl Iterator<Item = &'a ContextCounts> + 'a {
        (0..self.order).filter_map(move |k| self.levels[k].get(&history[history.len() - k..]))
    }

    pub fn next_dist(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        let mut p = vec![1.0 / v as f64; v];
        let history = self.history(context);
        for counts in self.applicable(&history) {
            let total = counts.total as f64;
            let gamma = self.discount * counts.followers.len() as f64 / total;
            p.iter_mut().for_each(|x| *x *= gamma);
            for (&w, &c) in &counts.followers {
                p[w as usize] += (c as f64 - self.discount).max(0.0) / total;
            }
        }
        p
    }

    /// Probability of a single token; bit-identical to the matching
    /// [`next_dist`](Self::next_dist) entry.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let mut p = 1.0 / self.vocab.len() as f64;
        let history = self.history(context);
        for counts in self.applicable(&history) {
            let total = counts.total as f64;
            let gamma = self.discount * counts.followers.len() as f64 / total;
            p *= gamma;
            if let Some(&c) = counts.followers.get(&token) {
                p += (c as f64 - self.discount).max(0.0) / total;
            }
        }
        p
    }

    pub fn score<S: AsRef<str>>(&self, words: &[S]) -> ScoredSequence {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(SOS_ID);
        ids.extend(words.iter().map(|w| self.vocab.id(w.as_ref())));
        ids.push(EOS_ID);
        let logprobs = (1..ids.len()).map(|i| self.prob(&ids[..i], ids[i]).ln()).collect();
        let mut tokens = Vec::with_capacity(ids.len());
        tokens.push(SOS.to_string());
        tokens.extend(words.iter().map(|w| w.as_ref().to_string()));
        tokens.push(EOS.to_string());
        ScoredSequence { tokens, logprobs }
    }

    fn to_file(&self) -> ModelFile {
        let levels = self
            .levels
            .iter()
            .map(|level| {
                let mut entries: Vec<ContextEntry> = level
                    .iter()
                    .map(|(ctx, counts)| ContextEntry {
                        context: ctx.clone(),
                        followers: counts.followers.iter().map(|(&w, &c)| (w, c)).collect(),
                    })
                    .collect();
                entries.sort_by(|a, b| a.context.cmp(&b.context));
                entries
            })
            .collect();
        ModelFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            order: self.order,
            discount: self.discount,
            vocab_hash: self.vocab.hash(),
            vocab: self.vocab.tokens().to_vec(),
            levels,
        }
    }

    pub fn to_json(&self) -> Result<String, NgramError> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    /// SHA-256 of the canonical serialized model.
    pub fn model_hash(&self) -> String {
        let json = self.to_json().expect("model serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), NgramError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<NGramModel, NgramError> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.format != FORMAT || file.version != FORMAT_VERSION {
            return Err(NgramError::BadFormat(format!("{} v{}", file.format, file.version)));
        }
        let vocab = Vocabulary::from_token_list(file.vocab).map_err(|e| NgramError::BadFormat(e.to_string()))?;
        if vocab.hash() != file.vocab_hash {
            return Err(NgramError::VocabMismatch {
                model: file.vocab_hash,
                expected: vocab.hash(),
            });
        }
        if file.order == 0 || file.levels.len() != file.order {
            return Err(NgramError::BadFormat("level count does not match order".into()));
        }
        let v = vocab.len() as TokenId;
        let mut levels = Vec::with_capacity(file.order);
        for (k, entries) in file.levels.into_iter().enumerate() {
            let mut level = HashMap::with_capacity(entries.len());
            for e in entries {
                if e.context.len() != k || e.context.iter().chain(e.followers.iter().map(|(w, _)| w)).any(|&t| t >= v) {
                    return Err(NgramError::BadFormat(format!("bad context entry at order {k}")));
                }
                let followers: BTreeMap<TokenId, u64> = e.followers.into_iter().collect();
                let total = followers.values().sum();
                level.insert(e.context, ContextCounts { total, followers });
            }
            levels.push(level);
        }
        Ok(NGramModel {
            order: file.order,
            discount: file.discount,
            vocab,
            levels,
            name: format!("ngram-{}", file.order),
        })
    }

    pub fn load(path: &Path) -> Result<NGramModel, NgramError> {
        NGramModel::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads a model and checks it was trained against `vocab`.
    pub fn load_with_vocab(path: &Path, vocab: &Vocabulary) -> Result<NGramModel, NgramError> {
        let model = NGramModel::load(path)?;
        if model.vocab.hash() != vocab.hash() {
            return Err(NgramError::VocabMismatch {
                model: model.vocab.hash(),
                expected: vocab.hash(),
            });
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    context: Vec<TokenId>,
    followers: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    discount: f64,
    vocab_hash: String,
    vocab: Vec<String>,
    levels: Vec<Vec<ContextEntry>>,
}

impl Backend for NGramModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        Ok(NGramModel::next_dist(self, context))
    }

    fn score_words(&self, words: &[String]) -> Result<ScoredSequence, BackendError> {
        Ok(self.score(words))
    }
}

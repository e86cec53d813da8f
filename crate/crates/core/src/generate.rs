//! Decoding: temperature, top-k and nucleus filtering, sampled or greedy
//! rollouts, and few-shot prompt assembly.
//!
//! Filters are applied in a fixed order: temperature, then top-k, then top-p.
//! Ties are always broken by ascending token id.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError};
use crate::preprocess::tokenize_words;
use crate::vocab::{TokenId, DEFAULT_MAX_LEN, EOS_ID, PAD_ID, SOS_ID, UNK_ID};

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("prefix has no words")]
    EmptyPrefix,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("need at least {min} examples, got k = {k}")]
    TooFewExamples { k: usize, min: usize },
    #[error("k = {k} exceeds the {available} available examples")]
    NotEnoughExamples { k: usize, available: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_return: usize,
    pub do_sample: bool,
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub max_new_words: usize,
    pub max_len: usize,
    pub rng_seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_return: 5,
            do_sample: true,
            temperature: 1.0,
            top_k: Some(50),
            top_p: Some(0.95),
            max_new_words: 5,
            max_len: DEFAULT_MAX_LEN,
            rng_seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn greedy() -> GenerationConfig {
        GenerationConfig {
            do_sample: false,
            ..GenerationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::InvalidConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return bad("top_p must lie in (0, 1]");
            }
        }
        if self.top_k == Some(0) {
            return bad("top_k must be at least 1");
        }
        if self.n_return == 0 {
            return bad("n_return must be at least 1");
        }
        if self.max_new_words == 0 {
            return bad("max_new_words must be at least 1");
        }
        if self.max_len < 3 {
            return bad("max_len must leave room for <sos>, a word and <eos>");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Eos,
    WordBudget,
    MaxLen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub full_text: String,
    pub completion_words: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
    pub stop: StopReason,
}

/// Rescales `p_i` to `p_i^(1/T)`, renormalized. Computed in log space so
/// small temperatures concentrate on the argmax instead of underflowing.
pub fn apply_temperature(dist: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 1.0 {
        return dist.to_vec();
    }
    let max_log = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if max_log == f64::NEG_INFINITY {
        return dist.to_vec();
    }
    let scaled: Vec<f64> = dist
        .iter()
        .map(|&p| if p > 0.0 { ((p.ln() - max_log) / temperature).exp() } else { 0.0 })
        .collect();
    normalize(scaled)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}

/// Indices sorted by probability descending, ties by ascending id.
fn ranked(dist: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx
}

fn keep_only(dist: &[f64], keep: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; dist.len()];
    for &i in keep {
        out[i] = dist[i];
    }
    normalize(out)
}

pub fn filter_top_k(dist: &[f64], k: usize) -> Vec<f64> {
    if k >= dist.len() {
        return dist.to_vec();
    }
    let order = ranked(dist);
    keep_only(dist, &order[..k.max(1)])
}

/// Keeps the smallest high-probability prefix whose mass reaches `p`.
pub fn filter_top_p(dist: &[f64], p: f64) -> Vec<f64> {
    if p >= 1.0 {
        return dist.to_vec();
    }
    let order = ranked(dist);
    let mut cumulative = 0.0;
    let mut cut = order.len();
    for (n, &i) in order.iter().enumerate() {
        cumulative += dist[i];
        // absorb rounding in the running sum
        if cumulative + 1e-12 >= p {
            cut = n + 1;
            break;
        }
    }
    keep_only(dist, &order[..cut])
}

/// Temperature, then top-k, then top-p.
pub fn apply_filters(dist: &[f64], temperature: f64, top_k: Option<usize>, top_p: Option<f64>) -> Vec<f64> {
    let mut d = apply_temperature(dist, temperature);
    if let Some(k) = top_k {
        d = filter_top_k(&d, k);
    }
    if let Some(p) = top_p {
        d = filter_top_p(&d, p);
    }
    d
}

pub fn argmax(dist: &[f64]) -> Option<usize> {
    dist.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((i, p)),
        })
        .map(|(i, _)| i)
}

/// Inverse-CDF draw walking ids in ascending order.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last = None;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last = Some(i);
        if target < cumulative {
            return Some(i);
        }
    }
    last
}

/// Candidate `index` draws from its own ChaCha stream so rollouts are
/// independent of each other and of execution order.
pub fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn join_completion(prefix: &str, words: &[String]) -> String {
    if words.is_empty() {
        return prefix.to_string();
    }
    let sep = if prefix.ends_with(char::is_whitespace) { "" } else { " " };
    format!("{prefix}{sep}{}", words.join(" "))
}

fn rollout(
    backend: &dyn Backend,
    prefix: &str,
    prefix_ids: &[TokenId],
    config: &GenerationConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Candidate, GenerateError> {
    let vocab = backend.vocab();
    let mut rng = rng;
    let mut context = Vec::with_capacity(prefix_ids.len() + config.max_new_words + 1);
    context.push(SOS_ID);
    context.extend_from_slice(prefix_ids);
    let mut words = Vec::new();
    let mut logprobs = Vec::new();
    let allow_eos = backend.eos_reliable();

    let stop = loop {
        // room for one more word plus <eos>
        if context.len() + 2 > config.max_len {
            break StopReason::MaxLen;
        }
        let raw = backend.next_dist(&context)?;
        if raw.len() != vocab.len() {
            return Err(BackendError::Protocol(format!(
                "distribution has {} entries for a vocabulary of {}",
                raw.len(),
                vocab.len()
            ))
            .into());
        }
        let mut masked = raw.clone();
        for id in [SOS_ID, PAD_ID, UNK_ID] {
            masked[id as usize] = 0.0;
        }
        if !allow_eos {
            masked[EOS_ID as usize] = 0.0;
        }
        let filtered = apply_filters(&normalize(masked), config.temperature, config.top_k, config.top_p);
        let choice = match rng.as_deref_mut() {
            Some(r) if config.do_sample => sample_index(&filtered, r),
            _ => argmax(&filtered),
        }
        .ok_or_else(|| BackendError::Protocol("distribution has no admissible token".into()))?;

        logprobs.push(raw[choice].ln());
        if choice as TokenId == EOS_ID {
            break StopReason::Eos;
        }
        let word = vocab
            .token(choice as TokenId)
            .ok_or_else(|| BackendError::Protocol(format!("token id {choice} outside vocabulary")))?;
        words.push(word.to_string());
        context.push(choice as TokenId);
        if words.len() >= config.max_new_words {
            break StopReason::WordBudget;
        }
    };

    Ok(Candidate {
        full_text: join_completion(prefix, &words),
        total_logprob: logprobs.iter().sum(),
        completion_words: words,
        token_logprobs: logprobs,
        stop,
    })
}

/// Generates `n_return` completions of `prefix`, best total log-probability
/// first (ties keep rollout order).
pub fn complete(backend: &dyn Backend, prefix: &str, config: &GenerationConfig) -> Result<Vec<Candidate>, GenerateError> {
    config.validate()?;
    let words = tokenize_words(prefix);
    if words.is_empty() {
        return Err(GenerateError::EmptyPrefix);
    }
    let prefix_ids = backend.vocab().ids(&words);
    let seed = config.rng_seed.unwrap_or_else(rand::random);
    let mut candidates = (0..config.n_return)
        .map(|i| {
            let mut rng = candidate_rng(seed, i);
            rollout(backend, prefix, &prefix_ids, config, Some(&mut rng))
        })
        .collect::<Result<Vec<_>, _>>()?;
    candidates.sort_by(|a, b| b.total_logprob.total_cmp(&a.total_logprob));
    Ok(candidates)
}

pub const FEWSHOT_MIN_EXAMPLES: usize = 10;
pub const FEWSHOT_TEMPERATURE: f64 = 0.7;
pub const FEWSHOT_N: usize = 5;

pub const DEFAULT_INSTRUCTION: &str = "You help emergency department triage nurses write chief complaints. \
Given the beginning of a chief complaint, continue it in the same terse clinical style, using the \
abbreviations seen in the examples. Return only the completed chief complaint.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSettings {
    pub temperature: f64,
    pub n: usize,
}

/// A few-shot prompt for a hosted chat model. Built here, never sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub instruction: String,
    pub examples: Vec<String>,
    pub settings: PromptSettings,
}

/// Picks `k` exemplars by a seeded partial shuffle.
pub fn build_fewshot_prompt(
    examples: &[String],
    instruction: &str,
    k: usize,
    seed: u64,
) -> Result<PromptDocument, GenerateError> {
    if k < FEWSHOT_MIN_EXAMPLES {
        return Err(GenerateError::TooFewExamples {
            k,
            min: FEWSHOT_MIN_EXAMPLES,
        });
    }
    if k > examples.len() {
        return Err(GenerateError::NotEnoughExamples {
            k,
            available: examples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(PromptDocument {
        instruction: instruction.to_string(),
        examples: idx[..k].iter().map(|&i| examples[i].clone()).collect(),
        settings: PromptSettings {
            temperature: FEWSHOT_TEMPERATURE,
            n: FEWSHOT_N,
        },
    })
}

//! Perplexity, BERTScore and averaged-word-vector cosine similarity.
//!
//! Embeddings are consumed here, never computed: they come from a static
//! table, a recorded JSONL file, or a remote `/v1/embed` endpoint.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::preprocess::tokenize_words;

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("sequence has no scored tokens")]
    EmptySequence,
    #[error("no sequences to pool")]
    EmptyInput,
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("mean vector has zero norm")]
    ZeroVector,
    #[error("{0} tokens but {1} vectors")]
    MisalignedTokens(usize, usize),
    #[error("malformed embedding table: {0}")]
    MalformedTable(String),
    #[error("embedding table has no `<unk>` vector")]
    MissingUnkVector,
    #[error("no embedding recorded for `{0}`")]
    NotFound(String),
    #[error("embedding provider unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokens `x_0..x_t` with the conditional log-likelihood of each `x_i`, `i >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

impl ScoredSequence {
    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }

    /// Checks `len(logprobs) == len(tokens) - 1` and that no logprob is positive.
    pub fn is_well_formed(&self) -> bool {
        self.logprobs.len() + 1 == self.tokens.len() && self.logprobs.iter().all(|&l| l <= 0.0)
    }
}

/// `exp(-mean(logprobs))`.
pub fn perplexity(scored: &ScoredSequence) -> Result<f64, MetricError> {
    perplexity_of(&scored.logprobs)
}

pub fn perplexity_of(logprobs: &[f64]) -> Result<f64, MetricError> {
    if logprobs.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let nll: f64 = -logprobs.iter().sum::<f64>();
    Ok((nll / logprobs.len() as f64).exp())
}

/// Pools every scored token across sequences before averaging.
pub fn corpus_perplexity(scored: &[ScoredSequence]) -> Result<f64, MetricError> {
    if scored.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (mut nll, mut count) = (0.0, 0usize);
    for s in scored {
        nll -= s.logprobs.iter().sum::<f64>();
        count += s.logprobs.len();
    }
    if count == 0 {
        return Err(MetricError::EmptySequence);
    }
    Ok((nll / count as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSentence {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

impl EmbeddedSentence {
    pub fn new(tokens: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<EmbeddedSentence, MetricError> {
        if tokens.len() != vectors.len() {
            return Err(MetricError::MisalignedTokens(tokens.len(), vectors.len()));
        }
        if tokens.is_empty() {
            return Err(MetricError::EmptySentence);
        }
        let dim = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(MetricError::DimensionMismatch(dim, v.len()));
        }
        let mut mean = vec![0.0; dim];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let n = vectors.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(EmbeddedSentence { tokens, vectors, mean })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl BertScore {
    pub fn from_pr(precision: f64, recall: f64) -> BertScore {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BertScore { recall, precision, f1 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n < ZERO_NORM {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Greedy-matching BERTScore over unit-normalized token vectors, without IDF
/// weighting or baseline rescaling.
pub fn bertscore(reference: &EmbeddedSentence, candidate: &EmbeddedSentence) -> Result<BertScore, MetricError> {
    if reference.dim() != candidate.dim() {
        return Err(MetricError::DimensionMismatch(reference.dim(), candidate.dim()));
    }
    let refs: Vec<Vec<f64>> = reference.vectors.iter().map(|v| unit(v)).collect();
    let cands: Vec<Vec<f64>> = candidate.vectors.iter().map(|v| unit(v)).collect();

    // sim[i][j] = <ref_i, cand_j>
    let sim: Vec<Vec<f64>> = refs
        .iter()
        .map(|r| cands.iter().map(|c| dot(r, c)).collect())
        .collect();
    let recall = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / refs.len() as f64;
    let precision = (0..cands.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cands.len() as f64;
    Ok(BertScore::from_pr(precision, recall))
}

/// Cosine similarity of the two sentences' mean token vectors.
pub fn avg_cosine(reference: &EmbeddedSentence, candidate: &EmbeddedSentence) -> Result<f64, MetricError> {
    if reference.dim() != candidate.dim() {
        return Err(MetricError::DimensionMismatch(reference.dim(), candidate.dim()));
    }
    let (a, b) = (reference.mean_vector(), candidate.mean_vector());
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Anything that can turn a sentence into per-token vectors.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddedSentence, MetricError>;

    /// Short description recorded in reports.
    fn provenance(&self) -> String;
}

/// File name only, so reports do not depend on where the file lives.
fn file_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Static word-vector table loaded from `#dim D` TSV.
#[derive(Debug, Clone)]
pub struct StaticEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
    source: String,
}

impl StaticEmbeddings {
    pub fn load(path: &Path) -> Result<StaticEmbeddings, MetricError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut table = StaticEmbeddings::parse(file)?;
        table.source = file_label(path);
        Ok(table)
    }

    pub fn parse<R: BufRead>(input: R) -> Result<StaticEmbeddings, MetricError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| MetricError::MalformedTable("empty file".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("#dim")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| MetricError::MalformedTable(format!("bad header `{header}`")))?;
        let mut vectors = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| MetricError::MalformedTable(format!("line {}: {what}", i + 2));
            let (token, values) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let vector = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("non-numeric value"))?;
            if vector.len() != dim {
                return Err(bad(&format!("expected {dim} values, got {}", vector.len())));
            }
            vectors.insert(token.to_string(), vector);
        }
        if vectors.is_empty() {
            return Err(MetricError::MalformedTable("no vectors".into()));
        }
        let unk = vectors.get(crate::vocab::UNK).cloned().ok_or(MetricError::MissingUnkVector)?;
        Ok(StaticEmbeddings {
            dim,
            vectors,
            unk,
            source: "inline".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, token: &str) -> &[f64] {
        self.vectors.get(token).unwrap_or(&self.unk)
    }

    /// Looks every word up, falling back to the `<unk>` vector.
    pub fn embed_words<S: AsRef<str>>(&self, words: &[S]) -> Result<EmbeddedSentence, MetricError> {
        let tokens: Vec<String> = words.iter().map(|w| w.as_ref().to_string()).collect();
        let vectors = tokens.iter().map(|t| self.vector(t).to_vec()).collect();
        EmbeddedSentence::new(tokens, vectors)
    }
}

impl Embedder for StaticEmbeddings {
    fn embed(&self, text: &str) -> Result<EmbeddedSentence, MetricError> {
        self.embed_words(&tokenize_words(text))
    }

    fn provenance(&self) -> String {
        format!("static:{}", self.source)
    }
}

/// One line of a contextual embedding JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: serde_json::Value,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Pre-computed contextual embeddings, looked up by sentence.
///
/// A sentence is matched by its words joined with single spaces against each
/// record's tokens joined the same way, or against a string `id`.
#[derive(Debug, Clone, Default)]
pub struct RecordedEmbeddings {
    by_key: HashMap<String, EmbeddedSentence>,
    source: String,
}

impl RecordedEmbeddings {
    pub fn load(path: &Path) -> Result<RecordedEmbeddings, MetricError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut out = RecordedEmbeddings::parse(file)?;
        out.source = file_label(path);
        Ok(out)
    }

    pub fn parse<R: BufRead>(input: R) -> Result<RecordedEmbeddings, MetricError> {
        let mut out = RecordedEmbeddings {
            by_key: HashMap::new(),
            source: "inline".into(),
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = serde_json::from_str(&line)
                .map_err(|e| MetricError::MalformedTable(format!("line {}: {e}", i + 1)))?;
            out.insert(record)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<(), MetricError> {
        let key = record.tokens.join(" ");
        let id_key = record.id.as_str().map(str::to_string);
        let sentence = EmbeddedSentence::new(record.tokens, record.vectors)?;
        if let Some(id) = id_key {
            self.by_key.insert(id, sentence.clone());
        }
        self.by_key.insert(key, sentence);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}

impl Embedder for RecordedEmbeddings {
    fn embed(&self, text: &str) -> Result<EmbeddedSentence, MetricError> {
        let key = tokenize_words(text).join(" ");
        self.by_key
            .get(&key)
            .or_else(|| self.by_key.get(text))
            .cloned()
            .ok_or_else(|| MetricError::NotFound(text.to_string()))
    }

    fn provenance(&self) -> String {
        format!("recorded:{}", self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(vectors: &[&[f64]]) -> EmbeddedSentence {
        let tokens = (0..vectors.len()).map(|i| format!("t{i}")).collect();
        EmbeddedSentence::new(tokens, vectors.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    fn seq(logprobs: &[f64]) -> ScoredSequence {
        let mut tokens = vec!["<sos>".to_string()];
        tokens.extend((0..logprobs.len()).map(|i| format!("w{i}")));
        ScoredSequence {
            tokens,
            logprobs: logprobs.to_vec(),
        }
    }

    #[test]
    fn perplexity_cases() {
        let half = 0.5f64.ln();
        assert!((perplexity(&seq(&[half; 7])).unwrap() - 2.0).abs() < 1e-12);
        let ppl = perplexity(&seq(&[0.1f64.ln(), 0.2f64.ln(), 0.4f64.ln()])).unwrap();
        assert!((ppl - 5.0).abs() < 1e-9);
        assert!(matches!(perplexity(&seq(&[])), Err(MetricError::EmptySequence)));
    }

    #[test]
    fn pooled_perplexity() {
        let a = seq(&[0.5f64.ln()]);
        let b = seq(&[0.125f64.ln()]);
        assert!((corpus_perplexity(&[a.clone(), b]).unwrap() - 4.0).abs() < 1e-9);
        assert_eq!(corpus_perplexity(std::slice::from_ref(&a)).unwrap(), perplexity(&a).unwrap());
        assert!(matches!(corpus_perplexity(&[]), Err(MetricError::EmptyInput)));
    }

    #[test]
    fn bertscore_examples() {
        let r = sent(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let c = sent(&[&[1.0, 0.0]]);
        let s = bertscore(&r, &c).unwrap();
        assert!((s.recall - 0.5).abs() < 1e-12);
        assert!((s.precision - 1.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let t = bertscore(&c, &r).unwrap();
        assert_eq!((t.recall, t.precision), (s.precision, s.recall));

        let same = bertscore(&r, &r).unwrap();
        assert!((same.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bertscore_dimension_mismatch() {
        let a = sent(&[&[1.0, 0.0]]);
        let b = sent(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(bertscore(&a, &b), Err(MetricError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn f1_zero_when_both_zero() {
        assert_eq!(BertScore::from_pr(0.0, 0.0).f1, 0.0);
    }

    #[test]
    fn cosine_cases() {
        let a = sent(&[&[1.0, 0.0]]);
        let b = sent(&[&[0.0, 1.0]]);
        assert!(avg_cosine(&a, &b).unwrap().abs() < 1e-12);
        let c = sent(&[&[0.3, -2.0], &[1.5, 0.7]]);
        let scaled = sent(&[&[0.3 * 7.3, -2.0 * 7.3], &[1.5 * 7.3, 0.7 * 7.3]]);
        assert!((avg_cosine(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!((avg_cosine(&a, &c).unwrap() - avg_cosine(&a, &scaled).unwrap()).abs() < 1e-9);
        let zero = sent(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert!(matches!(avg_cosine(&a, &zero), Err(MetricError::ZeroVector)));
    }

    #[test]
    fn embedded_sentence_checks() {
        assert!(matches!(
            EmbeddedSentence::new(vec![], vec![]),
            Err(MetricError::EmptySentence)
        ));
        assert!(matches!(
            EmbeddedSentence::new(vec!["a".into()], vec![]),
            Err(MetricError::MisalignedTokens(1, 0))
        ));
        assert!(matches!(
            EmbeddedSentence::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![1.0, 2.0]]),
            Err(MetricError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn static_table() {
        let table = StaticEmbeddings::parse("#dim 2\na\t1 0\nb\t0 1\n<unk>\t0.5 0.5\n".as_bytes()).unwrap();
        let e = table.embed("a b").unwrap();
        assert_eq!(e.vectors(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(e.mean_vector(), &[0.5, 0.5]);
        let oov = table.embed("zzz").unwrap();
        assert_eq!(oov.vectors(), &[vec![0.5, 0.5]]);
    }

    #[test]
    fn static_table_errors() {
        assert!(matches!(StaticEmbeddings::parse("".as_bytes()), Err(MetricError::MalformedTable(_))));
        assert!(matches!(
            StaticEmbeddings::parse("#dim 2\n".as_bytes()),
            Err(MetricError::MalformedTable(_))
        ));
        assert!(matches!(
            StaticEmbeddings::parse("#dim 2\na\t1 0 0\n".as_bytes()),
            Err(MetricError::MalformedTable(_))
        ));
        assert!(matches!(
            StaticEmbeddings::parse("#dim 2\na\t1 0\n".as_bytes()),
            Err(MetricError::MissingUnkVector)
        ));
    }

    #[test]
    fn recorded_lookup() {
        let jsonl = r#"{"id": 0, "tokens": ["knee", "pain"], "vectors": [[1.0, 0.0], [0.0, 1.0]]}
{"id": "ref-1", "tokens": ["cough"], "vectors": [[0.2, 0.1]]}
"#;
        let rec = RecordedEmbeddings::parse(jsonl.as_bytes()).unwrap();
        assert_eq!(rec.embed("knee, pain.").unwrap().tokens(), ["knee", "pain"]);
        assert_eq!(rec.embed("ref-1").unwrap().tokens(), ["cough"]);
        assert!(matches!(rec.embed("nothing"), Err(MetricError::NotFound(_))));
        let bad = r#"{"id": 1, "tokens": ["a", "b"], "vectors": [[1.0]]}"#;
        assert!(RecordedEmbeddings::parse(bad.as_bytes()).is_err());
    }
}

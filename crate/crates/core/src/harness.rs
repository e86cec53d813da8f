//! Four-scenario evaluation, score bucketing and generation timing.
//!
//! Every reference sentence is completed from its 30% and its 50% prefix.
//! Each of the `n_return` candidates is scored against the full reference,
//! the scores are reduced over either all candidates or the best two, and
//! the reduced value lands in one of five buckets:
//! `[0.95, 1]`, `[0.90, 0.95)`, `[0.80, 0.90)`, `[0.70, 0.80)`, `< 0.70`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError};
use crate::generate::{complete, GenerateError, GenerationConfig};
use crate::metrics::{avg_cosine, bertscore, corpus_perplexity, perplexity, Embedder, MetricError, ScoredSequence};
use crate::preprocess::{tokenize_words, SeedRecord};

pub const THRESHOLDS: [f64; 4] = [0.95, 0.90, 0.80, 0.70];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("expected {expected} candidate scores, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("no recorded candidates for sentence {sentence_id} at {fraction}%")]
    MissingCandidates { sentence_id: usize, fraction: u32 },
    #[error("checkpoint belongs to a different run: {0}")]
    CheckpointMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("evaluation aborted after {completed} of {total} references (checkpoint: {checkpoint:?}): {cause}")]
    Aborted {
        completed: usize,
        total: usize,
        checkpoint: Option<PathBuf>,
        cause: Box<HarnessError>,
    },
    #[error(transparent)]
    Metric(MetricError),
    #[error(transparent)]
    Generate(GenerateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<MetricError> for HarnessError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Unavailable(m) => HarnessError::EmbeddingUnavailable(m),
            other => HarnessError::Metric(other),
        }
    }
}

impl From<GenerateError> for HarnessError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Backend(BackendError::Unavailable(m)) => HarnessError::BackendUnavailable(m),
            other => HarnessError::Generate(other),
        }
    }
}

impl From<BackendError> for HarnessError {
    fn from(e: BackendError) -> Self {
        HarnessError::from(GenerateError::Backend(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeedFraction {
    P30,
    P50,
}

impl SeedFraction {
    pub const ALL: [SeedFraction; 2] = [SeedFraction::P30, SeedFraction::P50];

    pub fn percent(self) -> u32 {
        match self {
            SeedFraction::P30 => 30,
            SeedFraction::P50 => 50,
        }
    }

    pub fn prefix(self, seed: &SeedRecord) -> &str {
        match self {
            SeedFraction::P30 => &seed.seed30,
            SeedFraction::P50 => &seed.seed50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateSet {
    All5,
    Top2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub seed_fraction: SeedFraction,
    pub candidate_set: CandidateSet,
}

impl Scenario {
    /// Column order of the report tables.
    pub const ALL: [Scenario; 4] = [
        Scenario { seed_fraction: SeedFraction::P30, candidate_set: CandidateSet::All5 },
        Scenario { seed_fraction: SeedFraction::P50, candidate_set: CandidateSet::All5 },
        Scenario { seed_fraction: SeedFraction::P30, candidate_set: CandidateSet::Top2 },
        Scenario { seed_fraction: SeedFraction::P50, candidate_set: CandidateSet::Top2 },
    ];

    pub fn label(&self) -> String {
        let set = match self.candidate_set {
            CandidateSet::All5 => "All 5",
            CandidateSet::Top2 => "Top 2",
        };
        format!("{set} {}%", self.seed_fraction.percent())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Min,
    Max,
}

impl std::str::FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "min" => Ok(Aggregate::Min),
            "max" => Ok(Aggregate::Max),
            other => Err(format!("unknown aggregate `{other}` (mean|min|max)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "BERTScore_F")]
    BertScoreF,
    AvgCosine,
}

impl Metric {
    pub fn score(self, reference: &crate::metrics::EmbeddedSentence, candidate: &crate::metrics::EmbeddedSentence) -> Result<f64, MetricError> {
        match self {
            Metric::BertScoreF => Ok(bertscore(reference, candidate)?.f1),
            Metric::AvgCosine => avg_cosine(reference, candidate),
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::BertScoreF => "F_BERT",
            Metric::AvgCosine => "Similarity (Cosine)",
        }
    }
}

/// Counts per bucket: `counts[i]` for `thresholds[i] <= s < thresholds[i-1]`
/// (the first bucket is closed above by nothing), the last for everything
/// below the smallest threshold.
pub fn bucketize(scores: &[f64], thresholds: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; thresholds.len() + 1];
    for &s in scores {
        let bin = thresholds.iter().position(|&t| s >= t).unwrap_or(thresholds.len());
        counts[bin] += 1;
    }
    counts
}

/// Reduces one reference's candidate scores. `All5` uses every score,
/// `Top2` the two largest.
pub fn aggregate_reference(
    scores: &[f64],
    set: CandidateSet,
    aggregate: Aggregate,
    n_return: usize,
) -> Result<f64, HarnessError> {
    if scores.len() != n_return || scores.is_empty() {
        return Err(HarnessError::WrongArity {
            expected: n_return,
            got: scores.len(),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pool = match set {
        CandidateSet::All5 => &sorted[..],
        CandidateSet::Top2 => &sorted[..2.min(sorted.len())],
    };
    Ok(match aggregate {
        // shifted by the first element so identical scores average to themselves exactly
        Aggregate::Mean => pool[0] + pool.iter().map(|x| x - pool[0]).sum::<f64>() / pool.len() as f64,
        Aggregate::Min => pool[pool.len() - 1],
        Aggregate::Max => pool[0],
    })
}

/// Where candidate completions come from.
pub trait CandidateSource: Send + Sync {
    fn candidates(&self, seed: &SeedRecord, fraction: SeedFraction) -> Result<Vec<String>, HarnessError>;

    fn identity(&self) -> String;

    fn generation_config(&self) -> Option<&GenerationConfig> {
        None
    }

    /// Whether per-reference generation time is meaningful for this source.
    fn timed(&self) -> bool {
        false
    }
}

/// Candidates produced live by a backend.
pub struct GeneratedCandidates<'a> {
    pub backend: &'a dyn Backend,
    pub config: GenerationConfig,
}

impl GeneratedCandidates<'_> {
    fn seed_for(&self, seed: &SeedRecord, fraction: SeedFraction) -> Option<u64> {
        self.config
            .rng_seed
            .map(|s| s.wrapping_add((seed.sentence_id as u64) << 1 | (fraction == SeedFraction::P50) as u64))
    }
}

impl CandidateSource for GeneratedCandidates<'_> {
    fn candidates(&self, seed: &SeedRecord, fraction: SeedFraction) -> Result<Vec<String>, HarnessError> {
        let config = GenerationConfig {
            rng_seed: self.seed_for(seed, fraction),
            ..self.config.clone()
        };
        Ok(complete(self.backend, fraction.prefix(seed), &config)?
            .into_iter()
            .map(|c| c.full_text)
            .collect())
    }

    fn identity(&self) -> String {
        self.backend.name().to_string()
    }

    fn generation_config(&self) -> Option<&GenerationConfig> {
        Some(&self.config)
    }

    fn timed(&self) -> bool {
        true
    }
}

/// One line of a recorded-candidate JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCandidateLine {
    pub sentence_id: usize,
    pub fraction: u32,
    pub candidates: Vec<String>,
}

/// Candidates captured from an earlier run of some model.
#[derive(Debug, Clone, Default)]
pub struct RecordedCandidates {
    name: String,
    by_key: HashMap<(usize, u32), Vec<String>>,
}

impl RecordedCandidates {
    pub fn parse<R: BufRead>(name: &str, input: R) -> Result<RecordedCandidates, HarnessError> {
        let mut by_key = HashMap::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordedCandidateLine = serde_json::from_str(&line)?;
            by_key.insert((rec.sentence_id, rec.fraction), rec.candidates);
        }
        Ok(RecordedCandidates {
            name: name.to_string(),
            by_key,
        })
    }

    pub fn load(path: &Path) -> Result<RecordedCandidates, HarnessError> {
        let name = format!("recorded:{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("candidates"));
        RecordedCandidates::parse(&name, std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl CandidateSource for RecordedCandidates {
    fn candidates(&self, seed: &SeedRecord, fraction: SeedFraction) -> Result<Vec<String>, HarnessError> {
        self.by_key
            .get(&(seed.sentence_id, fraction.percent()))
            .cloned()
            .ok_or(HarnessError::MissingCandidates {
                sentence_id: seed.sentence_id,
                fraction: fraction.percent(),
            })
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub samples: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub p95_ms: f64,
    pub hardware: String,
}

impl TimingSummary {
    /// Nearest-rank p95.
    pub fn from_samples(samples_ms: &[f64]) -> Option<TimingSummary> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(TimingSummary {
            samples: n,
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            min_ms: sorted[0],
            p95_ms: sorted[rank - 1],
            hardware: hardware_note(),
        })
    }
}

pub fn hardware_note() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{} ({threads} threads)", std::env::consts::ARCH, std::env::consts::OS)
}

/// Raw per-candidate scores for one reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub sentence_id: usize,
    pub p30: Vec<f64>,
    pub p50: Vec<f64>,
}

impl ReferenceScores {
    pub fn scores(&self, fraction: SeedFraction) -> &[f64] {
        match fraction {
            SeedFraction::P30 => &self.p30,
            SeedFraction::P50 => &self.p50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    #[serde(flatten)]
    pub scores: ReferenceScores,
    /// Aggregated score per scenario, in [`Scenario::ALL`] order.
    pub aggregates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioColumn {
    pub scenario: Scenario,
    pub label: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub candidate_source: String,
    pub generation: Option<GenerationConfig>,
    pub rng_seed: Option<u64>,
    pub embedding: String,
    pub aggregate: Aggregate,
    pub n_return: usize,
    pub scored_against: String,
    pub token_unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub metric: Metric,
    pub thresholds: Vec<f64>,
    pub references: usize,
    pub columns: Vec<ScenarioColumn>,
    pub backend: String,
    pub config: ConfigSnapshot,
    pub timing: Option<TimingSummary>,
    pub per_reference: Vec<ReferenceResult>,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn column(&self, scenario: Scenario) -> Option<&ScenarioColumn> {
        self.columns.iter().find(|c| c.scenario == scenario)
    }

    /// Plain-text table: one row per bucket, columns All-5 30%/50% then
    /// Top-2 30%/50%.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} | {}", self.backend, self.metric.title());
        let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}{:>10}", "", "All 5 CC", "", "Top 2 CC", "");
        let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}{:>10}", "", "30%", "50%", "30%", "50%");
        let labels: Vec<String> = self
            .thresholds
            .iter()
            .map(|t| format!("{t:.2}"))
            .chain(std::iter::once(format!("<{:.2}", self.thresholds.last().copied().unwrap_or(0.0))))
            .collect();
        for (row, label) in labels.iter().enumerate() {
            let _ = write!(out, "{label:<8}");
            for col in &self.columns {
                let _ = write!(out, "{:>10}", col.counts[row]);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<8}", "total");
        for col in &self.columns {
            let _ = write!(out, "{:>10}", col.counts.iter().sum::<usize>());
        }
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub aggregate: Aggregate,
    pub n_return: usize,
    pub thresholds: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            aggregate: Aggregate::Mean,
            n_return: 5,
            thresholds: THRESHOLDS.to_vec(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    metric: Metric,
    source: String,
    embedding: String,
    references: usize,
}

struct Checkpoint {
    path: PathBuf,
    file: std::fs::File,
}

impl Checkpoint {
    /// Opens or resumes a checkpoint and returns results recorded so far.
    fn open(path: &Path, header: &CheckpointHeader) -> Result<(Checkpoint, Vec<ReferenceScores>), HarnessError> {
        let mut done = Vec::new();
        if path.exists() {
            let mut lines = std::io::BufReader::new(std::fs::File::open(path)?).lines();
            if let Some(first) = lines.next().transpose()? {
                let found: CheckpointHeader = serde_json::from_str(&first)?;
                if found.metric != header.metric
                    || found.source != header.source
                    || found.embedding != header.embedding
                    || found.references != header.references
                {
                    return Err(HarnessError::CheckpointMismatch(path.display().to_string()));
                }
                for line in lines {
                    let line = line?;
                    if !line.trim().is_empty() {
                        done.push(serde_json::from_str(&line)?);
                    }
                }
                let file = std::fs::OpenOptions::new().append(true).open(path)?;
                return Ok((Checkpoint { path: path.to_path_buf(), file }, done));
            }
        }
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{}", serde_json::to_string(header)?)?;
        Ok((Checkpoint { path: path.to_path_buf(), file }, done))
    }

    fn append(&mut self, scores: &ReferenceScores) -> Result<(), HarnessError> {
        writeln!(self.file, "{}", serde_json::to_string(scores)?)?;
        self.file.flush()?;
        Ok(())
    }
}

fn score_reference(
    seed: &SeedRecord,
    source: &dyn CandidateSource,
    embedder: &dyn Embedder,
    metric: Metric,
    n_return: usize,
    timings: &mut Vec<f64>,
) -> Result<ReferenceScores, HarnessError> {
    let reference = embedder.embed(&seed.reference)?;
    let mut per_fraction = Vec::with_capacity(2);
    for fraction in SeedFraction::ALL {
        let started = Instant::now();
        let candidates = source.candidates(seed, fraction)?;
        timings.push(started.elapsed().as_secs_f64() * 1e3);
        if candidates.len() != n_return {
            return Err(HarnessError::WrongArity {
                expected: n_return,
                got: candidates.len(),
            });
        }
        let scores = candidates
            .iter()
            .map(|c| Ok(metric.score(&reference, &embedder.embed(c)?)?))
            .collect::<Result<Vec<f64>, HarnessError>>()?;
        per_fraction.push(scores);
    }
    let p50 = per_fraction.pop().unwrap();
    let p30 = per_fraction.pop().unwrap();
    Ok(ReferenceScores {
        sentence_id: seed.sentence_id,
        p30,
        p50,
    })
}

/// Scores every reference under all four scenarios and buckets the result.
///
/// `progress` is called with `(done, total)` after each reference. With a
/// checkpoint path, finished references are appended as they complete and
/// skipped when the same run is resumed.
pub fn run_evaluation(
    seeds: &[SeedRecord],
    source: &dyn CandidateSource,
    embedder: &dyn Embedder,
    metric: Metric,
    options: &EvalOptions,
    progress: &dyn Fn(usize, usize),
) -> Result<ScenarioReport, HarnessError> {
    if options.thresholds.windows(2).any(|w| w[0] <= w[1]) {
        return Err(HarnessError::InvalidArgument("thresholds must be strictly descending".into()));
    }
    let header = CheckpointHeader {
        metric,
        source: source.identity(),
        embedding: embedder.provenance(),
        references: seeds.len(),
    };
    let (mut checkpoint, mut done) = match &options.checkpoint {
        Some(path) => {
            let (c, d) = Checkpoint::open(path, &header)?;
            (Some(c), d)
        }
        None => (None, Vec::new()),
    };
    done.truncate(seeds.len());
    if done.iter().zip(seeds).any(|(d, s)| d.sentence_id != s.sentence_id) {
        return Err(HarnessError::CheckpointMismatch("reference order differs".into()));
    }

    let mut timings = Vec::new();
    for seed in &seeds[done.len()..] {
        let scores = score_reference(seed, source, embedder, metric, options.n_return, &mut timings).map_err(|cause| {
            HarnessError::Aborted {
                completed: done.len(),
                total: seeds.len(),
                checkpoint: checkpoint.as_ref().map(|c| c.path.clone()),
                cause: Box::new(cause),
            }
        })?;
        if let Some(c) = checkpoint.as_mut() {
            c.append(&scores)?;
        }
        done.push(scores);
        progress(done.len(), seeds.len());
    }

    let mut per_reference = Vec::with_capacity(done.len());
    for scores in done {
        let aggregates = Scenario::ALL
            .iter()
            .map(|s| aggregate_reference(scores.scores(s.seed_fraction), s.candidate_set, options.aggregate, options.n_return))
            .collect::<Result<Vec<_>, _>>()?;
        per_reference.push(ReferenceResult { scores, aggregates });
    }
    let columns = Scenario::ALL
        .iter()
        .enumerate()
        .map(|(i, &scenario)| {
            let values: Vec<f64> = per_reference.iter().map(|r| r.aggregates[i]).collect();
            ScenarioColumn {
                scenario,
                label: scenario.label(),
                counts: bucketize(&values, &options.thresholds),
            }
        })
        .collect();

    let generation = source.generation_config().cloned();
    Ok(ScenarioReport {
        metric,
        thresholds: options.thresholds.clone(),
        references: per_reference.len(),
        columns,
        backend: source.identity(),
        config: ConfigSnapshot {
            candidate_source: source.identity(),
            rng_seed: generation.as_ref().and_then(|g| g.rng_seed),
            generation,
            embedding: embedder.provenance(),
            aggregate: options.aggregate,
            n_return: options.n_return,
            scored_against: "full reference sentence".into(),
            token_unit: "as supplied by the embedding provider".into(),
        },
        timing: if source.timed() { TimingSummary::from_samples(&timings) } else { None },
        per_reference,
    })
}

/// Times `repeats` full `complete` calls.
pub fn bench_generation(
    backend: &dyn Backend,
    prefix: &str,
    config: &GenerationConfig,
    repeats: usize,
) -> Result<TimingSummary, HarnessError> {
    if repeats == 0 {
        return Err(HarnessError::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let started = Instant::now();
        complete(backend, prefix, config)?;
        samples.push(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(TimingSummary::from_samples(&samples).expect("repeats >= 1"))
}

/// One row of the perplexity / execution-time table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub model: String,
    pub sentences: usize,
    pub tokens: usize,
    /// Pooled over every scored token.
    pub perplexity: f64,
    pub per_sentence: Vec<f64>,
    pub execution_ms: Option<f64>,
}

impl PerplexityReport {
    pub fn from_scored(model: &str, scored: &[ScoredSequence], execution_ms: Option<f64>) -> Result<PerplexityReport, HarnessError> {
        Ok(PerplexityReport {
            model: model.to_string(),
            sentences: scored.len(),
            tokens: scored.iter().map(|s| s.logprobs.len()).sum(),
            perplexity: corpus_perplexity(scored)?,
            per_sentence: scored.iter().map(perplexity).collect::<Result<_, _>>()?,
            execution_ms,
        })
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Scores every reference sentence with the backend.
pub fn run_perplexity(seeds: &[SeedRecord], backend: &dyn Backend) -> Result<Vec<ScoredSequence>, HarnessError> {
    seeds
        .iter()
        .map(|s| Ok(backend.score_words(&tokenize_words(&s.reference))?))
        .collect()
}

/// Reads recorded `{tokens, logprobs}` JSONL items.
pub fn load_scored(path: &Path) -> Result<Vec<ScoredSequence>, HarnessError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Renders rows as `Model | Perplexity | Execution Time (milliseconds)`.
pub fn render_perplexity_table(rows: &[PerplexityReport]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max("Model".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | {:>10} | {:>14}", "Model", "Perplexity", "Execution Time");
    let _ = writeln!(out, "{:<width$} | {:>10} | {:>14}", "", "", "(milliseconds)");
    for r in rows {
        let time = r.execution_ms.map_or_else(|| "-".to_string(), |t| format!("{t:.2}"));
        let _ = writeln!(out, "{:<width$} | {:>10.2} | {:>14}", r.model, r.perplexity, time);
    }
    out
}

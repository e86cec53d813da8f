//! Corpus preprocessing: history split, sentence segmentation, short-sentence
//! filtering, dataset split, seed prefixes and vocabulary.
//!
//! A chief complaint is cut at its first past-history marker (`PMH`, `HX`, ...)
//! and only the complaint half is kept. That half is split into sentences with
//! a small rule-based segmenter, sentences under four words are discarded, and
//! the survivors are shuffled and partitioned 80/10/10.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{scan_placeholders, CcRecord, IngestManifest};
use crate::vocab::Vocabulary;

pub const HISTORY_MARKERS: [&str; 6] = ["PMH", "PMHX", "HX", "PSHX", "SHX", "FHX"];

pub const ABBREVIATIONS: [&str; 9] = ["pt", "dr", "mr", "mrs", "approx", "abd", "fx", "hx", "s/p"];

pub const MIN_SENTENCE_WORDS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("need at least 10 sentences to split, got {0}")]
    TooFewSentences(usize),
    #[error("malformed seeds file at line {line}: {reason}")]
    MalformedSeeds { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A complaint cut at its first history marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCc {
    pub complaint: String,
    /// Whitespace between the complaint and the marker.
    pub separator: String,
    pub history: Option<String>,
    pub marker: Option<String>,
}

impl SplitCc {
    pub fn reconstruct(&self) -> String {
        match &self.history {
            Some(h) => format!("{}{}{}", self.complaint, self.separator, h),
            None => self.complaint.clone(),
        }
    }
}

static DEFAULT_MARKER_RE: LazyLock<Regex> = LazyLock::new(|| marker_regex(&HISTORY_MARKERS));

fn marker_regex<S: AsRef<str>>(markers: &[S]) -> Regex {
    let mut alts: Vec<String> = markers.iter().map(|m| regex::escape(m.as_ref())).collect();
    // longest first so PMHX wins over PMH at the same offset
    alts.sort_by_key(|m| std::cmp::Reverse(m.len()));
    Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).unwrap()
}

/// Splits at the first word-bounded, case-insensitive history marker.
pub fn split_history(text: &str) -> SplitCc {
    split_at_marker(text, &DEFAULT_MARKER_RE)
}

pub fn split_history_with<S: AsRef<str>>(text: &str, markers: &[S]) -> SplitCc {
    split_at_marker(text, &marker_regex(markers))
}

fn split_at_marker(text: &str, re: &Regex) -> SplitCc {
    match re.find(text) {
        Some(m) => {
            let before = &text[..m.start()];
            let complaint = before.trim_end();
            SplitCc {
                complaint: complaint.to_string(),
                separator: before[complaint.len()..].to_string(),
                history: Some(text[m.start()..].to_string()),
                marker: Some(m.as_str().to_string()),
            }
        }
        None => SplitCc {
            complaint: text.to_string(),
            separator: String::new(),
            history: None,
            marker: None,
        },
    }
}

/// Rule-based sentence splitter.
///
/// Splits on `.`, `;`, `!`, `?` and newlines. A period does not split inside a
/// placeholder, between two digits, or after a single letter or a listed
/// abbreviation.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::new(ABBREVIATIONS)
    }
}

impl Segmenter {
    pub fn new<I, S>(abbreviations: I) -> Segmenter
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Segmenter {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().to_lowercase())
                .collect(),
        }
    }

    fn period_splits(&self, text: &str, at: usize) -> bool {
        let before = &text[..at];
        let after = &text[at + 1..];
        let prev = before.chars().next_back();
        let next = after.chars().next();
        if prev.is_some_and(|c| c.is_ascii_digit()) && next.is_some_and(|c| c.is_ascii_digit()) {
            return false;
        }
        let word_start = before
            .rfind(|c: char| c.is_whitespace())
            .map_or(0, |i| i + before[i..].chars().next().unwrap().len_utf8());
        let word = before[word_start..].trim_start_matches(['(', '"', '\'', '[', '.']);
        let mut chars = word.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_alphabetic() {
                return false;
            }
        }
        let lower = word.to_lowercase();
        !self.abbreviations.contains(&lower)
    }

    pub fn segment(&self, text: &str) -> Vec<String> {
        let placeholders = scan_placeholders(text);
        let mut out = Vec::new();
        let mut start = 0;
        let mut ph = placeholders.iter().peekable();
        for (i, c) in text.char_indices() {
            while ph.peek().is_some_and(|p| p.end <= i) {
                ph.next();
            }
            if ph.peek().is_some_and(|p| p.start <= i && i < p.end) {
                continue;
            }
            let split = match c {
                '\n' | ';' | '!' | '?' => true,
                '.' => self.period_splits(text, i),
                _ => false,
            };
            if split {
                push_segment(&mut out, &text[start..i]);
                start = i + c.len_utf8();
            }
        }
        push_segment(&mut out, &text[start..]);
        out
    }
}

fn push_segment(out: &mut Vec<String>, segment: &str) {
    let trimmed = segment.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

pub fn segment_sentences(text: &str) -> Vec<String> {
    Segmenter::default().segment(text)
}

fn is_detachable(c: char) -> bool {
    matches!(
        c,
        ',' | '.' | ';' | ':' | '!' | '?' | '"' | '\'' | '`' | '(' | ')' | '[' | ']' | '{' | '}' | '-' | '*'
            | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}'
    )
}

/// Splits text into words: whitespace-delimited, with leading and trailing
/// punctuation removed. Placeholders are kept whole and internal symbols
/// (`s/p`, `101.4`, `can't`) are untouched.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let push_plain = |chunk: &str, words: &mut Vec<String>| {
        for raw in chunk.split_whitespace() {
            let w = raw.trim_matches(is_detachable);
            if !w.is_empty() {
                words.push(w.to_string());
            }
        }
    };
    let mut cursor = 0;
    for p in scan_placeholders(text) {
        push_plain(&text[cursor..p.start], &mut words);
        words.push(p.surface);
        cursor = p.end;
    }
    push_plain(&text[cursor..], &mut words);
    words
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub source_id: usize,
    pub words: Vec<String>,
}

impl Sentence {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Keeps sentences with at least four words. Returns the kept sentences
/// (numbered from zero in input order) and the discarded count.
pub fn filter_short<I, S>(sentences: I) -> (Vec<Sentence>, usize)
where
    I: IntoIterator<Item = (usize, S)>,
    S: AsRef<str>,
{
    let mut kept = Vec::new();
    let mut discarded = 0;
    for (source_id, text) in sentences {
        let words = tokenize_words(text.as_ref());
        if words.len() >= MIN_SENTENCE_WORDS {
            kept.push(Sentence {
                id: kept.len(),
                source_id,
                words,
            });
        } else {
            discarded += 1;
        }
    }
    (kept, discarded)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub shuffle_seed: u64,
}

/// Seeded shuffle of `0..n`, then floor(0.8n) train, floor(0.1n) val, rest test.
pub fn split_dataset(n: usize, shuffle_seed: u64) -> Result<DatasetSplit, PreprocessError> {
    if n < 10 {
        return Err(PreprocessError::TooFewSentences(n));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    ids.shuffle(&mut rng);
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(DatasetSplit {
        train: ids,
        val,
        test,
        shuffle_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPair {
    pub sentence_id: usize,
    pub len30: usize,
    pub seed30: Vec<String>,
    pub len50: usize,
    pub seed50: Vec<String>,
}

/// `num / den` rounded half to even.
fn div_round_half_even(num: usize, den: usize) -> usize {
    let (q, r) = (num / den, num % den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    }
}

/// Prefix length for `percent`% of `words`, rounded half to even and clamped
/// to `[1, words - 1]`.
pub fn seed_len(words: usize, percent: usize) -> usize {
    div_round_half_even(words * percent, 100).clamp(1, words.saturating_sub(1).max(1))
}

/// Builds the 30% and 50% prefixes of a sentence.
///
/// Panics if the sentence has fewer than two words; sentences that passed
/// [`filter_short`] always have at least four.
pub fn make_seeds(sentence: &Sentence) -> SeedPair {
    let w = sentence.len();
    assert!(w >= 2, "seed prefixes need at least two words");
    let len30 = seed_len(w, 30);
    let len50 = seed_len(w, 50);
    SeedPair {
        sentence_id: sentence.id,
        len30,
        seed30: sentence.words[..len30].to_vec(),
        len50,
        seed50: sentence.words[..len50].to_vec(),
    }
}

/// One row of `seeds.tsv`: both prefixes plus the full reference sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub sentence_id: usize,
    pub len30: usize,
    pub seed30: String,
    pub len50: usize,
    pub seed50: String,
    pub reference: String,
}

impl SeedRecord {
    pub fn new(pair: &SeedPair, sentence: &Sentence) -> SeedRecord {
        SeedRecord {
            sentence_id: pair.sentence_id,
            len30: pair.len30,
            seed30: pair.seed30.join(" "),
            len50: pair.len50,
            seed50: pair.seed50.join(" "),
            reference: sentence.text(),
        }
    }
}

const SEEDS_HEADER: &str = "sentence_id\tlen30\tseed30\tlen50\tseed50\treference";

pub fn write_seeds<W: Write>(seeds: &[SeedRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SEEDS_HEADER}")?;
    for s in seeds {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.sentence_id, s.len30, s.seed30, s.len50, s.seed50, s.reference
        )?;
    }
    Ok(())
}

pub fn read_seeds<R: BufRead>(input: R) -> Result<Vec<SeedRecord>, PreprocessError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 && line.starts_with("sentence_id") || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| PreprocessError::MalformedSeeds {
            line: i + 1,
            reason: reason.to_string(),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad("expected 6 tab-separated columns"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric id or length"));
        out.push(SeedRecord {
            sentence_id: num(cols[0])?,
            len30: num(cols[1])?,
            seed30: cols[2].to_string(),
            len50: num(cols[3])?,
            seed50: cols[4].to_string(),
            reference: cols[5].to_string(),
        });
    }
    Ok(out)
}

pub fn load_seeds(path: &Path) -> Result<Vec<SeedRecord>, PreprocessError> {
    read_seeds(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Median of a list of counts; the mean of the middle pair for even lengths.
pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub seed: u64,
    pub min_count: usize,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub records: usize,
    pub history_splits: usize,
    pub raw_sentences: usize,
    pub discarded_short: usize,
    pub sentences: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub median_words_train: f64,
    pub median_words_all: f64,
    pub vocab_size: usize,
    pub placeholder_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub seed: u64,
    pub min_count: usize,
    pub segmenter: Segmenter,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            seed: 0,
            min_count: 1,
            segmenter: Segmenter::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub sentences: Vec<Sentence>,
    pub split: DatasetSplit,
    pub seeds: Vec<SeedRecord>,
    pub vocab: Vocabulary,
    pub manifest: PreprocessManifest,
}

impl Preprocessed {
    pub fn sentences_for<'a>(&'a self, ids: &'a [usize]) -> impl Iterator<Item = &'a Sentence> + 'a {
        ids.iter().map(move |&i| &self.sentences[i])
    }

    pub fn train(&self) -> Vec<&Sentence> {
        self.sentences_for(&self.split.train).collect()
    }

    /// Writes `train.txt`, `val.txt`, `test.txt`, `seeds.tsv`, `vocab.txt`
    /// and `manifest.json` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PreprocessError> {
        std::fs::create_dir_all(dir)?;
        for (name, ids) in [
            ("train.txt", &self.split.train),
            ("val.txt", &self.split.val),
            ("test.txt", &self.split.test),
        ] {
            let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            for s in self.sentences_for(ids) {
                writeln!(out, "{}", s.text())?;
            }
            out.flush()?;
        }
        let mut seeds = std::io::BufWriter::new(std::fs::File::create(dir.join("seeds.tsv"))?);
        write_seeds(&self.seeds, &mut seeds)?;
        seeds.flush()?;
        let mut vocab = std::io::BufWriter::new(std::fs::File::create(dir.join("vocab.txt"))?);
        self.vocab.write_to(&mut vocab)?;
        vocab.flush()?;
        let mut manifest = serde_json::to_string_pretty(&self.manifest)?;
        manifest.push('\n');
        std::fs::write(dir.join("manifest.json"), manifest)?;
        Ok(())
    }
}

/// Runs the full preprocessing pipeline over ingested records.
pub fn run_pipeline(
    records: &[CcRecord],
    ingest: &IngestManifest,
    config: &PreprocessConfig,
) -> Result<Preprocessed, PreprocessError> {
    let mut history_splits = 0;
    let mut raw = Vec::new();
    for record in records {
        let split = split_history(&record.text);
        if split.history.is_some() {
            history_splits += 1;
        }
        raw.extend(
            config
                .segmenter
                .segment(&split.complaint)
                .into_iter()
                .map(|s| (record.id, s)),
        );
    }
    let raw_sentences = raw.len();
    let (sentences, discarded_short) = filter_short(raw);
    let split = split_dataset(sentences.len(), config.seed)?;

    let train_words: Vec<&[String]> = split.train.iter().map(|&i| sentences[i].words.as_slice()).collect();
    let vocab = Vocabulary::build(train_words.iter().copied(), config.min_count);
    let seeds = split
        .test
        .iter()
        .map(|&i| SeedRecord::new(&make_seeds(&sentences[i]), &sentences[i]))
        .collect();

    let train_lens: Vec<usize> = train_words.iter().map(|w| w.len()).collect();
    let all_lens: Vec<usize> = sentences.iter().map(Sentence::len).collect();
    let manifest = PreprocessManifest {
        seed: config.seed,
        min_count: config.min_count,
        rows_read: ingest.rows_read,
        rows_dropped: ingest.rows_dropped,
        records: records.len(),
        history_splits,
        raw_sentences,
        discarded_short,
        sentences: sentences.len(),
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        median_words_train: median(&train_lens).unwrap_or(0.0),
        median_words_all: median(&all_lens).unwrap_or(0.0),
        vocab_size: vocab.len(),
        placeholder_counts: ingest.placeholder_counts.clone(),
    };
    Ok(Preprocessed {
        sentences,
        split,
        seeds,
        vocab,
        manifest,
    })
}

/// Reads a one-sentence-per-line file into word lists.
pub fn read_sentence_file(path: &Path) -> Result<Vec<Vec<String>>, PreprocessError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !words.is_empty() {
            out.push(words);
        }
    }
    Ok(out)
}

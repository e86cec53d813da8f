//! Raw chief-complaint corpus ingestion.
//!
//! A corpus file is a TSV or CSV export with a header naming the complaint
//! text column plus the `Predict` and `Consensus` flag columns. Flags are
//! parsed and kept on each record but nothing downstream uses them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("header is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: flag value `{value}` is not one of Y, N, U, -")]
    BadFlag { row: usize, value: String },
    #[error("corpus is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("malformed corpus row: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flag {
    Y,
    N,
    U,
    Unmarked,
}

impl Flag {
    /// Parses a flag cell. Accepts `Y`, `N`, `U` (case-insensitive); `-` and
    /// an empty cell are unmarked.
    pub fn parse(raw: &str) -> Option<Flag> {
        match raw.trim() {
            "Y" | "y" => Some(Flag::Y),
            "N" | "n" => Some(Flag::N),
            "U" | "u" => Some(Flag::U),
            "-" | "" => Some(Flag::Unmarked),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Y => "Y",
            Flag::N => "N",
            Flag::U => "U",
            Flag::Unmarked => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcRecord {
    pub id: usize,
    pub text: String,
    pub predict: Flag,
    pub consensus: Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Tsv,
    Csv,
}

impl CorpusFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            CorpusFormat::Tsv => b'\t',
            CorpusFormat::Csv => b',',
        }
    }

    /// Guesses the format from a file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaceholderKind {
    Time,
    Date,
    Hospital,
    Other(String),
}

impl PlaceholderKind {
    fn from_name(name: &str) -> PlaceholderKind {
        let name = name.trim();
        match name.to_ascii_uppercase().as_str() {
            "TIME" => PlaceholderKind::Time,
            "DATE" => PlaceholderKind::Date,
            "HOSPITAL" => PlaceholderKind::Hospital,
            _ => PlaceholderKind::Other(name.to_string()),
        }
    }
}

impl fmt::Display for PlaceholderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceholderKind::Time => f.write_str("TIME"),
            PlaceholderKind::Date => f.write_str("DATE"),
            PlaceholderKind::Hospital => f.write_str("HOSPITAL"),
            PlaceholderKind::Other(name) => f.write_str(name),
        }
    }
}

/// A de-identification placeholder such as `<<TIME>>`, located in its source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderToken {
    pub kind: PlaceholderKind,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

static PLACEHOLDER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<<[^<>\n]*[^<>\s][^<>\n]*>>").unwrap());

/// Returns every `<<NAME>>` span left to right. An unclosed `<<` is plain text.
pub fn scan_placeholders(text: &str) -> Vec<PlaceholderToken> {
    PLACEHOLDER_RE
        .find_iter(text)
        .map(|m| {
            let surface = m.as_str();
            PlaceholderToken {
                kind: PlaceholderKind::from_name(&surface[2..surface.len() - 2]),
                surface: surface.to_string(),
                start: m.start(),
                end: m.end(),
            }
        })
        .collect()
}

/// Summary written next to preprocessed artifacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub placeholder_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<CcRecord>,
    pub manifest: IngestManifest,
}

impl Corpus {
    /// Appends another corpus, renumbering its records to follow this one.
    pub fn extend(&mut self, other: Corpus) {
        let offset = self.records.len();
        self.records
            .extend(other.records.into_iter().map(|mut r| {
                r.id += offset;
                r
            }));
        self.manifest.rows_read += other.manifest.rows_read;
        self.manifest.rows_dropped += other.manifest.rows_dropped;
        for (k, v) in other.manifest.placeholder_counts {
            *self.manifest.placeholder_counts.entry(k).or_default() += v;
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_corpus(&bytes, format)
}

fn find_column(headers: &csv::StringRecord, needle: &str, name: &'static str) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim().trim_start_matches('\u{feff}').to_lowercase().contains(needle))
        .ok_or(CorpusError::MissingColumn(name))
}

/// Parses corpus bytes. Rows whose complaint is blank are dropped and counted.
pub fn parse_corpus(bytes: &[u8], format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Encoding(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .flexible(true)
        .quoting(format == CorpusFormat::Csv)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Malformed(e.to_string()))?
        .clone();
    let text_col = find_column(&headers, "chief complaint", "chief complaint")?;
    let predict_col = find_column(&headers, "predict", "predict")?;
    let consensus_col = find_column(&headers, "consensus", "consensus")?;

    let mut corpus = Corpus::default();
    for (row, result) in reader.records().enumerate() {
        let record = result.map_err(|e| CorpusError::Malformed(e.to_string()))?;
        corpus.manifest.rows_read += 1;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let flag = |col: usize| {
            Flag::parse(cell(col)).ok_or_else(|| CorpusError::BadFlag {
                row,
                value: cell(col).to_string(),
            })
        };
        let predict = flag(predict_col)?;
        let consensus = flag(consensus_col)?;
        let complaint = cell(text_col);
        if complaint.trim().is_empty() {
            log::warn!("row {row}: empty chief complaint dropped");
            corpus.manifest.rows_dropped += 1;
            continue;
        }
        for p in scan_placeholders(complaint) {
            *corpus.manifest.placeholder_counts.entry(p.kind.to_string()).or_default() += 1;
        }
        corpus.records.push(CcRecord {
            id: corpus.records.len(),
            text: complaint.to_string(),
            predict,
            consensus,
        });
    }
    Ok(corpus)
}

/// Writes records back out in the given format with a canonical header.
pub fn write_corpus<W: std::io::Write>(
    records: &[CcRecord],
    format: CorpusFormat,
    out: W,
) -> Result<(), CorpusError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .quote_style(match format {
            CorpusFormat::Csv => csv::QuoteStyle::Necessary,
            CorpusFormat::Tsv => csv::QuoteStyle::Never,
        })
        .from_writer(out);
    let io = |e: csv::Error| CorpusError::Malformed(e.to_string());
    writer.write_record(["Chief Complaint", "Predict", "Consensus"]).map_err(io)?;
    for r in records {
        writer
            .write_record([r.text.as_str(), r.predict.as_str(), r.consensus.as_str()])
            .map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}

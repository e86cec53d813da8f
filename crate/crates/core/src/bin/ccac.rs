use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cc_autocomplete::backend::{Backend, BackendError};
use cc_autocomplete::corpus::{load_corpus, Corpus, CorpusError, CorpusFormat};
use cc_autocomplete::generate::{build_fewshot_prompt, complete, GenerateError, GenerationConfig, DEFAULT_INSTRUCTION};
use cc_autocomplete::harness::{
    bench_generation, load_scored, render_perplexity_table, run_evaluation, run_perplexity, Aggregate,
    CandidateSource, EvalOptions, GeneratedCandidates, HarnessError, Metric, PerplexityReport, RecordedCandidates,
};
use cc_autocomplete::metrics::{Embedder, MetricError, RecordedEmbeddings, StaticEmbeddings};
use cc_autocomplete::ngram::{NGramModel, NgramError, DEFAULT_DISCOUNT, DEFAULT_ORDER};
use cc_autocomplete::preprocess::{load_seeds, read_sentence_file, run_pipeline, PreprocessConfig, PreprocessError};
use cc_autocomplete::protocol::{EmbedMode, ErrorBody, SuggestCandidate};
use cc_autocomplete::remote::{RemoteBackend, RemoteEmbedder};
use cc_autocomplete::service::{serve, ServiceState};
use cc_autocomplete::vocab::{VocabError, Vocabulary};

const EXIT_FAILURE: u8 = 1;
const EXIT_UNAVAILABLE: u8 = 3;
const EXIT_TOO_FEW_EXAMPLES: u8 = 4;

#[derive(Parser)]
#[command(name = "ccac", version, about = "Chief-complaint autocompletion and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, segment, filter and seed a raw corpus.
    Preprocess {
        /// TSV or CSV export; repeat to concatenate several files.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Train a smoothed n-gram model on a sentence-per-line file.
    TrainNgram {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_DISCOUNT)]
        discount: f64,
        #[arg(long)]
        out: PathBuf,
        /// Use this vocabulary instead of building one from the training file.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Print completions of a prefix as JSON lines.
    Suggest {
        /// Model file or backend URL.
        #[arg(long, env = "CCAC_BACKEND_URL")]
        model: String,
        #[arg(long)]
        prefix: String,
        #[arg(short = 'n', default_value_t = 5)]
        n: usize,
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        top_p: Option<f64>,
        #[arg(long, default_value_t = 5)]
        max_new_words: usize,
    },
    /// Score completions of the seed prefixes against their references.
    Evaluate {
        #[arg(long)]
        seeds: PathBuf,
        /// Model file or backend URL generating live candidates.
        #[arg(long, env = "CCAC_BACKEND_URL")]
        backend: Option<String>,
        /// Recorded candidates (JSONL) instead of a live backend.
        #[arg(long, conflicts_with = "backend")]
        candidates: Option<PathBuf>,
        /// Recorded `{tokens, logprobs}` JSONL for the perplexity metric.
        #[arg(long)]
        logprobs: Option<PathBuf>,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Static table (.tsv), recorded vectors (.jsonl) or embedding URL.
        #[arg(long)]
        embeddings: Option<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::Contextual)]
        embed_mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mean")]
        aggregate: Aggregate,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model label in the perplexity table.
        #[arg(long)]
        label: Option<String>,
        /// Execution time to report alongside recorded logprobs.
        #[arg(long, requires = "logprobs")]
        execution_ms: Option<f64>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, env = "CCAC_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// External backend registered alongside (or instead of) the model.
        #[arg(long, env = "CCAC_BACKEND_URL")]
        backend_url: Option<String>,
        /// Static embedding table served by `/v1/embed` in static mode.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Provider answering `/v1/embed` in contextual mode.
        #[arg(long)]
        embed_url: Option<String>,
        #[arg(long, default_value_t = cc_autocomplete::service::DEFAULT_BATCH_LIMIT)]
        batch_limit: usize,
    },
    /// Time repeated completions of one prefix.
    Bench {
        #[arg(long, env = "CCAC_BACKEND_URL")]
        backend: String,
        #[arg(long)]
        prefix: String,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(short = 'n', default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Assemble a few-shot prompt document.
    Prompt {
        #[arg(long)]
        train: PathBuf,
        #[arg(short = 'k', default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instruction: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Bertscore,
    Cosine,
    Perplexity,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Contextual,
    Static,
}

struct Failure {
    kind: &'static str,
    code: u8,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Failure {
        Failure {
            kind,
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Failure {
        Failure::new("usage", message)
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::new($kind, e.to_string())
            }
        })*
    };
}

failure_from! {
    CorpusError => "corpus",
    PreprocessError => "preprocess",
    NgramError => "model",
    VocabError => "vocabulary",
    MetricError => "metric",
    std::io::Error => "io",
    serde_json::Error => "json",
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unavailable(_) => Failure {
                kind: "backend_unavailable",
                code: EXIT_UNAVAILABLE,
                message: e.to_string(),
            },
            other => Failure::new("backend", other.to_string()),
        }
    }
}

impl From<GenerateError> for Failure {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::TooFewExamples { .. } => Failure {
                kind: "too_few_examples",
                code: EXIT_TOO_FEW_EXAMPLES,
                message: e.to_string(),
            },
            GenerateError::Backend(b) => b.into(),
            other => Failure::new("generate", other.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::BackendUnavailable(_) | HarnessError::EmbeddingUnavailable(_) => EXIT_UNAVAILABLE,
            HarnessError::Aborted { cause, .. }
                if matches!(**cause, HarnessError::BackendUnavailable(_) | HarnessError::EmbeddingUnavailable(_)) =>
            {
                EXIT_UNAVAILABLE
            }
            _ => EXIT_FAILURE,
        };
        Failure {
            kind: "evaluation",
            code,
            message: e.to_string(),
        }
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

fn open_backend(spec: &str) -> Result<Arc<dyn Backend>, Failure> {
    if is_url(spec) {
        Ok(Arc::new(RemoteBackend::connect(spec)?))
    } else {
        Ok(Arc::new(NGramModel::load(Path::new(spec))?))
    }
}

fn open_embedder(spec: &str, mode: ModeArg) -> Result<Box<dyn Embedder>, Failure> {
    if is_url(spec) {
        let mode = match mode {
            ModeArg::Contextual => EmbedMode::Contextual,
            ModeArg::Static => EmbedMode::Static,
        };
        return Ok(Box::new(RemoteEmbedder::new(spec, mode)));
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(Box::new(RecordedEmbeddings::load(path)?))
    } else {
        Ok(Box::new(StaticEmbeddings::load(path)?))
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn print_json_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            seed,
            min_count,
        } => {
            let mut corpus = Corpus::default();
            for path in &input {
                corpus.extend(load_corpus(path, CorpusFormat::from_path(path))?);
            }
            let config = PreprocessConfig {
                seed,
                min_count,
                ..PreprocessConfig::default()
            };
            let result = run_pipeline(&corpus.records, &corpus.manifest, &config)?;
            result.write_artifacts(&out)?;
            print_json_line(&mut std::io::stdout(), &result.manifest)?;
        }
        Command::TrainNgram {
            train,
            order,
            discount,
            out,
            vocab,
            min_count,
        } => {
            let sentences = read_sentence_file(&train)?;
            let vocab = match vocab {
                Some(path) => Vocabulary::load(&path)?,
                None => Vocabulary::build(sentences.iter().map(Vec::as_slice), min_count),
            };
            let model = NGramModel::train(&sentences, vocab, order, discount)?;
            model.save(&out)?;
            log::info!("model {} written to {}", model.model_hash(), out.display());
        }
        Command::Suggest {
            model,
            prefix,
            n,
            greedy,
            seed,
            temperature,
            top_k,
            top_p,
            max_new_words,
        } => {
            let backend = open_backend(&model)?;
            let base = if greedy {
                GenerationConfig::greedy()
            } else {
                GenerationConfig::default()
            };
            let config = GenerationConfig {
                n_return: n,
                temperature,
                top_k: top_k.or(base.top_k),
                top_p: top_p.or(base.top_p),
                max_new_words,
                rng_seed: seed,
                ..base
            };
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for c in complete(backend.as_ref(), &prefix, &config)? {
                print_json_line(&mut out, &SuggestCandidate::from(c))?;
            }
        }
        Command::Evaluate {
            seeds,
            backend,
            candidates,
            logprobs,
            metric,
            embeddings,
            embed_mode,
            out,
            aggregate,
            checkpoint,
            seed,
            label,
            execution_ms,
        } => {
            let seeds = load_seeds(&seeds)?;
            if let MetricArg::Perplexity = metric {
                let (name, scored, ms) = match (&logprobs, &backend) {
                    (Some(path), _) => ("recorded".to_string(), load_scored(path)?, execution_ms),
                    (None, Some(spec)) => {
                        let backend = open_backend(spec)?;
                        let started = Instant::now();
                        let scored = run_perplexity(&seeds, backend.as_ref())?;
                        (backend.name().to_string(), scored, Some(started.elapsed().as_secs_f64() * 1e3))
                    }
                    (None, None) => return Err(Failure::usage("perplexity needs --backend or --logprobs")),
                };
                let report = PerplexityReport::from_scored(label.as_deref().unwrap_or(&name), &scored, ms)?;
                write_output(&out, &report.to_json()?)?;
                print!("{}", render_perplexity_table(&[report]));
                return Ok(());
            }
            let embedder = open_embedder(
                embeddings
                    .as_deref()
                    .ok_or_else(|| Failure::usage("--embeddings is required for this metric"))?,
                embed_mode,
            )?;
            let live;
            let recorded;
            let source: &dyn CandidateSource = match (&candidates, &backend) {
                (Some(path), _) => {
                    recorded = RecordedCandidates::load(path)?;
                    &recorded
                }
                (None, Some(spec)) => {
                    live = open_backend(spec)?;
                    &GeneratedCandidates {
                        backend: live.as_ref(),
                        config: GenerationConfig {
                            rng_seed: Some(seed),
                            ..GenerationConfig::default()
                        },
                    }
                }
                (None, None) => return Err(Failure::usage("evaluate needs --backend or --candidates")),
            };
            let metric = match metric {
                MetricArg::Cosine => Metric::AvgCosine,
                _ => Metric::BertScoreF,
            };
            let options = EvalOptions {
                aggregate,
                checkpoint,
                ..EvalOptions::default()
            };
            let progress = |done: usize, total: usize| {
                if done.is_multiple_of(100) || done == total {
                    log::info!("{done}/{total} references scored");
                }
            };
            let report = run_evaluation(&seeds, source, embedder.as_ref(), metric, &options, &progress)?;
            write_output(&out, &report.to_json()?)?;
            print!("{}", report.render_table());
        }
        Command::Serve {
            model,
            port,
            host,
            backend_url,
            embeddings,
            embed_url,
            batch_limit,
        } => {
            let remote: Option<Arc<dyn Backend>> = match &backend_url {
                Some(url) => Some(Arc::new(RemoteBackend::connect(url)?)),
                None => None,
            };
            let mut state = match (&model, &remote) {
                (Some(path), _) => {
                    let model = NGramModel::load(path)?;
                    let hash = model.model_hash();
                    let mut state = ServiceState::new(Arc::new(model), hash);
                    if let Some(r) = &remote {
                        state = state.with_backend(r.clone(), false);
                    }
                    state
                }
                (None, Some(r)) => ServiceState::new(r.clone(), format!("remote:{}", backend_url.as_deref().unwrap_or(""))),
                (None, None) => return Err(Failure::usage("serve needs --model or --backend-url")),
            };
            if let Some(path) = &embeddings {
                state = state.with_static_embedder(Arc::new(StaticEmbeddings::load(path)?));
            }
            if let Some(url) = &embed_url {
                state = state.with_contextual_embedder(Arc::new(RemoteEmbedder::new(url, EmbedMode::Contextual)));
            }
            let state = Arc::new(state.with_batch_limit(batch_limit));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                log::info!("listening on http://{}", listener.local_addr()?);
                tokio::select! {
                    r = serve(listener, state) => r,
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })?;
        }
        Command::Bench {
            backend,
            prefix,
            repeats,
            n,
            seed,
        } => {
            let backend = open_backend(&backend)?;
            let config = GenerationConfig {
                n_return: n,
                rng_seed: Some(seed),
                ..GenerationConfig::default()
            };
            let timing = bench_generation(backend.as_ref(), &prefix, &config, repeats)?;
            print_json_line(&mut std::io::stdout(), &timing)?;
        }
        Command::Prompt {
            train,
            k,
            seed,
            out,
            instruction,
        } => {
            let examples: Vec<String> = read_sentence_file(&train)?.into_iter().map(|w| w.join(" ")).collect();
            let doc = build_fewshot_prompt(&examples, instruction.as_deref().unwrap_or(DEFAULT_INSTRUCTION), k, seed)?;
            let mut json = serde_json::to_string_pretty(&doc)?;
            json.push('\n');
            write_output(&out, &json)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = ErrorBody {
                error: f.kind.to_string(),
                message: f.message,
            };
            eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
            ExitCode::from(f.code)
        }
    }
}

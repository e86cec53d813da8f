//! Times top-5 completion on the demo trigram model, the way the execution
//! time column is measured.

use std::path::Path;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::generate::GenerationConfig;
use cc_autocomplete::harness::{bench_generation, render_perplexity_table, run_perplexity, PerplexityReport};
use cc_autocomplete::ngram::NGramModel;
use cc_autocomplete::preprocess::{run_pipeline, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv)?;
    let pre = run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig::default())?;
    let train: Vec<Vec<String>> = pre.train().into_iter().map(|s| s.words.clone()).collect();
    let model = NGramModel::train(&train, pre.vocab.clone(), 3, 0.75)?.with_name("Trigram");

    let config = GenerationConfig { rng_seed: Some(0), ..GenerationConfig::default() };
    let timing = bench_generation(&model, "Reports have chills, fever,", &config, 200)?;
    println!("{}", serde_json::to_string_pretty(&timing)?);

    let scored = run_perplexity(&pre.seeds, &model)?;
    let report = PerplexityReport::from_scored("Trigram", &scored, Some(timing.mean_ms))?;
    print!("{}", render_perplexity_table(&[report]));
    Ok(())
}

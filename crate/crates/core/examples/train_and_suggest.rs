//! Trains a trigram model on the demo corpus and completes a prefix, once
//! sampled and once greedily.
//!
//! `cargo run --example train_and_suggest -- "Pt reports left"`

use std::path::Path;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::generate::{complete, GenerationConfig};
use cc_autocomplete::ngram::NGramModel;
use cc_autocomplete::preprocess::{run_pipeline, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "Pt reports left".into());
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv)?;
    let pre = run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig::default())?;
    let train: Vec<Vec<String>> = pre.train().into_iter().map(|s| s.words.clone()).collect();
    let model = NGramModel::train(&train, pre.vocab.clone(), 3, 0.75)?;
    println!("model {} ({} types)", &model.model_hash()[..12], model.vocabulary().len());

    let sampled = GenerationConfig { rng_seed: Some(7), ..GenerationConfig::default() };
    println!("sampled:");
    for c in complete(&model, &prefix, &sampled)? {
        println!("  {:>8.3}  {}  [{:?}]", c.total_logprob, c.full_text, c.stop);
    }
    println!("greedy:");
    let greedy = GenerationConfig { n_return: 1, ..GenerationConfig::greedy() };
    for c in complete(&model, &prefix, &greedy)? {
        println!("  {:>8.3}  {}", c.total_logprob, c.full_text);
    }
    Ok(())
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::ngram::NGramModel;
use cc_autocomplete::preprocess::{run_pipeline, PreprocessConfig, Preprocessed};
use cc_autocomplete::vocab::Vocabulary;

pub fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    crate_dir().join("tests/fixtures").join(rel)
}

pub fn schema(name: &str) -> serde_json::Value {
    let path = crate_dir().join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Panics with every violation listed if `instance` does not match.
pub fn assert_schema(name: &str, instance: &serde_json::Value) {
    let schema = schema(name);
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance}");
}

pub fn words(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

pub fn demo_preprocessed() -> Preprocessed {
    let path = crate_dir().join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv).unwrap();
    run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig { seed: 1, ..Default::default() }).unwrap()
}

/// Trigram model on the demo corpus training split.
pub fn demo_model() -> Arc<NGramModel> {
    let pre = demo_preprocessed();
    let train: Vec<Vec<String>> = pre.train().into_iter().map(|s| s.words.clone()).collect();
    Arc::new(NGramModel::train(&train, pre.vocab, 3, 0.75).unwrap())
}

pub fn toy_model(lines: &[&str], order: usize, discount: f64) -> NGramModel {
    let sentences: Vec<Vec<String>> = lines.iter().map(|l| words(l)).collect();
    let vocab = Vocabulary::build(sentences.iter().map(Vec::as_slice), 1);
    NGramModel::train(&sentences, vocab, order, discount).unwrap()
}

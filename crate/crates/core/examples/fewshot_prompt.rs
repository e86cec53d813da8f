//! Builds a few-shot prompt document from training sentences. Nothing is
//! sent anywhere; the JSON is printed.

use std::path::Path;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::generate::{build_fewshot_prompt, DEFAULT_INSTRUCTION};
use cc_autocomplete::preprocess::{run_pipeline, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv)?;
    let pre = run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig::default())?;
    let examples: Vec<String> = pre.train().into_iter().map(|s| s.text()).collect();

    let doc = build_fewshot_prompt(&examples, DEFAULT_INSTRUCTION, 12, 3)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);

    if let Err(e) = build_fewshot_prompt(&examples, DEFAULT_INSTRUCTION, 9, 3) {
        println!("k = 9 rejected: {e}");
    }
    Ok(())
}

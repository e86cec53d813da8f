//! Runs the preprocessing pipeline over the bundled synthetic corpus and
//! prints the manifest plus a few seed prefixes.
//!
//! `cargo run --example preprocess_corpus [-- OUT_DIR]`

use std::path::Path;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::preprocess::{run_pipeline, split_history, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv)?;

    let split = split_history(&corpus.records[1].text);
    println!("complaint: {:?}", split.complaint);
    println!("history:   {:?}", split.history);

    let out = run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig { seed: 1, ..Default::default() })?;
    println!("{}", serde_json::to_string_pretty(&out.manifest)?);
    for s in out.seeds.iter().take(3) {
        println!("30% {:<28} | 50% {:<36} | {}", s.seed30, s.seed50, s.reference);
    }
    if let Some(dir) = std::env::args().nth(1) {
        out.write_artifacts(Path::new(&dir))?;
        println!("artifacts written to {dir}");
    }
    Ok(())
}

//! Scores the recorded candidates fixture under all four scenarios and prints
//! the bucket tables for both metrics.

use std::path::Path;

use cc_autocomplete::harness::{run_evaluation, EvalOptions, Metric, RecordedCandidates};
use cc_autocomplete::metrics::RecordedEmbeddings;
use cc_autocomplete::preprocess::load_seeds;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval");
    let seeds = load_seeds(&dir.join("seeds.tsv"))?;
    let candidates = RecordedCandidates::load(&dir.join("candidates.jsonl"))?;
    let embeddings = RecordedEmbeddings::load(&dir.join("embeddings.jsonl"))?;
    for metric in [Metric::BertScoreF, Metric::AvgCosine] {
        let report = run_evaluation(&seeds, &candidates, &embeddings, metric, &EvalOptions::default(), &|_, _| {})?;
        println!("{}", report.render_table());
    }
    Ok(())
}

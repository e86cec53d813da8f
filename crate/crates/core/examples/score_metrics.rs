//! Perplexity, BERTScore and averaged-vector cosine on toy inputs, using the
//! bundled static word vectors.

use std::path::Path;

use cc_autocomplete::metrics::{avg_cosine, bertscore, corpus_perplexity, perplexity, Embedder, ScoredSequence, StaticEmbeddings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seq = ScoredSequence {
        tokens: vec!["pain".into(), "x".into(), "<eos>".into()],
        logprobs: vec![0.1f64.ln(), 0.2f64.ln(), 0.4f64.ln()],
    };
    println!("perplexity {:.6}", perplexity(&seq)?);
    let a = ScoredSequence { tokens: vec!["a".into()], logprobs: vec![0.5f64.ln()] };
    let b = ScoredSequence { tokens: vec!["b".into()], logprobs: vec![0.125f64.ln()] };
    println!("pooled perplexity {:.6}", corpus_perplexity(&[a, b])?);

    let table = StaticEmbeddings::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_embeddings.tsv"))?;
    let reference = table.embed("Pt reports left knee pain and swelling since yesterday")?;
    for candidate in [
        "Pt reports left knee pain and swelling since yesterday",
        "Pt reports left knee pain x 2 days",
        "Pt reports fever and chills overnight",
    ] {
        let c = table.embed(candidate)?;
        let bs = bertscore(&reference, &c)?;
        println!(
            "R {:.4} P {:.4} F {:.4} cos {:.4}  {candidate}",
            bs.recall,
            bs.precision,
            bs.f1,
            avg_cosine(&reference, &c)?
        );
    }
    Ok(())
}

//! Starts the HTTP service on an ephemeral port, then talks to it through a
//! remote backend as an external client would.

use std::path::Path;
use std::sync::Arc;

use cc_autocomplete::corpus::{load_corpus, CorpusFormat};
use cc_autocomplete::generate::{complete, GenerationConfig};
use cc_autocomplete::ngram::NGramModel;
use cc_autocomplete::preprocess::{run_pipeline, PreprocessConfig};
use cc_autocomplete::protocol::{SuggestRequest, SuggestResponse};
use cc_autocomplete::remote::RemoteBackend;
use cc_autocomplete::service::{ServerHandle, ServiceState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_cc.tsv");
    let corpus = load_corpus(&path, CorpusFormat::Tsv)?;
    let pre = run_pipeline(&corpus.records, &corpus.manifest, &PreprocessConfig::default())?;
    let train: Vec<Vec<String>> = pre.train().into_iter().map(|s| s.words.clone()).collect();
    let model = Arc::new(NGramModel::train(&train, pre.vocab.clone(), 3, 0.75)?);

    let server = ServerHandle::spawn_local(ServiceState::new(model.clone(), model.model_hash()))?;
    println!("serving on {}", server.url());

    let mut request = SuggestRequest::new("Pt reports left");
    request.seed = Some(1);
    let response: SuggestResponse = ureq::post(&format!("{}/v1/suggest", server.url()))
        .send_json(&request)?
        .into_body()
        .read_json()?;
    for c in &response.candidates {
        println!("{:>8.3}  {}", c.logprob, c.text);
    }

    let remote = RemoteBackend::connect(&server.url())?;
    let config = GenerationConfig { n_return: 1, ..GenerationConfig::greedy() };
    let local = complete(model.as_ref(), "Pt reports left", &config)?;
    let over_http = complete(&remote, "Pt reports left", &config)?;
    println!("greedy local == remote: {}", local == over_http);
    Ok(())
}

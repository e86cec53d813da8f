mod common;

use std::collections::HashMap;

use proptest::prelude::*;

use cc_autocomplete::corpus::{parse_corpus, scan_placeholders, write_corpus, CcRecord, CorpusFormat, Flag, IngestManifest};
use cc_autocomplete::generate::{apply_filters, apply_temperature, argmax, complete, GenerationConfig};
use cc_autocomplete::harness::{aggregate_reference, bucketize, Aggregate, CandidateSet, THRESHOLDS};
use cc_autocomplete::metrics::{avg_cosine, bertscore, corpus_perplexity, perplexity, EmbeddedSentence, ScoredSequence};
use cc_autocomplete::preprocess::{
    make_seeds, run_pipeline, split_dataset, PreprocessConfig, Sentence, HISTORY_MARKERS, MIN_SENTENCE_WORDS,
};
use cc_autocomplete::vocab::{TokenId, Vocabulary, EOS, SOS};

use common::{toy_model, words};

const WORDS: &[&str] = &[
    "pt", "reports", "left", "right", "knee", "pain", "swelling", "since", "yesterday", "fever", "chills", "toe",
    "redness", "x", "2", "days", "denies", "trauma", "<<TIME>>", "Dr.", "approx.", "s/p", "fall",
];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS).prop_map(str::to_string)
}

fn sentence_text(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), min..max).prop_map(|w| w.join(" "))
}

fn complaint() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(sentence_text(1, 9), 1..4),
        prop::option::of((prop::sample::select(&HISTORY_MARKERS[..]), sentence_text(1, 5))),
    )
        .prop_map(|(sentences, history)| {
            let mut text = sentences.join(". ");
            if let Some((marker, rest)) = history {
                text.push_str(&format!(". {marker} {rest}"));
            }
            text
        })
}

fn dist(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, min..max).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn embedded(max_tokens: usize, dim: usize) -> impl Strategy<Value = EmbeddedSentence> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..=max_tokens).prop_filter_map(
        "non-zero vectors",
        |vectors| {
            if vectors.iter().any(|v| v.iter().map(|x| x * x).sum::<f64>() < 1e-6) {
                return None;
            }
            let tokens = (0..vectors.len()).map(|i| format!("t{i}")).collect();
            EmbeddedSentence::new(tokens, vectors).ok()
        },
    )
}

fn records(texts: &[String]) -> Vec<CcRecord> {
    texts
        .iter()
        .enumerate()
        .map(|(id, text)| CcRecord {
            id,
            text: text.clone(),
            predict: Flag::Unmarked,
            consensus: Flag::N,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_load_is_deterministic_and_round_trips(texts in prop::collection::vec(complaint(), 1..20)) {
        for format in [CorpusFormat::Tsv, CorpusFormat::Csv] {
            let mut bytes = Vec::new();
            write_corpus(&records(&texts), format, &mut bytes).unwrap();
            let a = parse_corpus(&bytes, format).unwrap();
            let b = parse_corpus(&bytes, format).unwrap();
            prop_assert_eq!(&a.records, &b.records);
            let got: Vec<&str> = a.records.iter().map(|r| r.text.as_str()).collect();
            let want: Vec<&str> = texts.iter().map(String::as_str).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn csv_quoting_round_trips(text in "[a-z ,\"]{1,30}[a-z]") {
        let mut bytes = Vec::new();
        write_corpus(&records(std::slice::from_ref(&text)), CorpusFormat::Csv, &mut bytes).unwrap();
        let parsed = parse_corpus(&bytes, CorpusFormat::Csv).unwrap();
        prop_assert_eq!(&parsed.records[0].text, &text);
    }

    #[test]
    fn placeholder_spans_increase(text in "([a-z ]{0,5}(<<[A-Z]{1,8}>>)?){0,6}") {
        let found = scan_placeholders(&text);
        for w in found.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for p in &found {
            prop_assert_eq!(&text[p.start..p.end], p.surface.as_str());
        }
    }

    #[test]
    fn pipeline_invariants(texts in prop::collection::vec(complaint(), 10..40), seed in any::<u64>()) {
        let recs = records(&texts);
        let config = PreprocessConfig { seed, ..Default::default() };
        let out = match run_pipeline(&recs, &IngestManifest::default(), &config) {
            Ok(out) => out,
            // too few surviving sentences to split
            Err(_) => return Ok(()),
        };
        for s in &out.sentences {
            prop_assert!(s.words.len() >= MIN_SENTENCE_WORDS);
            let first = s.words[0].to_uppercase();
            prop_assert!(!HISTORY_MARKERS.contains(&first.as_str()));
        }
        let again = run_pipeline(&recs, &IngestManifest::default(), &config).unwrap();
        prop_assert_eq!(&out.split, &again.split);
        prop_assert_eq!(&out.seeds, &again.seeds);
        prop_assert_eq!(
            serde_json::to_string(&out.manifest).unwrap(),
            serde_json::to_string(&again.manifest).unwrap()
        );
    }

    #[test]
    fn split_is_a_partition(n in 1usize..500, seed in any::<u64>()) {
        let split = match split_dataset(n, seed) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        prop_assert_eq!(split.train.len() + split.val.len() + split.test.len(), n);
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn seed_prefix_relations(ws in prop::collection::vec(word(), 4..40)) {
        let s = Sentence { id: 0, source_id: 0, words: ws.clone() };
        let pair = make_seeds(&s);
        prop_assert!(pair.len30 <= pair.len50 && pair.len50 < ws.len());
        prop_assert!(pair.len30 >= 1);
        prop_assert_eq!(&pair.seed30[..], &pair.seed50[..pair.len30]);
        prop_assert_eq!(&pair.seed50[..], &ws[..pair.len50]);
    }

    #[test]
    fn encode_decode_round_trip(corpus in prop::collection::vec(prop::collection::vec(word(), 1..8), 1..6)) {
        let vocab = Vocabulary::build(corpus.iter().map(Vec::as_slice), 1);
        for sentence in &corpus {
            let ids = vocab.encode(sentence, 74).unwrap();
            let decoded = vocab.decode(&ids).unwrap();
            prop_assert_eq!(&decoded, sentence);
        }
    }

    #[test]
    fn ngram_distribution_normalized_and_positive(
        corpus in prop::collection::vec(sentence_text(1, 10), 1..15),
        order in 1usize..5,
        discount in 0.05f64..0.95,
        contexts in prop::collection::vec(prop::collection::vec(0u32..40, 0..6), 1..20),
    ) {
        let lines: Vec<&str> = corpus.iter().map(String::as_str).collect();
        let model = toy_model(&lines, order, discount);
        let v = model.vocabulary().len() as TokenId;
        for ctx in contexts {
            let ctx: Vec<TokenId> = ctx.into_iter().map(|t| t % v).collect();
            let d = model.next_dist(&ctx);
            let sum: f64 = d.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9, "sum {}", sum);
            prop_assert!(d.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn ngram_score_agrees_with_next_dist(
        corpus in prop::collection::vec(sentence_text(1, 10), 1..10),
        probe in prop::collection::vec(word(), 1..8),
        order in 1usize..4,
    ) {
        let lines: Vec<&str> = corpus.iter().map(String::as_str).collect();
        let model = toy_model(&lines, order, 0.75);
        let scored = model.score(&probe);
        let vocab = model.vocabulary();
        let mut ctx = vec![vocab.id(SOS)];
        let mut targets = vocab.ids(&probe);
        targets.push(vocab.id(EOS));
        for (i, &t) in targets.iter().enumerate() {
            let d = model.next_dist(&ctx);
            prop_assert_eq!(scored.logprobs[i], d[t as usize].ln());
            ctx.push(t);
        }
    }

    #[test]
    fn filters_keep_distributions_normalized(
        d in dist(2, 30),
        t in 0.05f64..5.0,
        k in 1usize..40,
        p in 0.01f64..=1.0,
    ) {
        let f = apply_filters(&d, t, Some(k), Some(p));
        prop_assert!(f.iter().all(|&x| x >= 0.0));
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(f.iter().filter(|&&x| x > 0.0).count() <= k);
    }

    #[test]
    fn temperature_keeps_argmax(d in dist(2, 30), t in 0.05f64..5.0) {
        let mut sorted = d.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        prop_assert_eq!(argmax(&apply_temperature(&d, t)), argmax(&d));
    }

    #[test]
    fn candidates_are_well_formed(
        prefix in prop::collection::vec(word(), 1..5),
        seed in any::<u64>(),
        n in 1usize..8,
        budget in 1usize..7,
        do_sample in any::<bool>(),
    ) {
        let model = toy_model(
            &["pt reports left knee pain", "pt reports fever and chills", "right toe pain x 2 days"],
            3,
            0.75,
        );
        let prefix = prefix.join(" ");
        let config = GenerationConfig {
            n_return: n,
            do_sample,
            max_new_words: budget,
            rng_seed: Some(seed),
            ..GenerationConfig::default()
        };
        let out = complete(&model, &prefix, &config).unwrap();
        prop_assert_eq!(out.len(), n);
        for c in &out {
            prop_assert!(c.full_text.starts_with(&prefix));
            prop_assert!(c.completion_words.len() <= budget);
            prop_assert!(c.token_logprobs.iter().all(|&l| l <= 0.0));
            prop_assert!((c.total_logprob - c.token_logprobs.iter().sum::<f64>()).abs() < 1e-12);
        }
        for w in out.windows(2) {
            prop_assert!(w[0].total_logprob >= w[1].total_logprob);
        }
    }

    #[test]
    fn bertscore_duality(x in embedded(6, 5), y in embedded(6, 5)) {
        let xy = bertscore(&x, &y).unwrap();
        let yx = bertscore(&y, &x).unwrap();
        prop_assert_eq!(xy.recall, yx.precision);
        prop_assert_eq!(xy.precision, yx.recall);
    }

    #[test]
    fn avg_cosine_symmetric_and_scale_free(x in embedded(6, 5), y in embedded(6, 5), scale in 0.01f64..100.0) {
        let a = avg_cosine(&x, &y).unwrap();
        prop_assert!((a - avg_cosine(&y, &x).unwrap()).abs() <= 1e-9);
        let scaled = EmbeddedSentence::new(
            x.tokens().to_vec(),
            x.vectors().iter().map(|v| v.iter().map(|c| c * scale).collect()).collect(),
        ).unwrap();
        prop_assert!((a - avg_cosine(&scaled, &y).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn perplexity_permutation_and_pooling(lps in prop::collection::vec(-8.0f64..0.0, 1..30), copies in 1usize..5) {
        let seq = ScoredSequence { tokens: vec!["w".into(); lps.len()], logprobs: lps.clone() };
        let ppl = perplexity(&seq).unwrap();
        let mean = -lps.iter().sum::<f64>() / lps.len() as f64;
        prop_assert!((ppl - mean.exp()).abs() <= 1e-9 * ppl);
        let mut rev = seq.clone();
        rev.logprobs.reverse();
        prop_assert!((perplexity(&rev).unwrap() - ppl).abs() <= 1e-12 * ppl);
        let pooled = corpus_perplexity(&vec![seq; copies]).unwrap();
        prop_assert!((pooled - ppl).abs() <= 1e-12 * ppl);
    }

    #[test]
    fn scenario_laws(scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 1..60)) {
        let mut all5 = Vec::new();
        let mut top2 = Vec::new();
        for s in &scores {
            let a = aggregate_reference(s, CandidateSet::All5, Aggregate::Mean, 5).unwrap();
            let t = aggregate_reference(s, CandidateSet::Top2, Aggregate::Mean, 5).unwrap();
            prop_assert!(t >= a);
            all5.push(a);
            top2.push(t);
        }
        for column in [&all5, &top2] {
            prop_assert_eq!(bucketize(column, &THRESHOLDS).iter().sum::<usize>(), scores.len());
        }
    }

    #[test]
    fn raising_a_score_never_lowers_aggregates(
        s in prop::collection::vec(0.0f64..1.0, 5),
        i in 0usize..5,
        bump in 0.0f64..1.0,
    ) {
        let mut raised = s.clone();
        raised[i] += bump;
        for set in [CandidateSet::All5, CandidateSet::Top2] {
            for agg in [Aggregate::Mean, Aggregate::Min, Aggregate::Max] {
                let before = aggregate_reference(&s, set, agg, 5).unwrap();
                let after = aggregate_reference(&raised, set, agg, 5).unwrap();
                prop_assert!(after >= before - 1e-15);
            }
        }
    }
}

/// Count ratios straight from the framed corpus, highest order only.
fn mle_counts(corpus: &[Vec<String>], order: usize) -> HashMap<Vec<String>, HashMap<String, usize>> {
    let mut counts: HashMap<Vec<String>, HashMap<String, usize>> = HashMap::new();
    for s in corpus {
        let mut framed = vec![SOS.to_string(); order - 1];
        framed.extend(s.iter().cloned());
        framed.push(EOS.to_string());
        for end in order - 1..framed.len() {
            let ctx = framed[end + 1 - order..end].to_vec();
            *counts.entry(ctx).or_default().entry(framed[end].clone()).or_default() += 1;
        }
    }
    counts
}

#[test]
fn mle_limit_matches_count_ratios() {
    let lines = [
        "pt reports left knee pain", "pt reports right knee pain", "pt reports fever", "left toe pain x 2 days",
        "right toe pain x 3 days", "fever and chills since yesterday", "chills and fever since today",
        "pt denies trauma", "pt denies fever", "knee pain since yesterday", "toe pain since today",
        "left knee swelling", "right knee swelling and pain", "pain and swelling x 2 days", "pt reports chills",
        "reports left toe redness", "reports right toe redness", "denies chills", "fever x 1 day",
        "pt reports knee redness and swelling",
    ];
    let corpus: Vec<Vec<String>> = lines.iter().map(|l| words(l)).collect();
    for order in [1, 2, 3] {
        let model = toy_model(&lines, order, 1e-9);
        let vocab = model.vocabulary();
        for (ctx, followers) in mle_counts(&corpus, order) {
            let total: usize = followers.values().sum();
            let mut ids = vec![vocab.id(SOS)];
            ids.extend(vocab.ids(&ctx));
            let d = model.next_dist(&ids);
            for (w, c) in &followers {
                let expected = *c as f64 / total as f64;
                let got = d[vocab.id(w) as usize];
                assert!((got - expected).abs() < 1e-6, "order {order} ctx {ctx:?} {w}: {got} vs {expected}");
            }
        }
    }
}

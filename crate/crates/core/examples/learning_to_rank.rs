//! Feature extraction and coordinate-ascent training of a log-linear
//! re-ranker on a small synthetic benchmark.
//!
//! cargo run --release --example learning_to_rank

use temporafed::config::{Config, Method};
use temporafed::corpus::{Corpus, Document};
use temporafed::ltr::FEATURE_NAMES;
use temporafed::pipeline::{verticals_from, Experiment};
use temporafed::retrieval::Index;
use temporafed::synth::{generate, SynthConfig};

fn main() -> temporafed::Result<()> {
    let bench = generate(&SynthConfig {
        seed: 3,
        n_queries: 8,
        corpus_size: 4_000,
        external_size: 1_500,
        ..SynthConfig::default()
    })?;
    let docs = |r: &[temporafed::corpus::Record]| -> temporafed::Result<Vec<Document>> {
        r.iter().cloned().map(Document::from_record).collect()
    };
    let index = Index::build(&Corpus::new(docs(&bench.corpus)?)?)?;
    let config = Config {
        k: 20,
        seed: 3,
        ..Config::default()
    };
    let verticals = verticals_from(docs(&bench.external)?, config.k, config.seed)?;
    let exp = Experiment::new(config, index, verticals, bench.topics.clone(), Some(bench.qrels.clone()));

    let first = &exp.topics[0];
    let cands = exp.candidate_features(Method::Full, first)?;
    println!("{} candidates for {}; top candidate features:", cands.len(), first.query_id);
    for (name, x) in FEATURE_NAMES.iter().zip(cands[0].1.values()) {
        println!("  {name:<18} {x:>10.4}");
    }

    let model = exp.train(Method::Full)?;
    println!("training MAP by cycle: {:?}", model.trace.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>());
    print!("{}", model.to_text());
    Ok(())
}

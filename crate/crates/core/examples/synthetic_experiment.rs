//! Generates a seeded synthetic benchmark and compares every method on it.
//!
//! cargo run --release --example synthetic_experiment [seed]

use std::time::Instant;

use temporafed::config::{Config, Method};
use temporafed::corpus::{Corpus, Document};
use temporafed::pipeline::{verticals_from, Experiment};
use temporafed::retrieval::Index;
use temporafed::synth::{generate, SynthConfig};

fn main() -> temporafed::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let started = Instant::now();
    let bench = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let docs = |records: &[temporafed::corpus::Record]| -> temporafed::Result<Vec<Document>> {
        records.iter().cloned().map(Document::from_record).collect()
    };
    let index = Index::build(&Corpus::new(docs(&bench.corpus)?)?)?;
    let config = Config {
        k: 40,
        seed,
        ..Config::default()
    };
    let verticals = verticals_from(docs(&bench.external)?, config.k, seed)?;
    let exp = Experiment::new(config, index, verticals, bench.topics.clone(), Some(bench.qrels.clone()));
    println!("{:<10} {:>7} {:>7} {:>7} {:>7}", "method", "MAP", "P30", "Rprec", "EMD");
    for m in Method::ALL {
        let report = exp.evaluate(&exp.run(m)?)?;
        println!(
            "{:<10} {:>7.4} {:>7.4} {:>7.4} {:>7.3}",
            m.name(),
            report.map(),
            report.p30(),
            report.rprec(),
            report.mean_emd()
        );
    }
    println!("elapsed {:.1?}", started.elapsed());
    Ok(())
}

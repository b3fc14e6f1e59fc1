//! File-driven pipeline: write a synthetic benchmark to disk, describe the
//! experiment in a flat config file and run it, as the CLI does.
//!
//! cargo run --release --example config_pipeline

use temporafed::config::{Config, Method};
use temporafed::pipeline::{with_pool, Experiment};
use temporafed::synth::{generate, SynthConfig};
use temporafed::write_atomic;

fn main() -> temporafed::Result<()> {
    let dir = std::env::temp_dir().join("temporafed-config-pipeline");
    generate(&SynthConfig {
        seed: 9,
        n_queries: 6,
        corpus_size: 3_000,
        external_size: 1_000,
        ..SynthConfig::default()
    })?
    .write(&dir)?;

    let text = format!(
        "method = full\nK = 16\nseed = 9\nn_fb = 30\nlambda = 0.6\ncorpus = {d}/corpus.jsonl\nexternal = {d}/external.jsonl\ntopics = {d}/topics.tsv\nqrels = {d}/qrels.txt\n",
        d = dir.display()
    );
    let config = Config::parse(&text, "inline.conf")?;
    print!("{}", config.to_text());

    let exp = Experiment::load(&config)?;
    for method in [Method::LmDir, Method::KdeRank, Method::KdeE, Method::Full] {
        let run = with_pool(|| exp.run(method))??;
        let report = exp.evaluate(&run)?;
        let path = dir.join(format!("{method}.run"));
        write_atomic(&path, run.to_trec().as_bytes())?;
        println!("{method:<9} MAP {:.4} -> {}", report.map(), path.display());
    }
    Ok(())
}

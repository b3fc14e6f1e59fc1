use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use temporafed::config::{Config, Method};
use temporafed::corpus::{ingest_path, IngestOptions};
use temporafed::eval::{evaluate, read_run, RunFile};
use temporafed::ltr::LtrModel;
use temporafed::pipeline::{load_external, load_qrels, load_topics, with_pool, Experiment};
use temporafed::retrieval::Index;
use temporafed::synth::{generate, SynthConfig};
use temporafed::verticals::{build_verticals, cluster_verticals, save_verticals, write_assignment};
use temporafed::{write_atomic, Error, Result};

#[derive(Parser)]
#[command(name = "temporafed", version, about = "Time-aware federated retrieval over short timestamped posts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    topics: Option<PathBuf>,
    #[arg(long, global = true)]
    qrels: Option<PathBuf>,
    /// Main corpus (JSONL, or an index written by `index`).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// External corpus (JSONL, or a directory written by `cluster`).
    #[arg(long, global = true)]
    external: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of verticals.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Run depth.
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Account statistics CSV for filtering the external corpus.
    #[arg(long, global = true)]
    accounts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build an inverted index over the main corpus.
    Index,
    /// Cluster the external corpus into verticals.
    Cluster,
    /// Print per-query vertical weights.
    Select,
    /// Print expanded query models (rm-e or rmt-e, default rmt-e).
    Expand,
    /// Produce a TREC run file for a method.
    Search,
    /// Train a re-ranking model (ltr or full) on all judged topics.
    Train,
    /// Re-rank candidates with a trained model.
    Rerank,
    /// Score a run file against qrels.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// Emit corpus and external temporal relevance curves for one query.
    DumpDensity {
        #[arg(long)]
        query_id: String,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Generate a synthetic benchmark.
    Synth {
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        corpus_size: Option<usize>,
        #[arg(long)]
        external_size: Option<usize>,
        #[arg(long)]
        concentration: Option<f64>,
    },
}

impl Cli {
    fn config(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let set_path = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                *slot = v.clone();
            }
        };
        set_path(&mut c.topics, &self.topics);
        set_path(&mut c.qrels, &self.qrels);
        set_path(&mut c.corpus, &self.corpus);
        set_path(&mut c.external, &self.external);
        set_path(&mut c.out, &self.out);
        set_path(&mut c.model, &self.model);
        set_path(&mut c.accounts, &self.accounts);
        if let Some(m) = self.method {
            c.method = m;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(d) = self.depth {
            c.depth = d;
        }
        c.validate()?;
        Ok(c)
    }
}

fn out_path(c: &Config) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| Error::InvalidParameter("missing --out".into()))
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(c: &Config, text: &str) -> Result<()> {
    match &c.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn trained_method(c: &Config) -> Result<Method> {
    if c.method.needs_training() {
        Ok(c.method)
    } else {
        Err(Error::InvalidParameter(format!("method {} is not trained; use ltr or full", c.method)))
    }
}

fn load_model(c: &Config) -> Result<LtrModel> {
    let p = c.model.as_deref().ok_or_else(|| Error::InvalidParameter("missing --model".into()))?;
    let f = File::open(p).map_err(|e| Error::io(p, e))?;
    LtrModel::from_text(BufReader::new(f), &p.display().to_string())
}

fn report_metrics(exp: &Experiment, run: &RunFile, out: &Path) -> Result<()> {
    if exp.qrels.is_none() {
        return Ok(());
    }
    let report = exp.evaluate(run)?;
    write_atomic(&with_suffix(out, ".metrics.csv"), report.to_csv().as_bytes())?;
    println!("{}\tMAP {:.4}\tP30 {:.4}\tRprec {:.4}", run.tag, report.map(), report.p30(), report.rprec());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.config()?;
    match &cli.command {
        Command::Index => {
            let corpus = c.corpus.as_deref().ok_or_else(|| Error::InvalidParameter("missing --corpus".into()))?;
            let (corpus, report) = ingest_path(corpus, &IngestOptions::default())?;
            log::info!("{report:?}");
            let index = Index::build(&corpus)?;
            let mut buf = Vec::new();
            index.write_json(&mut buf)?;
            write_atomic(out_path(&c)?, &buf)?;
            println!("indexed {} documents, {} terms", index.doc_count(), index.vocabulary_size());
        }
        Command::Cluster => {
            let ext = c.external.as_deref().ok_or_else(|| Error::InvalidParameter("missing --external".into()))?;
            let out = out_path(&c)?;
            let docs = load_external(ext, c.accounts.as_deref())?;
            let assignment = cluster_verticals(&docs, c.k, c.seed)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let mut csv = Vec::new();
            write_assignment(&mut csv, &docs, &assignment).map_err(|e| Error::io(out, e))?;
            write_atomic(&out.join("assignment.csv"), &csv)?;
            let verticals = build_verticals(docs, &assignment)?;
            save_verticals(out, &verticals)?;
            println!("{} verticals", verticals.len());
        }
        Command::Select => {
            let exp = Experiment::load_with(&c, true)?;
            let mut s = String::from("query_id\tvertical_id\tlabel\tmerged_count\tweight\n");
            for t in &exp.topics {
                if let Some(sel) = exp.query_state(t)?.selection {
                    for v in &sel.selected {
                        let label = sel.vertical(&exp.verticals, v.vertical_id).map_or("", |x| x.label.as_str());
                        s.push_str(&format!(
                            "{}\t{}\t{label}\t{}\t{:.6}\n",
                            t.query_id, v.vertical_id, v.merged_count, v.weight
                        ));
                    }
                }
            }
            emit(&c, &s)?;
        }
        Command::Expand => {
            let exp = Experiment::load_with(&c, true)?;
            let time_aware = c.method != Method::RmE;
            let mut s = String::from("query_id\tterm\tweight\n");
            for t in &exp.topics {
                let expanded = exp.expand(&exp.query_state(t)?, time_aware)?;
                for line in expanded.to_tsv().lines() {
                    s.push_str(&format!("{}\t{line}\n", t.query_id));
                }
            }
            emit(&c, &s)?;
        }
        Command::Search => {
            let exp = Experiment::load(&c)?;
            let out = out_path(&c)?;
            let run = with_pool(|| match (&c.model, c.method.needs_training()) {
                (Some(_), true) => exp.rerank_with(c.method, &load_model(&c)?),
                _ => exp.run(c.method),
            })??;
            write_atomic(out, run.to_trec().as_bytes())?;
            report_metrics(&exp, &run, out)?;
        }
        Command::Train => {
            let method = trained_method(&c)?;
            let exp = Experiment::load(&c)?;
            let out = out_path(&c)?;
            let model = with_pool(|| exp.train(method))??;
            write_atomic(out, model.to_text().as_bytes())?;
            write_atomic(&with_suffix(out, ".log.csv"), model.trace_csv().as_bytes())?;
            println!("training MAP {:.4}", model.trace.last().copied().unwrap_or(0.0));
        }
        Command::Rerank => {
            let method = trained_method(&c)?;
            let exp = Experiment::load(&c)?;
            let out = out_path(&c)?;
            let model = load_model(&c)?;
            let run = with_pool(|| exp.rerank_with(method, &model))??;
            write_atomic(out, run.to_trec().as_bytes())?;
            report_metrics(&exp, &run, out)?;
        }
        Command::Evaluate { run } => {
            let f = File::open(run).map_err(|e| Error::io(run, e))?;
            let run = read_run(BufReader::new(f), &run.display().to_string())?;
            let qrels = load_qrels(c.qrels.as_deref().ok_or_else(|| Error::InvalidParameter("missing --qrels".into()))?)?;
            let ids: Option<Vec<String>> = match &c.topics {
                Some(p) => Some(load_topics(p)?.into_iter().map(|t| t.query_id).collect()),
                None => None,
            };
            let index = match &c.corpus {
                Some(p) => {
                    let (corpus, _) = ingest_path(p, &IngestOptions::default())?;
                    Some(Index::build(&corpus)?)
                }
                None => None,
            };
            let ts = |d: &str| index.as_ref().and_then(|i| i.doc_by_id(d).map(|x| i.doc(x).timestamp));
            let ts_ref: Option<&dyn Fn(&str) -> Option<i64>> = index.as_ref().map(|_| &ts as _);
            let report = evaluate(&run, &qrels, ids.as_deref(), ts_ref, c.period)?;
            emit(&c, &report.to_csv())?;
        }
        Command::DumpDensity { query_id, points } => {
            let exp = Experiment::load_with(&c, c.external.is_some())?;
            let topic = exp.topic(query_id)?;
            emit(&c, &exp.dump_density(topic, *points)?)?;
        }
        Command::Synth {
            queries,
            corpus_size,
            external_size,
            concentration,
        } => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                seed: cli.seed.unwrap_or(d.seed),
                n_queries: queries.unwrap_or(d.n_queries),
                corpus_size: corpus_size.unwrap_or(d.corpus_size),
                external_size: external_size.unwrap_or(d.external_size),
                concentration: concentration.unwrap_or(d.concentration),
                ..d
            };
            let bench = generate(&cfg)?;
            let out = out_path(&c)?;
            bench.write(out)?;
            println!(
                "wrote {} main, {} external posts and {} topics to {}",
                bench.corpus.len(),
                bench.external.len(),
                bench.topics.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("temporafed: error: {e}");
            ExitCode::FAILURE
        }
    }
}

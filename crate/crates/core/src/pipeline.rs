//! End-to-end experiment runner: candidate retrieval, temporal feedback,
//! external expansion and learned re-ranking for every configured method.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{Config, Method};
use crate::corpus::{ingest_path, read_account_stats, tokenize, Document, IngestOptions};
use crate::error::{Error, Result};
use crate::eval::{evaluate, read_qrels, read_topics, MetricsReport, Qrels, RunFile, Topic};
use crate::feedback::{
    corpus_feedback_for, interpolate_query, query_mle, relevance_model_external, time_based_relevance_model,
    unexpanded, ExpandedQuery,
};
use crate::ltr::{
    extract_query_features, rerank, train_coordinate_ascent, FeatureParams, FeatureVector, LtrModel, TrainingQuery,
    TrainingSet, FEATURE_NAMES, NUM_FEATURES,
};
use crate::retrieval::{search, Hit, Index, QueryModel, ScoredList, Scorer};
use crate::temporal::{TemporalDensity, WeightScheme, DENSITY_FLOOR};
use crate::verticals::{
    build_verticals, cluster_verticals, load_verticals, select_verticals, Vertical, VerticalSelection,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "TEMPORAFED_THREADS";

/// Runs `f` on a pool sized by [`THREADS_ENV`] (default: rayon's choice).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(pool.install(f))
}

/// Feature columns used by a trained method.
pub fn feature_set(method: Method) -> Vec<usize> {
    match method {
        Method::Ltr => (0..NUM_FEATURES).filter(|&i| i != 3 && i != 4).collect(),
        _ => (0..NUM_FEATURES).collect(),
    }
}

fn project(fv: FeatureVector, columns: &[usize]) -> FeatureVector {
    if columns.len() == fv.0.len() {
        return fv;
    }
    FeatureVector(columns.iter().map(|&i| fv.0[i]).collect())
}

/// Clusters external documents into verticals.
pub fn verticals_from(docs: Vec<Document>, k: usize, seed: u64) -> Result<Vec<Vertical>> {
    let assignment = cluster_verticals(&docs, k, seed)?;
    build_verticals(docs, &assignment)
}

/// Verticals from a directory written by `save_verticals`, or clustered
/// from an external JSONL collection.
pub fn external_verticals(path: &Path, k: usize, seed: u64, accounts: Option<&Path>) -> Result<Vec<Vertical>> {
    if path.is_dir() {
        load_verticals(path)
    } else {
        verticals_from(load_external(path, accounts)?, k, seed)
    }
}

pub struct Experiment {
    pub config: Config,
    pub index: Index,
    pub verticals: Vec<Vertical>,
    pub topics: Vec<Topic>,
    pub qrels: Option<Qrels>,
}

/// Per-query intermediate products.
#[derive(Debug, Clone)]
pub struct QueryState {
    pub topic: Topic,
    pub terms: Vec<String>,
    pub selection: Option<VerticalSelection>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("missing --{what}")))
}

pub fn load_topics(path: &Path) -> Result<Vec<Topic>> {
    read_topics(open(path)?, &path.display().to_string())
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    read_qrels(open(path)?, &path.display().to_string())
}

/// Reads and filters an external collection, optionally with account stats.
pub fn load_external(path: &Path, accounts: Option<&Path>) -> Result<Vec<Document>> {
    let stats = match accounts {
        Some(a) => Some(read_account_stats(open(a)?, &a.display().to_string())?),
        None => None,
    };
    let opts = IngestOptions {
        accounts: stats.as_ref(),
        ..IngestOptions::default()
    };
    let (corpus, report) = ingest_path(path, &opts)?;
    log::info!("{}: {report:?}", path.display());
    Ok(corpus.into_documents())
}

impl Experiment {
    pub fn new(config: Config, index: Index, verticals: Vec<Vertical>, topics: Vec<Topic>, qrels: Option<Qrels>) -> Self {
        Experiment {
            config,
            index,
            verticals,
            topics,
            qrels,
        }
    }

    /// Loads every input named by the config. The external corpus is only
    /// read and clustered when the method needs it.
    pub fn load(config: &Config) -> Result<Self> {
        Self::load_with(config, config.method.needs_external())
    }

    /// As [`load`](Self::load); `external` forces verticals to be built.
    pub fn load_with(config: &Config, external: bool) -> Result<Self> {
        config.validate()?;
        let corpus_path = required(&config.corpus, "corpus")?;
        let index = if corpus_path.extension().is_some_and(|e| e == "json") {
            Index::read_json(open(corpus_path)?)?
        } else {
            let (corpus, report) = ingest_path(corpus_path, &IngestOptions::default())?;
            log::info!("{}: {report:?}", corpus_path.display());
            Index::build(&corpus)?
        };
        let topics = load_topics(required(&config.topics, "topics")?)?;
        let qrels = config.qrels.as_deref().map(load_qrels).transpose()?;
        let verticals = match (&config.external, external) {
            (Some(p), true) => external_verticals(p, config.k, config.seed, config.accounts.as_deref())?,
            (None, true) => return Err(Error::InvalidParameter("missing --external".into())),
            _ => Vec::new(),
        };
        Ok(Experiment::new(config.clone(), index, verticals, topics, qrels))
    }

    fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            mu: self.config.mu,
            k1: self.config.bm25_k1,
            b: self.config.bm25_b,
        }
    }

    fn lmdir(&self) -> Scorer {
        Scorer::LmDirichlet { mu: self.config.mu }
    }

    pub fn topic(&self, query_id: &str) -> Result<&Topic> {
        self.topics
            .iter()
            .find(|t| t.query_id == query_id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown query {query_id}")))
    }

    /// Tokenizes the topic and runs vertical selection when verticals exist.
    pub fn query_state(&self, topic: &Topic) -> Result<QueryState> {
        let terms = tokenize(&topic.text);
        let selection = if self.verticals.is_empty() {
            None
        } else {
            let q = QueryModel::from_terms(&terms);
            match select_verticals(&self.verticals, &topic.query_id, &q, &self.config.selection(), topic.query_time) {
                Ok(s) => Some(s),
                Err(Error::EmptySelection(_)) => {
                    log::warn!("query {}: no vertical matches", topic.query_id);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        Ok(QueryState {
            topic: topic.clone(),
            terms,
            selection,
        })
    }

    /// External expansion, time-aware or not; the original query when no
    /// vertical was selected.
    pub fn expand(&self, state: &QueryState, time_aware: bool) -> Result<ExpandedQuery> {
        let Some(sel) = &state.selection else {
            return Ok(unexpanded(&state.terms));
        };
        let rm = if time_aware {
            time_based_relevance_model(&self.verticals, sel, self.config.n_terms)?
        } else {
            relevance_model_external(&self.verticals, sel, self.config.n_terms)?
        };
        interpolate_query(&query_mle(&state.terms), &rm, self.config.lambda)
    }

    fn corpus_density(&self, query: &QueryModel, scheme: WeightScheme, query_time: i64) -> Option<TemporalDensity> {
        let c = &self.config;
        match corpus_feedback_for(&self.index, query, c.n_fb, scheme, query_time, c.period, c.mu) {
            Ok(fb) => Some(fb.density),
            Err(e) => {
                log::warn!("corpus temporal feedback unavailable: {e}");
                None
            }
        }
    }

    fn rescored(&self, candidates: ScoredList, prior: impl Fn(i64) -> f64) -> ScoredList {
        let hits = candidates
            .entries
            .into_iter()
            .map(|h| {
                let t = self.index.doc(h.doc).timestamp;
                Hit {
                    score: h.score + prior(t).max(DENSITY_FLOOR).ln(),
                    ..h
                }
            })
            .collect();
        ScoredList::from_hits(candidates.query_id, hits, self.config.depth)
    }

    /// Ranked list for one query under an untrained method.
    pub fn rank_untrained(&self, method: Method, topic: &Topic) -> Result<ScoredList> {
        let c = &self.config;
        let qid = topic.query_id.as_str();
        let qt = topic.query_time;
        let terms = tokenize(&topic.text);
        let q = QueryModel::from_terms(&terms);
        Ok(match method {
            Method::LmDir => search(&self.index, qid, &q, c.lexical_scorer(), c.depth, qt),
            Method::Recency => search(
                &self.index,
                qid,
                &q,
                Scorer::Recency {
                    mu: c.mu,
                    rate: c.recency_rate,
                },
                c.depth,
                qt,
            ),
            Method::KdeScore | Method::KdeRank => {
                let scheme = if method == Method::KdeScore {
                    WeightScheme::Score
                } else {
                    WeightScheme::Rank
                };
                let candidates = search(&self.index, qid, &q, self.lmdir(), c.depth, qt);
                match self.corpus_density(&q, scheme, qt) {
                    Some(f) => self.rescored(candidates, |t| f.eval(t as f64)),
                    None => candidates,
                }
            }
            Method::KdeE => {
                let state = self.query_state(topic)?;
                let candidates = search(&self.index, qid, &q, self.lmdir(), c.depth, qt);
                match &state.selection {
                    Some(sel) => self.rescored(candidates, |t| sel.density_at(t as f64)),
                    None => candidates,
                }
            }
            Method::RmE | Method::RmtE => {
                let state = self.query_state(topic)?;
                let expanded = self.expand(&state, method == Method::RmtE)?;
                search(&self.index, qid, &expanded.query_model(), self.lmdir(), c.depth, qt)
            }
            Method::Ltr | Method::Full => {
                return Err(Error::InvalidParameter(format!("method {method} needs a trained model")))
            }
        })
    }

    /// Candidates and their feature vectors for a trained method.
    pub fn candidate_features(&self, method: Method, topic: &Topic) -> Result<Vec<(Hit, FeatureVector)>> {
        let c = &self.config;
        let qid = topic.query_id.as_str();
        let qt = topic.query_time;
        let (query, corpus_density, selection) = match method {
            Method::Full => {
                let state = self.query_state(topic)?;
                let q = self.expand(&state, true)?.query_model();
                let f = self.corpus_density(&q, c.kde_scheme, qt);
                (q, f, state.selection)
            }
            _ => (QueryModel::from_terms(&tokenize(&topic.text)), None, None),
        };
        let candidates = search(&self.index, qid, &query, self.lmdir(), c.depth, qt);
        let features = extract_query_features(
            &self.index,
            &candidates,
            &query,
            &self.feature_params(),
            corpus_density.as_ref(),
            selection.as_ref(),
        );
        let columns = feature_set(method);
        Ok(candidates
            .entries
            .into_iter()
            .zip(features)
            .map(|(h, f)| (h, project(f, &columns)))
            .collect())
    }

    fn qrels(&self) -> Result<&Qrels> {
        self.qrels
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("training needs --qrels".into()))
    }

    fn training_query(&self, topic: &Topic, cands: &[(Hit, FeatureVector)]) -> Result<Option<TrainingQuery>> {
        let qrels = self.qrels()?;
        let r = qrels.num_relevant(&topic.query_id);
        if r == 0 {
            return Ok(None);
        }
        Ok(Some(TrainingQuery {
            query_id: topic.query_id.clone(),
            doc_ids: cands.iter().map(|(h, _)| h.doc_id.clone()).collect(),
            features: cands.iter().map(|(_, f)| f.clone()).collect(),
            labels: cands
                .iter()
                .map(|(h, _)| qrels.grade(&topic.query_id, &h.doc_id).unwrap_or(0))
                .collect(),
            num_relevant: r,
        }))
    }

    fn all_candidates(&self, method: Method) -> Result<Vec<Vec<(Hit, FeatureVector)>>> {
        self.topics
            .par_iter()
            .map(|t| self.candidate_features(method, t))
            .collect()
    }

    fn train_on(&self, method: Method, cands: &[Vec<(Hit, FeatureVector)>], keep: impl Fn(usize) -> bool) -> Result<LtrModel> {
        let mut set = TrainingSet::default();
        for (i, (t, c)) in self.topics.iter().zip(cands).enumerate() {
            if keep(i) {
                set.queries.extend(self.training_query(t, c)?);
            }
        }
        let mut model = train_coordinate_ascent(&set, &self.config.coordinate_ascent())?;
        model.names = feature_set(method).iter().map(|&i| FEATURE_NAMES[i].to_string()).collect();
        Ok(model)
    }

    /// Trains a model for `method` on every judged topic.
    pub fn train(&self, method: Method) -> Result<LtrModel> {
        let cands = self.all_candidates(method)?;
        self.train_on(method, &cands, |_| true)
    }

    /// Applies a trained model to every topic.
    pub fn rerank_with(&self, method: Method, model: &LtrModel) -> Result<RunFile> {
        let cands = self.all_candidates(method)?;
        let mut run = RunFile::new(run_tag(method));
        for (t, c) in self.topics.iter().zip(&cands) {
            push(&mut run, rerank(model, &t.query_id, c)?);
        }
        Ok(run)
    }

    /// Runs `method` over every topic. Trained methods use `folds`-fold
    /// cross-validation over topics in file order (topic i lands in fold
    /// i mod folds).
    pub fn run(&self, method: Method) -> Result<RunFile> {
        let mut run = RunFile::new(run_tag(method));
        if !method.needs_training() {
            let lists: Vec<ScoredList> = self
                .topics
                .par_iter()
                .map(|t| self.rank_untrained(method, t))
                .collect::<Result<_>>()?;
            lists.into_iter().for_each(|l| push(&mut run, l));
            return Ok(run);
        }
        let folds = self.config.folds;
        let cands = self.all_candidates(method)?;
        let models: Vec<LtrModel> = (0..folds)
            .map(|f| self.train_on(method, &cands, |i| folds == 1 || i % folds != f))
            .collect::<Result<_>>()?;
        for (i, (t, c)) in self.topics.iter().zip(&cands).enumerate() {
            push(&mut run, rerank(&models[i % folds], &t.query_id, c)?);
        }
        Ok(run)
    }

    pub fn timestamp_of(&self, doc_id: &str) -> Option<i64> {
        self.index.doc_by_id(doc_id).map(|d| self.index.doc(d).timestamp)
    }

    /// Metrics over every topic with judgments, EMD included.
    pub fn evaluate(&self, run: &RunFile) -> Result<MetricsReport> {
        let qrels = self.qrels()?;
        let ids: Vec<String> = self.topics.iter().map(|t| t.query_id.clone()).collect();
        let ts = |d: &str| self.timestamp_of(d);
        evaluate(run, qrels, Some(&ids), Some(&ts), self.config.period)
    }

    /// CSV of corpus and external temporal relevance on a uniform grid.
    pub fn dump_density(&self, topic: &Topic, points: usize) -> Result<String> {
        let state = self.query_state(topic)?;
        let q = QueryModel::from_terms(&state.terms);
        let corpus = self.corpus_density(&q, self.config.kde_scheme, topic.query_time);
        let (lo, hi) = self
            .index
            .docs()
            .iter()
            .fold((i64::MAX, i64::MIN), |(lo, hi), d| (lo.min(d.timestamp), hi.max(d.timestamp)));
        let hi = hi.min(topic.query_time);
        let mut out = String::from("timestamp,corpus,external\n");
        let n = points.max(2);
        for i in 0..n {
            let t = lo as f64 + (hi - lo) as f64 * i as f64 / (n - 1) as f64;
            let c = corpus.as_ref().map_or(0.0, |f| f.eval(t));
            let e = state.selection.as_ref().map_or(0.0, |s| s.density_at(t));
            out.push_str(&format!("{},{c:.6e},{e:.6e}\n", t.round() as i64));
        }
        Ok(out)
    }
}

pub fn run_tag(method: Method) -> String {
    format!("temporafed-{method}")
}

fn push(run: &mut RunFile, list: ScoredList) {
    let qid = list.query_id.clone();
    run.push(&qid, list.entries.into_iter().map(|h| (h.doc_id, h.score)));
}

/// Mean AP per method over the same topics, for quick comparisons.
pub fn compare(exp: &Experiment, methods: &[Method]) -> Result<HashMap<Method, MetricsReport>> {
    methods
        .iter()
        .map(|&m| Ok((m, exp.evaluate(&exp.run(m)?)?)))
        .collect()
}

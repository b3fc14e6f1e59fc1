//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feedback::{DEFAULT_LAMBDA, DEFAULT_N_TERMS};
use crate::ltr::CoordinateAscentConfig;
use crate::retrieval::{Scorer, DEFAULT_BM25_B, DEFAULT_BM25_K1, DEFAULT_MU, DEFAULT_RECENCY_RATE};
use crate::temporal::{WeightScheme, DEFAULT_PERIOD};
use crate::verticals::{SelectionParams, DEFAULT_K, DEFAULT_K_MERGE, DEFAULT_N_FB, DEFAULT_V_SEL};

/// Retrieval systems that can be run end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    LmDir,
    Recency,
    KdeScore,
    KdeRank,
    Ltr,
    RmE,
    RmtE,
    KdeE,
    Full,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::LmDir,
        Method::Recency,
        Method::KdeScore,
        Method::KdeRank,
        Method::Ltr,
        Method::RmE,
        Method::RmtE,
        Method::KdeE,
        Method::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LmDir => "lmdir",
            Method::Recency => "recency",
            Method::KdeScore => "kde-score",
            Method::KdeRank => "kde-rank",
            Method::Ltr => "ltr",
            Method::RmE => "rm-e",
            Method::RmtE => "rmt-e",
            Method::KdeE => "kde-e",
            Method::Full => "full",
        }
    }

    pub fn needs_external(self) -> bool {
        matches!(self, Method::RmE | Method::RmtE | Method::KdeE | Method::Full)
    }

    pub fn needs_training(self) -> bool {
        matches!(self, Method::Ltr | Method::Full)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Lexical scorer used by the `lmdir` method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScorerKind {
    #[default]
    Lm,
    Bm25,
    Idf,
    Recency,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Lm => "lm",
            ScorerKind::Bm25 => "bm25",
            ScorerKind::Idf => "idf",
            ScorerKind::Recency => "recency",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ScorerKind::Lm, ScorerKind::Bm25, ScorerKind::Idf, ScorerKind::Recency]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scorer {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub method: Method,
    pub scorer: ScorerKind,
    pub mu: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub recency_rate: f64,
    /// Number of verticals (k-means clusters).
    pub k: usize,
    pub v_sel: usize,
    pub k_merge: usize,
    pub n_fb: usize,
    pub kde_scheme: WeightScheme,
    pub lambda: f64,
    pub n_terms: usize,
    pub depth: usize,
    pub seed: u64,
    pub period: i64,
    /// Cross-validation folds for trained methods; 1 trains and tests on
    /// every query.
    pub folds: usize,
    pub ca_restarts: usize,
    pub ca_max_iters: usize,
    pub ca_tolerance: f64,
    pub corpus: Option<PathBuf>,
    pub external: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub accounts: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            method: Method::LmDir,
            scorer: ScorerKind::Lm,
            mu: DEFAULT_MU,
            bm25_k1: DEFAULT_BM25_K1,
            bm25_b: DEFAULT_BM25_B,
            recency_rate: DEFAULT_RECENCY_RATE,
            k: DEFAULT_K,
            v_sel: DEFAULT_V_SEL,
            k_merge: DEFAULT_K_MERGE,
            n_fb: DEFAULT_N_FB,
            kde_scheme: WeightScheme::Rank,
            lambda: DEFAULT_LAMBDA,
            n_terms: DEFAULT_N_TERMS,
            depth: 1000,
            seed: 0,
            period: DEFAULT_PERIOD,
            folds: 2,
            ca_restarts: 3,
            ca_max_iters: 25,
            ca_tolerance: 1e-5,
            corpus: None,
            external: None,
            topics: None,
            qrels: None,
            out: None,
            model: None,
            accounts: None,
        }
    }
}

/// Documented configuration keys.
pub const KEYS: &[&str] = &[
    "method",
    "scorer",
    "mu",
    "bm25.k1",
    "bm25.b",
    "recency.rate",
    "K",
    "v_sel",
    "k_merge",
    "n_fb",
    "kde.scheme",
    "lambda",
    "n_terms",
    "depth",
    "seed",
    "period",
    "train.folds",
    "ca.restarts",
    "ca.max_iters",
    "ca.tolerance",
    "corpus",
    "external",
    "topics",
    "qrels",
    "out",
    "model",
    "accounts",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value {value:?} for {key}")))
}

impl Config {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "method" => self.method = v.parse()?,
            "scorer" => self.scorer = v.parse()?,
            "mu" => self.mu = parse_value(key, v)?,
            "bm25.k1" => self.bm25_k1 = parse_value(key, v)?,
            "bm25.b" => self.bm25_b = parse_value(key, v)?,
            "recency.rate" => self.recency_rate = parse_value(key, v)?,
            "K" => self.k = parse_value(key, v)?,
            "v_sel" => self.v_sel = parse_value(key, v)?,
            "k_merge" => self.k_merge = parse_value(key, v)?,
            "n_fb" => self.n_fb = parse_value(key, v)?,
            "kde.scheme" => self.kde_scheme = v.parse()?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "n_terms" => self.n_terms = parse_value(key, v)?,
            "depth" => self.depth = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "period" => self.period = parse_value(key, v)?,
            "train.folds" => self.folds = parse_value(key, v)?,
            "ca.restarts" => self.ca_restarts = parse_value(key, v)?,
            "ca.max_iters" => self.ca_max_iters = parse_value(key, v)?,
            "ca.tolerance" => self.ca_tolerance = parse_value(key, v)?,
            "corpus" => self.corpus = Some(v.into()),
            "external" => self.external = Some(v.into()),
            "topics" => self.topics = Some(v.into()),
            "qrels" => self.qrels = Some(v.into()),
            "out" => self.out = Some(v.into()),
            "model" => self.model = Some(v.into()),
            "accounts" => self.accounts = Some(v.into()),
            _ => return Err(Error::InvalidParameter(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text; `#` starts a comment line.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected key = value"))?;
            cfg.set(k.trim(), v).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.mu <= 0.0 {
            return bad("mu must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.k == 0 || self.v_sel == 0 || self.n_fb == 0 || self.n_terms == 0 || self.depth == 0 {
            return bad("K, v_sel, n_fb, n_terms and depth must be positive");
        }
        if self.k_merge < self.v_sel {
            return bad("k_merge must be at least v_sel");
        }
        if self.period <= 0 {
            return bad("period must be positive");
        }
        if self.folds == 0 {
            return bad("train.folds must be at least 1");
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionParams {
        SelectionParams {
            v_sel: self.v_sel,
            k_merge: self.k_merge,
            n_fb: self.n_fb,
            mu: self.mu,
            scheme: self.kde_scheme,
            period: self.period,
        }
    }

    /// The configured lexical scorer with its parameters.
    pub fn lexical_scorer(&self) -> Scorer {
        match self.scorer {
            ScorerKind::Lm => Scorer::LmDirichlet { mu: self.mu },
            ScorerKind::Bm25 => Scorer::Bm25 {
                k1: self.bm25_k1,
                b: self.bm25_b,
            },
            ScorerKind::Idf => Scorer::Idf,
            ScorerKind::Recency => Scorer::Recency {
                mu: self.mu,
                rate: self.recency_rate,
            },
        }
    }

    pub fn coordinate_ascent(&self) -> CoordinateAscentConfig {
        CoordinateAscentConfig {
            restarts: self.ca_restarts,
            max_iters: self.ca_max_iters,
            tolerance: self.ca_tolerance,
            seed: self.seed,
            ..CoordinateAscentConfig::default()
        }
    }

    /// Canonical `key = value` rendering of every set key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("method", self.method.to_string());
        kv("scorer", self.scorer.to_string());
        kv("mu", self.mu.to_string());
        kv("bm25.k1", self.bm25_k1.to_string());
        kv("bm25.b", self.bm25_b.to_string());
        kv("recency.rate", self.recency_rate.to_string());
        kv("K", self.k.to_string());
        kv("v_sel", self.v_sel.to_string());
        kv("k_merge", self.k_merge.to_string());
        kv("n_fb", self.n_fb.to_string());
        kv("kde.scheme", self.kde_scheme.to_string());
        kv("lambda", self.lambda.to_string());
        kv("n_terms", self.n_terms.to_string());
        kv("depth", self.depth.to_string());
        kv("seed", self.seed.to_string());
        kv("period", self.period.to_string());
        kv("train.folds", self.folds.to_string());
        kv("ca.restarts", self.ca_restarts.to_string());
        kv("ca.max_iters", self.ca_max_iters.to_string());
        kv("ca.tolerance", self.ca_tolerance.to_string());
        let paths = [
            ("corpus", &self.corpus),
            ("external", &self.external),
            ("topics", &self.topics),
            ("qrels", &self.qrels),
            ("out", &self.out),
            ("model", &self.model),
            ("accounts", &self.accounts),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        s
    }
}

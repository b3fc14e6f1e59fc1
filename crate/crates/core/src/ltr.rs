//! Log-linear re-ranking model over lexical, temporal and metadata features,
//! trained by cyclic coordinate ascent on training MAP.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::retrieval::{Hit, Index, QueryModel, ScoredList, DEFAULT_BM25_B, DEFAULT_BM25_K1, DEFAULT_MU};
use crate::temporal::{TemporalDensity, DENSITY_FLOOR};
use crate::verticals::VerticalSelection;

/// Feature order: lexical (α), corpus temporal (β), external temporal (γ),
/// then metadata (δ).
pub const FEATURE_NAMES: [&str; 15] = [
    "lm_dir",
    "bm25",
    "idf",
    "corpus_temporal",
    "external_temporal",
    "doclen",
    "url_count",
    "hashtag_count",
    "mention_count",
    "has_url",
    "has_hashtags",
    "has_mentions",
    "is_reply",
    "statuses",
    "followers",
];
pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

pub const LM_DIR: usize = 0;
pub const CORPUS_TEMPORAL: usize = 3;
pub const EXTERNAL_TEMPORAL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub mu: f64,
    pub k1: f64,
    pub b: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            mu: DEFAULT_MU,
            k1: DEFAULT_BM25_K1,
            b: DEFAULT_BM25_B,
        }
    }
}

fn floored_ln(x: f64) -> f64 {
    x.max(DENSITY_FLOOR).ln()
}

/// Min-max scaling onto (0, 1]; a constant column maps to 1.
pub fn min_max(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        1.0
    }
}

/// Metadata features in table order.
pub fn metadata_features(doc: &Document) -> [f64; 10] {
    let m = &doc.metadata;
    let l = |x: f64| (1.0 + x).ln();
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    [
        l(m.doc_length as f64),
        l(m.url_count as f64),
        l(m.hashtag_count as f64),
        l(m.mention_count as f64),
        b(m.url_count > 0),
        b(m.hashtag_count > 0),
        b(m.mention_count > 0),
        b(m.is_reply),
        l(m.statuses_count as f64),
        l(m.followers_count as f64),
    ]
}

/// Raw per-document inputs before per-query normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalScores {
    pub lm_dir: f64,
    pub bm25: f64,
    pub idf: f64,
}

/// Assembles one feature vector. `bm25_range`/`idf_range` are the per-query
/// (min, max) over the candidate set. Absent densities give the floor value.
pub fn extract_features(
    doc: &Document,
    lexical: LexicalScores,
    bm25_range: (f64, f64),
    idf_range: (f64, f64),
    corpus_density: Option<&TemporalDensity>,
    external: Option<&VerticalSelection>,
) -> FeatureVector {
    let t = doc.timestamp as f64;
    let mut v = Vec::with_capacity(NUM_FEATURES);
    v.push(lexical.lm_dir);
    v.push(floored_ln(min_max(lexical.bm25, bm25_range.0, bm25_range.1)));
    v.push(floored_ln(min_max(lexical.idf, idf_range.0, idf_range.1)));
    v.push(floored_ln(corpus_density.map_or(0.0, |f| f.eval(t))));
    v.push(floored_ln(external.map_or(0.0, |s| s.density_at(t))));
    v.extend(metadata_features(doc));
    FeatureVector(v)
}

/// Feature vectors for every candidate of one query, in candidate order.
pub fn extract_query_features(
    index: &Index,
    candidates: &ScoredList,
    query: &QueryModel,
    params: &FeatureParams,
    corpus_density: Option<&TemporalDensity>,
    external: Option<&VerticalSelection>,
) -> Vec<FeatureVector> {
    let resolved = index.resolve(query);
    let lexical: Vec<LexicalScores> = candidates
        .entries
        .iter()
        .map(|h| LexicalScores {
            lm_dir: index.score_lm_dirichlet(&resolved, h.doc, params.mu),
            bm25: index.score_bm25(&resolved, h.doc, params.k1, params.b),
            idf: index.score_idf(&resolved, h.doc),
        })
        .collect();
    let range = |f: fn(&LexicalScores) -> f64| {
        lexical.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let bm25_range = range(|l| l.bm25);
    let idf_range = range(|l| l.idf);
    candidates
        .entries
        .iter()
        .zip(lexical)
        .map(|(h, lex)| extract_features(index.doc(h.doc), lex, bm25_range, idf_range, corpus_density, external))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtrModel {
    pub names: Vec<String>,
    pub intercept: f64,
    pub weights: Vec<f64>,
    /// Training MAP after initialization and after each full cycle.
    pub trace: Vec<f64>,
    pub config_hash: String,
}

impl LtrModel {
    pub fn new(weights: Vec<f64>) -> Self {
        LtrModel {
            names: default_names(weights.len()),
            intercept: 0.0,
            weights,
            trace: Vec::new(),
            config_hash: String::new(),
        }
    }

    /// Unit weight on a single feature.
    pub fn single(feature: usize, arity: usize) -> Self {
        let mut w = vec![0.0; arity];
        w[feature] = 1.0;
        Self::new(w)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# temporafed-ltr config_hash={}\n", self.config_hash);
        let _ = writeln!(s, "intercept\t{}", self.intercept);
        for (name, w) in self.names.iter().zip(&self.weights) {
            let _ = writeln!(s, "{name}\t{w}");
        }
        s
    }

    pub fn from_text<R: BufRead>(r: R, source: &str) -> Result<Self> {
        let mut model = LtrModel::new(Vec::new());
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(h) = rest.split_whitespace().find_map(|f| f.strip_prefix("config_hash=")) {
                    model.config_hash = h.to_string();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (name, w) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, i + 1, "expected name<TAB>weight"))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("bad weight {w:?}")))?;
            if name == "intercept" {
                model.intercept = w;
            } else {
                model.names.push(name.to_string());
                model.weights.push(w);
            }
        }
        Ok(model)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,MAP\n");
        for (i, m) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "{i},{m:.6}");
        }
        s
    }
}

fn default_names(n: usize) -> Vec<String> {
    if n == NUM_FEATURES {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("f{i}")).collect()
    }
}

/// Z + w · features.
pub fn score_loglinear(model: &LtrModel, fv: &FeatureVector) -> Result<f64> {
    if model.weights.len() != fv.0.len() {
        return Err(Error::ArityMismatch {
            expected: model.weights.len(),
            found: fv.0.len(),
        });
    }
    Ok(model.intercept + model.weights.iter().zip(&fv.0).map(|(w, x)| w * x).sum::<f64>())
}

/// Orders candidates by model score, ties by doc id.
pub fn rerank(model: &LtrModel, query_id: &str, candidates: &[(Hit, FeatureVector)]) -> Result<ScoredList> {
    let hits = candidates
        .iter()
        .map(|(h, fv)| {
            Ok(Hit {
                score: score_loglinear(model, fv)?,
                ..h.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = hits.len();
    Ok(ScoredList::from_hits(query_id, hits, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingQuery {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<u8>,
    /// Judged-relevant count for the query (AP denominator).
    pub num_relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub queries: Vec<TrainingQuery>,
}

impl TrainingSet {
    pub fn arity(&self) -> usize {
        self.queries
            .iter()
            .find_map(|q| q.features.first().map(|f| f.0.len()))
            .unwrap_or(0)
    }

    /// Training MAP of a weight vector (relevance: label ≥ 1).
    pub fn map(&self, weights: &[f64]) -> f64 {
        let aps: Vec<f64> = self.queries.par_iter().map(|q| query_ap(q, weights)).collect();
        if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        }
    }
}

fn query_ap(q: &TrainingQuery, weights: &[f64]) -> f64 {
    if q.num_relevant == 0 {
        return 0.0;
    }
    let scores: Vec<f64> = q
        .features
        .iter()
        .map(|f| weights.iter().zip(&f.0).map(|(w, x)| w * x).sum())
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| q.doc_ids[a].cmp(&q.doc_ids[b])));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if q.labels[i] >= 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / q.num_relevant as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateAscentConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub multiplicative_steps: Vec<f64>,
    pub additive_steps: Vec<f64>,
}

impl Default for CoordinateAscentConfig {
    fn default() -> Self {
        CoordinateAscentConfig {
            restarts: 3,
            max_iters: 25,
            tolerance: 1e-5,
            seed: 0,
            multiplicative_steps: vec![0.5, 0.9, 1.1, 2.0],
            additive_steps: vec![0.05, 0.5],
        }
    }
}

impl CoordinateAscentConfig {
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn probes(&self, w: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.multiplicative_steps.iter().map(|m| w * m).collect();
        out.push(-w);
        for a in &self.additive_steps {
            out.push(w + a);
            out.push(w - a);
        }
        out
    }
}

/// Cyclic coordinate ascent on training MAP, best of `restarts` seeded
/// random initializations in [-1, 1]. Only strict improvements are taken, so
/// the returned trace never decreases.
pub fn train_coordinate_ascent(training: &TrainingSet, config: &CoordinateAscentConfig) -> Result<LtrModel> {
    if !training.queries.iter().any(|q| q.labels.iter().any(|&l| l >= 1)) {
        return Err(Error::NoRelevant);
    }
    let dim = training.arity();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let mut w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut current = training.map(&w);
        let mut trace = vec![current];
        for _ in 0..config.max_iters {
            let start = current;
            for i in 0..dim {
                let incumbent = w[i];
                let mut best_value = incumbent;
                for probe in config.probes(incumbent) {
                    w[i] = probe;
                    let m = training.map(&w);
                    if m > current {
                        current = m;
                        best_value = probe;
                    }
                }
                w[i] = best_value;
            }
            trace.push(current);
            if current - start < config.tolerance {
                break;
            }
        }
        log::debug!("restart {restart}: training MAP {current:.4}");
        if best.as_ref().is_none_or(|(m, _, _)| current > *m) {
            best = Some((current, w, trace));
        }
    }
    let (_, weights, trace) = best.expect("at least one restart");
    Ok(LtrModel {
        names: default_names(weights.len()),
        intercept: 0.0,
        weights,
        trace,
        config_hash: config.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn tq(id: &str, feats: &[[f64; 2]], labels: &[u8]) -> TrainingQuery {
        TrainingQuery {
            query_id: id.into(),
            doc_ids: (0..feats.len()).map(|i| format!("{id}-{i:03}")).collect(),
            features: feats.iter().map(|f| FeatureVector(f.to_vec())).collect(),
            labels: labels.to_vec(),
            num_relevant: labels.iter().filter(|&&l| l >= 1).count(),
        }
    }

    fn toy_set() -> TrainingSet {
        // feature 0 orders relevants first; feature 1 is noise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut queries = Vec::new();
        for q in 0..4 {
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for i in 0..12 {
                let rel = i % 3 == 0;
                feats.push([if rel { 5.0 + i as f64 * 0.01 } else { i as f64 * 0.1 }, rng.random_range(-3.0..3.0)]);
                labels.push(if rel { 1 + (i % 2) as u8 } else { 0 });
            }
            queries.push(tq(&format!("q{q}"), &feats, &labels));
        }
        TrainingSet { queries }
    }

    #[test]
    fn metadata_zero_doc() {
        let d = Document::new("d", 0, "plain words here");
        let m = metadata_features(&d);
        assert_eq!(&m[1..8], &[0.0; 7]);
        assert_eq!(m[0], 4f64.ln());
    }

    #[test]
    fn features_composed_in_order() {
        let mut d = Document::new("d", 100, "argo #oscars http://t.co/x");
        d.metadata.followers_count = 9;
        d.metadata.statuses_count = 99;
        let f = TemporalDensity::fit(&[100.0], &[1.0], Some(10.0)).unwrap();
        let lex = LexicalScores {
            lm_dir: -7.5,
            bm25: 3.0,
            idf: 1.0,
        };
        let fv = extract_features(&d, lex, (1.0, 5.0), (1.0, 1.0), Some(&f), None);
        let expected = [
            -7.5,
            0.5f64.ln(),
            0.0,
            (0.398_942_280_401_432_7f64 / 10.0).ln(),
            DENSITY_FLOOR.ln(),
            3f64.ln(),
            2f64.ln(),
            2f64.ln(),
            0.0,
            1.0,
            1.0,
            0.0,
            0.0,
            100f64.ln(),
            10f64.ln(),
        ];
        assert_eq!(fv.0.len(), NUM_FEATURES);
        for (a, b) in fv.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // a document at the mode beats one in the tail
        let mut far = d.clone();
        far.timestamp = 10_000;
        let ff = extract_features(&far, lex, (1.0, 5.0), (1.0, 1.0), Some(&f), None);
        assert!(fv.0[CORPUS_TEMPORAL] > ff.0[CORPUS_TEMPORAL]);
        // bottom of the min-max range hits the floor, never -inf
        let low = extract_features(&d, LexicalScores { bm25: 1.0, ..lex }, (1.0, 5.0), (1.0, 1.0), None, None);
        assert!(low.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn loglinear_scoring() {
        let fv = FeatureVector(vec![1.0, 2.0]);
        let mut m = LtrModel::new(vec![0.0, 0.0]);
        m.intercept = 4.0;
        assert_eq!(score_loglinear(&m, &fv).unwrap(), 4.0);
        m.weights = vec![1.0, 0.5];
        assert_eq!(score_loglinear(&m, &fv).unwrap(), 6.0);
        assert!(matches!(
            score_loglinear(&m, &FeatureVector(vec![1.0])),
            Err(Error::ArityMismatch { expected: 2, found: 1 })
        ));
    }

    fn hits(vals: &[f64]) -> Vec<(Hit, FeatureVector)> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| {
                (
                    Hit {
                        doc: i as u32,
                        doc_id: format!("d{i}"),
                        score: 0.0,
                    },
                    FeatureVector(vec![v, -v * 2.0]),
                )
            })
            .collect()
    }

    #[test]
    fn rerank_order_and_sign_flip() {
        let c = hits(&[0.3, 0.9, 0.1, 0.5]);
        let up = rerank(&LtrModel::single(0, 2), "q", &c).unwrap();
        assert_eq!(up.doc_ids().collect::<Vec<_>>(), ["d1", "d3", "d0", "d2"]);
        let down = rerank(&LtrModel::new(vec![-1.0, 0.0]), "q", &c).unwrap();
        assert_eq!(down.doc_ids().collect::<Vec<_>>(), ["d2", "d0", "d3", "d1"]);
        let tied = rerank(&LtrModel::new(vec![0.0, 0.0]), "q", &c).unwrap();
        assert_eq!(tied.doc_ids().collect::<Vec<_>>(), ["d0", "d1", "d2", "d3"]);
    }

    #[test]
    fn perfect_feature_reaches_map_one() {
        let set = toy_set();
        let m = train_coordinate_ascent(&set, &CoordinateAscentConfig::default()).unwrap();
        assert_eq!(*m.trace.last().unwrap(), 1.0);
        assert!(m.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn beats_best_single_feature_grid() {
        // grid over the unit circle of weight directions as the oracle
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let queries: Vec<TrainingQuery> = (0..5)
            .map(|q| {
                let feats: Vec<[f64; 2]> = (0..20).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
                let labels: Vec<u8> = feats.iter().map(|f| u8::from(f[0] + 0.3 * rng.random_range(0.0..1.0) > 0.8)).collect();
                tq(&format!("q{q}"), &feats, &labels)
            })
            .filter(|q| q.num_relevant > 0)
            .collect();
        let set = TrainingSet { queries };
        let single_best = set.map(&[1.0, 0.0]).max(set.map(&[0.0, 1.0])).max(set.map(&[-1.0, 0.0])).max(set.map(&[0.0, -1.0]));
        let m = train_coordinate_ascent(&set, &CoordinateAscentConfig { seed: 5, ..Default::default() }).unwrap();
        assert!(*m.trace.last().unwrap() >= single_best);
        assert_eq!(set.map(&m.weights), *m.trace.last().unwrap());
    }

    #[test]
    fn zero_iterations_keeps_init() {
        let set = toy_set();
        let cfg = CoordinateAscentConfig {
            restarts: 1,
            max_iters: 0,
            seed: 8,
            ..Default::default()
        };
        let m = train_coordinate_ascent(&set, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        rng.set_stream(0);
        let init: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
        assert_eq!(m.weights, init);
        assert_eq!(m.trace.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let set = toy_set();
        let cfg = CoordinateAscentConfig { seed: 99, ..Default::default() };
        assert_eq!(train_coordinate_ascent(&set, &cfg).unwrap(), train_coordinate_ascent(&set, &cfg).unwrap());
    }

    #[test]
    fn no_relevant_errors() {
        let set = TrainingSet {
            queries: vec![tq("q", &[[1.0, 2.0]], &[0])],
        };
        assert!(matches!(
            train_coordinate_ascent(&set, &CoordinateAscentConfig::default()),
            Err(Error::NoRelevant)
        ));
    }

    #[test]
    fn model_text_roundtrip() {
        let mut m = LtrModel::new((0..NUM_FEATURES).map(|i| i as f64 * 0.1 - 0.3).collect());
        m.intercept = 1.5;
        m.config_hash = CoordinateAscentConfig::default().hash();
        let back = LtrModel::from_text(m.to_text().as_bytes(), "mem").unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.names, m.names);
        assert_eq!(back.intercept, 1.5);
        assert_eq!(back.config_hash, m.config_hash);
    }

    proptest::proptest! {
        #[test]
        fn ordering_invariant_to_intercept_and_scale(vals in proptest::collection::vec(-10.0f64..10.0, 1..20), z in -50.0f64..50.0, c in 0.01f64..100.0) {
            let cands = hits(&vals);
            let base = LtrModel::new(vec![0.7, -0.2]);
            let mut shifted = base.clone();
            shifted.intercept = z;
            let scaled = LtrModel::new(vec![0.7 * c, -0.2 * c]);
            let a: Vec<String> = rerank(&base, "q", &cands).unwrap().doc_ids().map(String::from).collect();
            let b: Vec<String> = rerank(&shifted, "q", &cands).unwrap().doc_ids().map(String::from).collect();
            let s: Vec<String> = rerank(&scaled, "q", &cands).unwrap().doc_ids().map(String::from).collect();
            proptest::prop_assert_eq!(&a, &b);
            proptest::prop_assert_eq!(&a, &s);
        }
    }
}

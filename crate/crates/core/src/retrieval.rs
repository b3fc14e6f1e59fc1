//! Inverted index and lexical scorers (query-likelihood with Dirichlet
//! smoothing, BM25, IDF) plus the exponential recency prior.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

pub const DEFAULT_MU: f64 = 2500.0;
pub const DEFAULT_BM25_K1: f64 = 1.2;
pub const DEFAULT_BM25_B: f64 = 0.75;
/// Three-day half-life, per second.
pub const DEFAULT_RECENCY_RATE: f64 = std::f64::consts::LN_2 / (3.0 * 86_400.0);

/// Term → weight. Raw queries carry term counts, expanded queries carry
/// probabilities; weights multiply each term's score contribution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryModel {
    weights: BTreeMap<String, f64>,
}

impl QueryModel {
    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Self {
        let mut weights = BTreeMap::new();
        for t in terms {
            *weights.entry(t.as_ref().to_string()).or_insert(0.0) += 1.0;
        }
        QueryModel { weights }
    }

    pub fn from_weights<I: IntoIterator<Item = (String, f64)>>(it: I) -> Self {
        let mut weights = BTreeMap::new();
        for (t, w) in it {
            if w > 0.0 {
                *weights.entry(t).or_insert(0.0) += w;
            }
        }
        QueryModel { weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        QueryModel {
            weights: self.weights.iter().map(|(t, w)| (t.clone(), w * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    terms: Vec<String>,
    #[serde(skip)]
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
    cf: Vec<u64>,
    df: Vec<u32>,
    /// Per document: (term id, tf) sorted by term id.
    forward: Vec<Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    total_terms: u64,
    docs: Vec<Document>,
    #[serde(skip)]
    doc_ids: HashMap<String, u32>,
}

/// Query terms mapped onto index term ids; unknown terms are listed separately.
#[derive(Debug, Clone)]
pub struct ResolvedQuery {
    pub terms: Vec<(u32, f64)>,
    pub skipped: Vec<String>,
}

impl Index {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::from_documents(corpus.documents().to_vec())
    }

    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut terms: Vec<String> = Vec::new();
        let mut term_ids: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<(u32, u32)>> = Vec::new();
        let mut forward = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for tok in &doc.tokens {
                let id = *term_ids.entry(tok.clone()).or_insert_with(|| {
                    terms.push(tok.clone());
                    postings.push(Vec::new());
                    (terms.len() - 1) as u32
                });
                *counts.entry(id).or_insert(0) += 1;
            }
            for (&t, &tf) in &counts {
                postings[t as usize].push((i as u32, tf));
            }
            forward.push(counts.into_iter().collect::<Vec<_>>());
            doc_lengths.push(doc.tokens.len() as u32);
        }
        let cf = postings
            .iter()
            .map(|p| p.iter().map(|&(_, tf)| tf as u64).sum())
            .collect();
        let df = postings.iter().map(|p| p.len() as u32).collect();
        let total_terms = doc_lengths.iter().map(|&l| l as u64).sum();
        let doc_ids = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i as u32))
            .collect();
        Ok(Index {
            terms,
            term_ids,
            postings,
            cf,
            df,
            forward,
            doc_lengths,
            total_terms,
            docs,
            doc_ids,
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)
            .map_err(|e| Error::io("index", std::io::Error::other(e)))
    }

    pub fn read_json<R: BufRead>(r: R) -> Result<Self> {
        let mut idx: Index = serde_json::from_reader(r)
            .map_err(|e| Error::parse("index", e.line(), e.to_string()))?;
        idx.term_ids = idx
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        idx.doc_ids = idx
            .docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i as u32))
            .collect();
        Ok(idx)
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn total_terms(&self) -> u64 {
        self.total_terms
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.term_id(term).map_or(0, |t| self.cf[t as usize])
    }

    pub fn df(&self, term: &str) -> u32 {
        self.term_id(term).map_or(0, |t| self.df[t as usize])
    }

    pub fn cf_by_id(&self, t: u32) -> u64 {
        self.cf[t as usize]
    }

    pub fn df_by_id(&self, t: u32) -> u32 {
        self.df[t as usize]
    }

    pub fn postings(&self, t: u32) -> &[(u32, u32)] {
        &self.postings[t as usize]
    }

    pub fn doc(&self, d: u32) -> &Document {
        &self.docs[d as usize]
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc_by_id(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids.get(doc_id).copied()
    }

    pub fn doc_length(&self, d: u32) -> u32 {
        self.doc_lengths[d as usize]
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.total_terms as f64 / self.docs.len() as f64
    }

    /// (term id, tf) pairs of a document, sorted by term id.
    pub fn doc_terms(&self, d: u32) -> &[(u32, u32)] {
        &self.forward[d as usize]
    }

    pub fn tf(&self, t: u32, d: u32) -> u32 {
        let row = &self.forward[d as usize];
        row.binary_search_by_key(&t, |&(id, _)| id)
            .map_or(0, |i| row[i].1)
    }

    pub fn resolve(&self, query: &QueryModel) -> ResolvedQuery {
        let mut terms = Vec::new();
        let mut skipped = Vec::new();
        for (t, w) in query.iter() {
            match self.term_id(t) {
                Some(id) if self.cf[id as usize] > 0 => terms.push((id, w)),
                _ => skipped.push(t.to_string()),
            }
        }
        ResolvedQuery { terms, skipped }
    }

    /// Σ_w q(w) · ln[(tf(w,d) + μ·cf(w)/|C|) / (|d| + μ)]. Terms unseen in the
    /// collection contribute nothing.
    pub fn score_lm_dirichlet(&self, query: &ResolvedQuery, d: u32, mu: f64) -> f64 {
        let dl = self.doc_length(d) as f64;
        let c = self.total_terms as f64;
        query
            .terms
            .iter()
            .map(|&(t, w)| {
                let p = self.cf[t as usize] as f64 / c;
                w * ((self.tf(t, d) as f64 + mu * p) / (dl + mu)).ln()
            })
            .sum()
    }

    /// Okapi BM25 with the RSJ idf `ln((N − df + 0.5)/(df + 0.5) + 1)`.
    pub fn score_bm25(&self, query: &ResolvedQuery, d: u32, k1: f64, b: f64) -> f64 {
        let n = self.doc_count() as f64;
        let norm = 1.0 - b + b * self.doc_length(d) as f64 / self.avg_doc_length();
        query
            .terms
            .iter()
            .map(|&(t, w)| {
                let tf = self.tf(t, d) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                let df = self.df[t as usize] as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                w * idf * tf * (k1 + 1.0) / (tf + k1 * norm)
            })
            .sum()
    }

    /// Σ over query terms present in `d` of ln(N/df).
    pub fn score_idf(&self, query: &ResolvedQuery, d: u32) -> f64 {
        let n = self.doc_count() as f64;
        query
            .terms
            .iter()
            .filter(|&&(t, _)| self.tf(t, d) > 0)
            .map(|&(t, w)| w * (n / self.df[t as usize] as f64).ln())
            .sum()
    }

    /// Documents containing at least one resolved query term, ascending.
    pub fn matching_docs(&self, query: &ResolvedQuery) -> Vec<u32> {
        let mut out: Vec<u32> = query
            .terms
            .iter()
            .flat_map(|&(t, _)| self.postings[t as usize].iter().map(|&(d, _)| d))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// exp(−rate · (query_time − doc_time)).
pub fn recency_prior(query_time: i64, doc_time: i64, rate: f64) -> Result<f64> {
    if doc_time > query_time {
        return Err(Error::FutureDocument {
            doc_id: String::new(),
            doc_time,
            query_time,
        });
    }
    Ok((-rate * (query_time - doc_time) as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scorer {
    LmDirichlet { mu: f64 },
    Bm25 { k1: f64, b: f64 },
    Idf,
    /// LM.Dir log-likelihood plus the log recency prior.
    Recency { mu: f64, rate: f64 },
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::LmDirichlet { mu: DEFAULT_MU }
    }
}

impl Scorer {
    pub fn score(&self, index: &Index, query: &ResolvedQuery, d: u32, query_time: i64) -> f64 {
        match *self {
            Scorer::LmDirichlet { mu } => index.score_lm_dirichlet(query, d, mu),
            Scorer::Bm25 { k1, b } => index.score_bm25(query, d, k1, b),
            Scorer::Idf => index.score_idf(query, d),
            Scorer::Recency { mu, rate } => {
                let age = (query_time - index.doc(d).timestamp) as f64;
                index.score_lm_dirichlet(query, d, mu) - rate * age
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    /// Internal id in the index that produced the hit.
    pub doc: u32,
    pub doc_id: String,
    pub score: f64,
}

/// Rank-ordered result list; rank of entry `i` is `i + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredList {
    pub query_id: String,
    pub entries: Vec<Hit>,
}

/// Descending score, then ascending doc id.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl ScoredList {
    /// Sorts hits into rank order and keeps the first `k`.
    pub fn from_hits(query_id: impl Into<String>, mut hits: Vec<Hit>, k: usize) -> Self {
        hits.sort_by(hit_order);
        hits.truncate(k);
        ScoredList {
            query_id: query_id.into(),
            entries: hits,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|h| h.doc_id.as_str())
    }
}

/// Top-`k` documents published no later than `query_time` among those
/// matching at least one query term.
pub fn search(
    index: &Index,
    query_id: &str,
    query: &QueryModel,
    scorer: Scorer,
    k: usize,
    query_time: i64,
) -> ScoredList {
    let resolved = index.resolve(query);
    if !resolved.skipped.is_empty() {
        log::debug!("query {query_id}: skipped unknown terms {:?}", resolved.skipped);
    }
    let hits = index
        .matching_docs(&resolved)
        .into_iter()
        .filter(|&d| index.doc(d).timestamp <= query_time)
        .map(|d| Hit {
            doc: d,
            doc_id: index.doc(d).doc_id.clone(),
            score: scorer.score(index, &resolved, d, query_time),
        })
        .collect();
    ScoredList::from_hits(query_id, hits, k.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> Index {
        Index::from_documents(vec![
            Document::new("d1", 10, "a b a"),
            Document::new("d2", 20, "b c"),
        ])
        .unwrap()
    }

    #[test]
    fn build_counts() {
        let idx = toy();
        assert_eq!((idx.cf("a"), idx.cf("b"), idx.cf("c")), (2, 2, 1));
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.df("b"), 2);
        assert_eq!(idx.total_terms(), 5);
        assert_eq!(toy(), toy());
    }

    #[test]
    fn empty_doc_and_empty_corpus() {
        let idx = Index::from_documents(vec![Document::new("e", 0, "")]).unwrap();
        assert_eq!(idx.doc_length(0), 0);
        assert_eq!(idx.vocabulary_size(), 0);
        assert!(matches!(Index::from_documents(vec![]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn lm_dirichlet_hand_value() {
        // |C| = 5, cf(a) = 2: p = 0.4 and tf = 2, |d| = 3, μ = 2
        let idx = toy();
        let q = idx.resolve(&QueryModel::from_terms(&["a"]));
        assert_relative_eq!(idx.score_lm_dirichlet(&q, 0, 2.0), 0.56f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn lm_dirichlet_large_mu_limit() {
        let idx = toy();
        let q = idx.resolve(&QueryModel::from_terms(&["c"]));
        // d1 lacks "c": score tends to ln(cf/|C|) from below as μ grows
        let limit = (1.0f64 / 5.0).ln();
        let mut prev = f64::NEG_INFINITY;
        for mu in [1.0, 10.0, 1e3, 1e6, 1e9] {
            let s = idx.score_lm_dirichlet(&q, 0, mu);
            assert!(s > prev && s <= limit);
            prev = s;
        }
        assert!((prev - limit).abs() < 1e-8);
    }

    #[test]
    fn unknown_terms_skipped() {
        let idx = toy();
        let q1 = idx.resolve(&QueryModel::from_terms(&["a", "zzz"]));
        let q2 = idx.resolve(&QueryModel::from_terms(&["a"]));
        assert_eq!(q1.skipped, ["zzz"]);
        assert_eq!(
            idx.score_lm_dirichlet(&q1, 0, 2500.0),
            idx.score_lm_dirichlet(&q2, 0, 2500.0)
        );
    }

    #[test]
    fn bm25_properties() {
        let idx = Index::from_documents(vec![
            Document::new("d1", 0, "a b a"),
            Document::new("d2", 0, "b c"),
            Document::new("d3", 0, "a c c c c c c"),
        ])
        .unwrap();
        let q = idx.resolve(&QueryModel::from_terms(&["zzz"]));
        assert_eq!(idx.score_bm25(&q, 0, 1.2, 0.75), 0.0);
        let qc = idx.resolve(&QueryModel::from_terms(&["a"]));
        // d1 and d3 both have tf(a)... d1 tf 2, d3 tf 1: with b=0 length is ignored
        let s1 = idx.score_bm25(&qc, 0, 1.2, 0.0);
        let idf = ((3.0f64 - 2.0 + 0.5) / 2.5 + 1.0).ln();
        assert_relative_eq!(s1, idf * 2.0 * 2.2 / (2.0 + 1.2), epsilon = 1e-12);
        let s3 = idx.score_bm25(&qc, 2, 1.2, 0.0);
        assert_relative_eq!(s3, idf * 2.2 / (1.0 + 1.2), epsilon = 1e-12);
    }

    #[test]
    fn idf_examples() {
        let idx = Index::from_documents(vec![
            Document::new("d1", 0, "x common"),
            Document::new("d2", 0, "y common"),
            Document::new("d3", 0, "z common"),
            Document::new("d4", 0, "w common"),
        ])
        .unwrap();
        let q = idx.resolve(&QueryModel::from_terms(&["x"]));
        assert_relative_eq!(idx.score_idf(&q, 0), 4f64.ln());
        assert_eq!(idx.score_idf(&q, 1), 0.0);
        let qc = idx.resolve(&QueryModel::from_terms(&["common"]));
        assert_eq!(idx.score_idf(&qc, 2), 0.0);
    }

    #[test]
    fn recency_examples() {
        assert_eq!(recency_prior(100, 100, 0.5).unwrap(), 1.0);
        assert_eq!(recency_prior(100, 0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(recency_prior(10, 0, 0.1).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
        assert!(recency_prior(0, 1, 0.1).is_err());
    }

    #[test]
    fn search_cutoff_and_ties() {
        let idx = Index::from_documents(vec![
            Document::new("b", 10, "x"),
            Document::new("a", 10, "x"),
            Document::new("c", 99, "x"),
            Document::new("d", 5, "y"),
        ])
        .unwrap();
        let q = QueryModel::from_terms(&["x"]);
        let r = search(&idx, "q", &q, Scorer::default(), 10, 50);
        assert_eq!(r.doc_ids().collect::<Vec<_>>(), ["a", "b"]);
        let none = search(&idx, "q", &QueryModel::from_terms(&["nope"]), Scorer::default(), 10, 50);
        assert!(none.is_empty());
    }

    #[test]
    fn index_json_roundtrip() {
        let idx = toy();
        let mut buf = Vec::new();
        idx.write_json(&mut buf).unwrap();
        let back = Index::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.term_id("c"), idx.term_id("c"));
    }
}

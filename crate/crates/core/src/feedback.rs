//! Query expansion from external verticals.
//!
//! All three estimators share one shape: every feedback document `d`
//! retrieved from a selected vertical gets a weight, and the expansion
//! model is `P(w|θ_F) ∝ Σ_d weight(d) · P(w|d)` with `P(w|d)` the in-document
//! maximum likelihood estimate. They differ only in the document weight:
//!
//! * external relevance model: `P(q|c) / |R_c| · P(q|d)`
//! * time-aware variant: the same, times the external temporal relevance of `t_d`
//! * discrete time periods: `P(q|c) · P(T_d|q) · P(q|d) / Σ_{d' ∈ R_c ∩ T_d} P(q|d')`
//!
//! `P(q|d)` is the softmax of LM.Dir log-scores inside each vertical's
//! feedback list.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{search, Index, QueryModel, ScoredList, Scorer, DEFAULT_MU};
use crate::temporal::{feedback_density, histogram, TemporalDensity, TimeHistogram, WeightScheme, DENSITY_FLOOR};
use crate::verticals::{external_temporal_relevance, SelectedVertical, Vertical, VerticalSelection};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_N_TERMS: usize = 20;

/// A feedback document's share of the retained expansion mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub vertical_id: usize,
    pub doc_id: String,
    pub timestamp: i64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelevanceModel {
    weights: BTreeMap<String, f64>,
    pub provenance: Vec<Provenance>,
}

impl RelevanceModel {
    pub fn weight(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Terms by descending weight, ties by term.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Builds a model from raw term weights: keeps the `n_terms` heaviest
/// (ties by term) and renormalizes.
pub fn truncate_and_normalize(raw: &HashMap<String, f64>, n_terms: usize) -> BTreeMap<String, f64> {
    let mut v: Vec<(&String, f64)> = raw.iter().filter(|(_, &w)| w > 0.0).map(|(t, &w)| (t, w)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    v.truncate(n_terms);
    let total: f64 = v.iter().map(|(_, w)| w).sum();
    v.into_iter().map(|(t, w)| (t.clone(), w / total)).collect()
}

/// Softmax of retrieval log-scores within one feedback list.
pub fn query_likelihoods(list: &ScoredList) -> Vec<f64> {
    let max = list.entries.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = list.entries.iter().map(|h| (h.score - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

struct FeedbackDoc<'a> {
    vertical_id: usize,
    index: &'a Index,
    doc: u32,
    weight: f64,
}

fn vertical_of<'a>(verticals: &'a [Vertical], s: &SelectedVertical) -> Result<&'a Vertical> {
    verticals
        .iter()
        .find(|v| v.id == s.vertical_id)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown vertical {}", s.vertical_id)))
}

fn build_model(docs: Vec<FeedbackDoc<'_>>, n_terms: usize) -> Result<RelevanceModel> {
    if docs.is_empty() {
        return Err(Error::EmptyFeedback("no feedback documents in any vertical".into()));
    }
    let mut raw: HashMap<String, f64> = HashMap::new();
    for fd in &docs {
        let len = fd.index.doc_length(fd.doc) as f64;
        if len == 0.0 || fd.weight == 0.0 {
            continue;
        }
        for &(t, tf) in fd.index.doc_terms(fd.doc) {
            *raw.entry(fd.index.term(t).to_string()).or_insert(0.0) += fd.weight * tf as f64 / len;
        }
    }
    if raw.values().all(|&w| w <= 0.0) {
        return Err(Error::EmptyFeedback("feedback documents carry no terms".into()));
    }
    let weights = truncate_and_normalize(&raw, n_terms);
    let kept_raw: f64 = weights.keys().map(|t| raw[t]).sum();

    let mut provenance = Vec::with_capacity(docs.len());
    for fd in &docs {
        let len = fd.index.doc_length(fd.doc) as f64;
        let mass: f64 = if len == 0.0 {
            0.0
        } else {
            fd.index
                .doc_terms(fd.doc)
                .iter()
                .filter(|&&(t, _)| weights.contains_key(fd.index.term(t)))
                .map(|&(_, tf)| fd.weight * tf as f64 / len)
                .sum::<f64>()
                / kept_raw
        };
        let doc = fd.index.doc(fd.doc);
        provenance.push(Provenance {
            vertical_id: fd.vertical_id,
            doc_id: doc.doc_id.clone(),
            timestamp: doc.timestamp,
            mass,
        });
    }
    Ok(RelevanceModel { weights, provenance })
}

fn weighted_docs<'a>(
    verticals: &'a [Vertical],
    selection: &VerticalSelection,
    mut extra: impl FnMut(&SelectedVertical, &Index, u32) -> f64,
) -> Result<Vec<FeedbackDoc<'a>>> {
    let mut out = Vec::new();
    for s in &selection.selected {
        let v = vertical_of(verticals, s)?;
        let n = s.feedback.len() as f64;
        for (hit, pqd) in s.feedback.entries.iter().zip(query_likelihoods(&s.feedback)) {
            out.push(FeedbackDoc {
                vertical_id: s.vertical_id,
                index: &v.index,
                doc: hit.doc,
                weight: s.weight / n * pqd * extra(s, &v.index, hit.doc),
            });
        }
    }
    Ok(out)
}

/// Expansion model from the selected verticals' feedback documents.
pub fn relevance_model_external(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    n_terms: usize,
) -> Result<RelevanceModel> {
    build_model(weighted_docs(verticals, selection, |_, _, _| 1.0)?, n_terms)
}

/// Time-aware expansion: each feedback document is further weighted by
/// `temporal(t_d)`, floored at [`DENSITY_FLOOR`].
pub fn time_weighted_relevance_model(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    n_terms: usize,
    temporal: impl Fn(f64) -> f64,
) -> Result<RelevanceModel> {
    let docs = weighted_docs(verticals, selection, |_, idx, d| {
        temporal(idx.doc(d).timestamp as f64).max(DENSITY_FLOOR)
    })?;
    build_model(docs, n_terms)
}

/// Time-aware expansion using the selection's external temporal relevance.
pub fn time_based_relevance_model(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    n_terms: usize,
) -> Result<RelevanceModel> {
    time_weighted_relevance_model(verticals, selection, n_terms, |t| {
        external_temporal_relevance(selection, t)
    })
}

/// P(T|q): histogram of all selected verticals' feedback timestamps.
pub fn feedback_period_distribution(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    period: i64,
) -> Result<TimeHistogram> {
    let mut ts = Vec::new();
    for s in &selection.selected {
        let v = vertical_of(verticals, s)?;
        ts.extend(s.feedback.entries.iter().map(|h| v.index.doc(h.doc).timestamp));
    }
    let origin = ts.iter().min().map_or(0, |&t| TimeHistogram::aligned_origin(t, period));
    histogram(&ts, &vec![1.0; ts.len()], period, origin)
}

/// Generative model over discrete periods: collection, then period, then term.
pub fn discrete_time_relevance_model(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    period: i64,
    n_terms: usize,
) -> Result<RelevanceModel> {
    let periods = feedback_period_distribution(verticals, selection, period)?;
    discrete_with_periods(verticals, selection, &periods, n_terms)
}

/// As [`discrete_time_relevance_model`] with an explicit P(T|q).
pub fn discrete_with_periods(
    verticals: &[Vertical],
    selection: &VerticalSelection,
    periods: &TimeHistogram,
    n_terms: usize,
) -> Result<RelevanceModel> {
    if periods.period <= 0 {
        return Err(Error::InvalidParameter(format!("period {}", periods.period)));
    }
    let mut out = Vec::new();
    for s in &selection.selected {
        let v = vertical_of(verticals, s)?;
        let pqd = query_likelihoods(&s.feedback);
        let bins: Vec<Option<usize>> = s
            .feedback
            .entries
            .iter()
            .map(|h| periods.bin_of(v.index.doc(h.doc).timestamp))
            .collect();
        let mut per_bin: HashMap<usize, f64> = HashMap::new();
        for (b, p) in bins.iter().zip(&pqd) {
            if let Some(b) = b {
                *per_bin.entry(*b).or_insert(0.0) += p;
            }
        }
        for ((hit, p), b) in s.feedback.entries.iter().zip(&pqd).zip(&bins) {
            let weight = match b {
                Some(b) if per_bin[b] > 0.0 => {
                    let p_t = periods.masses.get(*b).copied().unwrap_or(0.0);
                    s.weight * p_t * p / per_bin[b]
                }
                _ => 0.0,
            };
            out.push(FeedbackDoc {
                vertical_id: s.vertical_id,
                index: &v.index,
                doc: hit.doc,
                weight,
            });
        }
    }
    build_model(out, n_terms)
}

/// Maximum-likelihood query model c(w,q)/|q|.
pub fn query_mle<S: AsRef<str>>(terms: &[S]) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, f64> = BTreeMap::new();
    for t in terms {
        *m.entry(t.as_ref().to_string()).or_insert(0.0) += 1.0;
    }
    let n = terms.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub original: BTreeMap<String, f64>,
    pub feedback: RelevanceModel,
    pub lambda: f64,
    pub model: BTreeMap<String, f64>,
}

impl ExpandedQuery {
    pub fn query_model(&self) -> QueryModel {
        QueryModel::from_weights(self.model.iter().map(|(t, w)| (t.clone(), *w)))
    }

    /// Terms by descending weight, ties by term.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.model.iter().map(|(t, w)| (t.as_str(), *w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    /// Tab-separated `term<TAB>weight` lines in [`ranked`](Self::ranked) order.
    pub fn to_tsv(&self) -> String {
        self.ranked()
            .into_iter()
            .map(|(t, w)| format!("{t}\t{w:.6}\n"))
            .collect()
    }
}

/// `λ·θ_q + (1 − λ)·θ_F` over the union vocabulary.
pub fn interpolate_query(
    original: &BTreeMap<String, f64>,
    feedback: &RelevanceModel,
    lambda: f64,
) -> Result<ExpandedQuery> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    let mut model: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in original {
        *model.entry(t.clone()).or_insert(0.0) += lambda * w;
    }
    for (t, w) in feedback.iter() {
        *model.entry(t.to_string()).or_insert(0.0) += (1.0 - lambda) * w;
    }
    model.retain(|_, w| *w > 0.0);
    Ok(ExpandedQuery {
        original: original.clone(),
        feedback: feedback.clone(),
        lambda,
        model,
    })
}

/// The unexpanded query, as an [`ExpandedQuery`] with λ = 1.
pub fn unexpanded<S: AsRef<str>>(terms: &[S]) -> ExpandedQuery {
    let original = query_mle(terms);
    ExpandedQuery {
        model: original.clone(),
        original,
        feedback: RelevanceModel::default(),
        lambda: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTemporalFeedback {
    pub density: TemporalDensity,
    pub feedback: ScoredList,
}

/// KDE over the main corpus's top `n_fb` documents for the expanded query.
pub fn corpus_temporal_feedback(
    index: &Index,
    expanded: &ExpandedQuery,
    n_fb: usize,
    scheme: WeightScheme,
    query_time: i64,
    period: i64,
) -> Result<CorpusTemporalFeedback> {
    corpus_feedback_for(index, &expanded.query_model(), n_fb, scheme, query_time, period, DEFAULT_MU)
}

pub fn corpus_feedback_for(
    index: &Index,
    query: &QueryModel,
    n_fb: usize,
    scheme: WeightScheme,
    query_time: i64,
    period: i64,
    mu: f64,
) -> Result<CorpusTemporalFeedback> {
    if n_fb == 0 {
        return Err(Error::InvalidParameter("n_fb must be at least 1".into()));
    }
    let feedback = search(index, "", query, Scorer::LmDirichlet { mu }, n_fb, query_time);
    let density = feedback_density(&feedback, |d| index.doc(d).timestamp, scheme, period)?;
    Ok(CorpusTemporalFeedback { density, feedback })
}

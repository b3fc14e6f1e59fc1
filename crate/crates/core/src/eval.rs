//! TREC topics/qrels/run I/O, rank metrics (AP, P@k, Rprec), paired t-tests
//! and the temporal profile of relevant documents retrieved at depth R.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::temporal::{emd_1d, histogram, TimeHistogram};

/// Grades at or above this count as relevant.
pub const RELEVANT_GRADE: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Topic {
    pub query_id: String,
    pub text: String,
    pub query_time: i64,
}

pub fn read_topics<R: BufRead>(r: R, source: &str) -> Result<Vec<Topic>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields[2].trim().is_empty() {
            return Err(Error::parse(source, i + 1, "expected query_id<TAB>text<TAB>query_time"));
        }
        let query_time = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, i + 1, format!("bad query time {:?}", fields[2])))?;
        out.push(Topic {
            query_id: fields[0].to_string(),
            text: fields[1].to_string(),
            query_time,
        });
    }
    Ok(out)
}

pub fn write_topics(topics: &[Topic]) -> String {
    topics
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.query_id, t.text, t.query_time))
        .collect()
}

/// (query, document) → grade in {0, 1, 2}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Qrels {
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u8) -> Result<()> {
        if grade > 2 {
            return Err(Error::InvalidParameter(format!("grade {grade} outside 0..=2")));
        }
        let prev = self
            .judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
        if prev.is_some() {
            return Err(Error::InvalidParameter(format!("duplicate judgment {query_id}/{doc_id}")));
        }
        Ok(())
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u8> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.grade(query_id, doc_id).is_some_and(|g| g >= RELEVANT_GRADE)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.judgments.get(query_id)
    }

    pub fn relevant(&self, query_id: &str) -> Vec<&str> {
        self.judgments
            .get(query_id)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g >= RELEVANT_GRADE)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn num_relevant(&self, query_id: &str) -> usize {
        self.relevant(query_id).len()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(s, "{q} 0 {d} {g}");
            }
        }
        s
    }
}

pub fn read_qrels<R: BufRead>(r: R, source: &str) -> Result<Qrels> {
    let mut qrels = Qrels::default();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(Error::parse(source, i + 1, "expected `query_id 0 doc_id grade`"));
        }
        let grade: u8 = f[3]
            .parse()
            .map_err(|_| Error::parse(source, i + 1, format!("bad grade {:?}", f[3])))?;
        qrels
            .insert(f[0], f[2], grade)
            .map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
    }
    Ok(qrels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    /// Score exactly as read, reused on write so parsed files round-trip.
    pub score_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    pub tag: String,
    /// Queries in file order.
    pub queries: Vec<(String, Vec<RunEntry>)>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        RunFile {
            tag: tag.into(),
            queries: Vec::new(),
        }
    }

    /// Appends a ranked list; ranks are assigned 1..n in the given order.
    pub fn push(&mut self, query_id: &str, ranked: impl IntoIterator<Item = (String, f64)>) {
        let entries = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                doc_id,
                rank: i + 1,
                score,
                score_text: None,
            })
            .collect();
        self.queries.push((query_id.to_string(), entries));
    }

    pub fn entries(&self, query_id: &str) -> &[RunEntry] {
        self.queries
            .iter()
            .find(|(q, _)| q == query_id)
            .map_or(&[], |(_, e)| e.as_slice())
    }

    pub fn doc_ids(&self, query_id: &str) -> Vec<&str> {
        self.entries(query_id).iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn to_trec(&self) -> String {
        let mut s = String::new();
        for (q, entries) in &self.queries {
            for e in entries {
                match &e.score_text {
                    Some(t) => {
                        let _ = writeln!(s, "{q} Q0 {} {} {t} {}", e.doc_id, e.rank, self.tag);
                    }
                    None => {
                        let _ = writeln!(s, "{q} Q0 {} {} {:.6} {}", e.doc_id, e.rank, e.score, self.tag);
                    }
                }
            }
        }
        s
    }
}

pub fn read_run<R: BufRead>(r: R, source: &str) -> Result<RunFile> {
    let mut run = RunFile::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let bad = |m: String| Error::parse(source, i + 1, m);
        if f.len() != 6 {
            return Err(bad("expected `query_id Q0 doc_id rank score tag`".into()));
        }
        let rank: usize = f[3].parse().map_err(|_| bad(format!("bad rank {:?}", f[3])))?;
        let score: f64 = f[4].parse().map_err(|_| bad(format!("bad score {:?}", f[4])))?;
        if run.queries.is_empty() {
            run.tag = f[5].to_string();
        } else if run.tag != f[5] {
            return Err(bad(format!("run tag {:?} differs from {:?}", f[5], run.tag)));
        }
        let new_query = run.queries.last().is_none_or(|(q, _)| q != f[0]);
        if new_query {
            if !seen.insert(f[0].to_string()) {
                return Err(bad(format!("query {} is not contiguous", f[0])));
            }
            run.queries.push((f[0].to_string(), Vec::new()));
        }
        let entries = &mut run.queries.last_mut().expect("pushed above").1;
        if rank != entries.len() + 1 {
            return Err(bad(format!("rank {rank} breaks the 1..n sequence")));
        }
        if entries.last().is_some_and(|e| score > e.score) {
            return Err(bad("scores must be non-increasing".into()));
        }
        entries.push(RunEntry {
            doc_id: f[2].to_string(),
            rank,
            score,
            score_text: Some(f[4].to_string()),
        });
    }
    Ok(run)
}

/// AP with R = judged-relevant count; `None` when R = 0.
pub fn average_precision(ranked: &[&str], qrels: &Qrels, query_id: &str) -> Option<f64> {
    let r = qrels.num_relevant(query_id);
    if r == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if qrels.is_relevant(query_id, d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / r as f64)
}

pub fn precision_at_k(ranked: &[&str], qrels: &Qrels, query_id: &str, k: usize) -> f64 {
    let k = k.max(1);
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| qrels.is_relevant(query_id, d))
        .count();
    hits as f64 / k as f64
}

/// Precision at rank R; `None` when R = 0.
pub fn rprec(ranked: &[&str], qrels: &Qrels, query_id: &str) -> Option<f64> {
    let r = qrels.num_relevant(query_id);
    (r > 0).then(|| precision_at_k(ranked, qrels, query_id, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TTest {
    Test { t: f64, p: f64 },
    /// Every per-query difference is the same non-zero value.
    ZeroVariance { mean_difference: f64 },
}

/// Two-sided paired t-test on per-query score vectors.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "paired t-test needs equal lengths >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest::Test { t: 0.0, p: 1.0 }
        } else {
            TTest::ZeroVariance { mean_difference: mean }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("dof >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest::Test { t, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfile {
    /// Normalized histogram of all relevant documents.
    pub truth: TimeHistogram,
    /// Normalized histogram of relevant documents retrieved in the top R;
    /// empty when none were retrieved.
    pub retrieved: TimeHistogram,
    pub truth_counts: Vec<usize>,
    pub retrieved_counts: Vec<usize>,
    pub emd: f64,
}

/// Temporal distribution of relevant documents retrieved at depth R against
/// the ground truth. When nothing relevant is retrieved the EMD is the number
/// of ground-truth bins.
pub fn temporal_rprec_profile(
    ranked: &[&str],
    qrels: &Qrels,
    query_id: &str,
    timestamp_of: impl Fn(&str) -> Option<i64>,
    period: i64,
) -> Result<Option<TemporalProfile>> {
    let relevant: Vec<&str> = qrels.relevant(query_id);
    let truth_ts: Vec<i64> = relevant.iter().filter_map(|d| timestamp_of(d)).collect();
    if truth_ts.is_empty() {
        return Ok(None);
    }
    let r = relevant.len();
    let retrieved_ts: Vec<i64> = ranked
        .iter()
        .take(r)
        .filter(|d| qrels.is_relevant(query_id, d))
        .filter_map(|d| timestamp_of(d))
        .collect();
    let origin = TimeHistogram::aligned_origin(*truth_ts.iter().min().expect("non-empty"), period);
    let truth = histogram(&truth_ts, &vec![1.0; truth_ts.len()], period, origin)?;
    let bins = truth.masses.len();
    let retrieved = histogram(&retrieved_ts, &vec![1.0; retrieved_ts.len()], period, origin)?;
    let count = |ts: &[i64]| {
        let mut c = vec![0usize; bins];
        ts.iter().for_each(|&t| c[((t - origin) / period) as usize] += 1);
        c
    };
    let emd = if retrieved.is_empty() {
        bins as f64
    } else {
        emd_1d(&truth, &retrieved)?
    };
    Ok(Some(TemporalProfile {
        truth_counts: count(&truth_ts),
        retrieved_counts: count(&retrieved_ts),
        retrieved: if retrieved.is_empty() { retrieved } else { retrieved.padded(bins) },
        truth,
        emd,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub query_id: String,
    pub ap: f64,
    pub p30: f64,
    pub rprec: f64,
    pub emd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub per_query: Vec<QueryMetrics>,
}

impl MetricsReport {
    fn mean(&self, f: impl Fn(&QueryMetrics) -> Option<f64>) -> f64 {
        let v: Vec<f64> = self.per_query.iter().filter_map(f).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn map(&self) -> f64 {
        self.mean(|m| Some(m.ap))
    }

    pub fn p30(&self) -> f64 {
        self.mean(|m| Some(m.p30))
    }

    pub fn rprec(&self) -> f64 {
        self.mean(|m| Some(m.rprec))
    }

    pub fn mean_emd(&self) -> f64 {
        self.mean(|m| m.emd)
    }

    pub fn ap_vector(&self) -> Vec<f64> {
        self.per_query.iter().map(|m| m.ap).collect()
    }

    /// CSV `query_id,AP,P30,Rprec,EMD` with a trailing `all` row of means.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,AP,P30,Rprec,EMD\n");
        let emd = |e: Option<f64>| e.map_or(String::new(), |x| format!("{x:.4}"));
        for m in &self.per_query {
            let _ = writeln!(s, "{},{:.4},{:.4},{:.4},{}", m.query_id, m.ap, m.p30, m.rprec, emd(m.emd));
        }
        let _ = writeln!(
            s,
            "all,{:.4},{:.4},{:.4},{:.4}",
            self.map(),
            self.p30(),
            self.rprec(),
            self.mean_emd()
        );
        s
    }
}

/// Per-query metrics over `query_ids` (default: every judged query). Queries
/// without relevant documents are dropped with a warning.
pub fn evaluate(
    run: &RunFile,
    qrels: &Qrels,
    query_ids: Option<&[String]>,
    timestamp_of: Option<&dyn Fn(&str) -> Option<i64>>,
    period: i64,
) -> Result<MetricsReport> {
    let ids: Vec<String> = match query_ids {
        Some(q) => q.to_vec(),
        None => qrels.query_ids().map(str::to_string).collect(),
    };
    let mut per_query = Vec::new();
    for q in ids {
        let ranked = run.doc_ids(&q);
        let Some(ap) = average_precision(&ranked, qrels, &q) else {
            log::warn!("query {q} has no relevant documents; excluded");
            continue;
        };
        let emd = match timestamp_of {
            Some(f) => temporal_rprec_profile(&ranked, qrels, &q, f, period)?.map(|p| p.emd),
            None => None,
        };
        per_query.push(QueryMetrics {
            ap,
            p30: precision_at_k(&ranked, qrels, &q, 30),
            rprec: rprec(&ranked, qrels, &q).expect("R >= 1"),
            emd,
            query_id: q,
        });
    }
    Ok(MetricsReport { per_query })
}

//! Topic verticals over an external corpus: mini-batch k-means clustering,
//! per-query vertical selection with merged-ranking weights, and the
//! weighted mixture of per-vertical temporal densities.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::retrieval::{search, Hit, Index, QueryModel, ScoredList, Scorer, DEFAULT_MU};
use crate::temporal::{feedback_density, TemporalDensity, WeightScheme, DEFAULT_PERIOD};

pub const DEFAULT_K: usize = 200;
pub const DEFAULT_V_SEL: usize = 3;
pub const DEFAULT_K_MERGE: usize = 50;
pub const DEFAULT_N_FB: usize = 50;

type SparseVec = Vec<(u32, f64)>;

/// L2-normalized ltc TF-IDF vectors, `(1 + ln tf) · ln(N/df)`.
pub fn tfidf_vectors(docs: &[Document]) -> (Vec<SparseVec>, usize) {
    let mut vocab: HashMap<&str, u32> = HashMap::new();
    let mut df: Vec<u32> = Vec::new();
    let mut counts: Vec<BTreeMap<u32, u32>> = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut c: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in &doc.tokens {
            let next = vocab.len() as u32;
            let id = *vocab.entry(tok.as_str()).or_insert(next);
            if id as usize == df.len() {
                df.push(0);
            }
            *c.entry(id).or_insert(0) += 1;
        }
        for &t in c.keys() {
            df[t as usize] += 1;
        }
        counts.push(c);
    }
    let n = docs.len() as f64;
    let vectors = counts
        .into_iter()
        .map(|c| {
            let mut v: SparseVec = c
                .into_iter()
                .map(|(t, tf)| (t, (1.0 + (tf as f64).ln()) * (n / df[t as usize] as f64).ln()))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|(_, w)| *w /= norm);
            }
            v
        })
        .collect();
    (vectors, vocab.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchKMeans {
    pub k: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl MiniBatchKMeans {
    pub fn new(k: usize, seed: u64) -> Self {
        MiniBatchKMeans {
            k,
            batch_size: 256,
            iterations: 100,
            seed,
        }
    }

    /// Cluster index per vector. Deterministic for a fixed seed; no cluster
    /// is left empty.
    pub fn fit(&self, vectors: &[SparseVec], dim: usize) -> Result<Vec<usize>> {
        let n = vectors.len();
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if self.k > n {
            return Err(Error::InvalidParameter(format!("K = {} exceeds {n} documents", self.k)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centers = Centers::init_plus_plus(vectors, dim, self.k, &mut rng);

        let mut counts = vec![0u64; self.k];
        for _ in 0..self.iterations {
            let batch: Vec<usize> = (0..self.batch_size.min(n)).map(|_| rng.random_range(0..n)).collect();
            let nearest: Vec<usize> = batch.iter().map(|&i| centers.nearest(&vectors[i]).0).collect();
            for (&i, &c) in batch.iter().zip(&nearest) {
                counts[c] += 1;
                centers.step_toward(c, &vectors[i], 1.0 / counts[c] as f64);
            }
            centers.refresh_norms();
        }

        let mut assign: Vec<usize> = vectors.iter().map(|v| centers.nearest(v).0).collect();
        // Re-seed empty clusters from the point farthest from its centroid.
        for _ in 0..self.k {
            let mut sizes = vec![0usize; self.k];
            assign.iter().for_each(|&c| sizes[c] += 1);
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|&i| sizes[assign[i]] > 1)
                .max_by(|&a, &b| {
                    let da = centers.dist2(assign[a], &vectors[a]);
                    let db = centers.dist2(assign[b], &vectors[b]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .ok_or_else(|| Error::InvalidParameter("cannot fill empty cluster".into()))?;
            centers.set(empty, &vectors[far]);
            assign = vectors.iter().map(|v| centers.nearest(v).0).collect();
            // a duplicate of `far` may already sit on a lower-index centroid
            assign[far] = empty;
        }
        Ok(assign)
    }
}

struct Centers {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl Centers {
    fn init_plus_plus(vectors: &[SparseVec], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = vectors.len();
        let mut centers = Centers {
            dim,
            data: vec![0.0; k * dim],
            norms: vec![0.0; k],
        };
        let mut chosen = vec![false; n];
        let first = rng.random_range(0..n);
        centers.set(0, &vectors[first]);
        chosen[first] = true;
        let mut d2: Vec<f64> = vectors.iter().map(|v| centers.dist2(0, v)).collect();
        for c in 1..k {
            let total: f64 = (0..n).filter(|&i| !chosen[i]).map(|i| d2[i]).sum();
            let pick = if total > 0.0 {
                let mut r = rng.random_range(0.0..total);
                let mut pick = None;
                for i in (0..n).filter(|&i| !chosen[i]) {
                    r -= d2[i];
                    if r < 0.0 && d2[i] > 0.0 {
                        pick = Some(i);
                        break;
                    }
                }
                pick.unwrap_or_else(|| (0..n).rev().find(|&i| !chosen[i] && d2[i] > 0.0).unwrap())
            } else {
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                free[rng.random_range(0..free.len())]
            };
            chosen[pick] = true;
            centers.set(c, &vectors[pick]);
            for (i, v) in vectors.iter().enumerate() {
                d2[i] = d2[i].min(centers.dist2(c, v));
            }
        }
        centers
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    fn set(&mut self, c: usize, v: &SparseVec) {
        let dim = self.dim;
        let row = &mut self.data[c * dim..(c + 1) * dim];
        row.iter_mut().for_each(|x| *x = 0.0);
        for &(t, w) in v {
            row[t as usize] = w;
        }
        self.norms[c] = v.iter().map(|(_, w)| w * w).sum();
    }

    fn step_toward(&mut self, c: usize, v: &SparseVec, eta: f64) {
        let dim = self.dim;
        let row = &mut self.data[c * dim..(c + 1) * dim];
        row.iter_mut().for_each(|x| *x *= 1.0 - eta);
        for &(t, w) in v {
            row[t as usize] += eta * w;
        }
    }

    fn refresh_norms(&mut self) {
        for c in 0..self.norms.len() {
            self.norms[c] = self.row(c).iter().map(|x| x * x).sum();
        }
    }

    fn dist2(&self, c: usize, v: &SparseVec) -> f64 {
        let row = self.row(c);
        let dot: f64 = v.iter().map(|&(t, w)| w * row[t as usize]).sum();
        let vn: f64 = v.iter().map(|(_, w)| w * w).sum();
        (vn - 2.0 * dot + self.norms[c]).max(0.0)
    }

    fn nearest(&self, v: &SparseVec) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.norms.len() {
            let d = self.dist2(c, v);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }
}

/// Clusters external documents into `k` verticals.
pub fn cluster_verticals(docs: &[Document], k: usize, seed: u64) -> Result<Vec<usize>> {
    let (vectors, dim) = tfidf_vectors(docs);
    MiniBatchKMeans::new(k, seed).fit(&vectors, dim)
}

/// One topical partition of the external corpus with its own index.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertical {
    pub id: usize,
    pub index: Index,
    /// Most distinctive frequent term, for diagnostics.
    pub label: String,
}

/// Builds one vertical per non-empty cluster, ordered by cluster id.
pub fn build_verticals(docs: Vec<Document>, assignment: &[usize]) -> Result<Vec<Vertical>> {
    if docs.len() != assignment.len() {
        return Err(Error::InvalidParameter("assignment length differs from document count".into()));
    }
    let mut groups: BTreeMap<usize, Vec<Document>> = BTreeMap::new();
    for (doc, &c) in docs.into_iter().zip(assignment) {
        groups.entry(c).or_default().push(doc);
    }
    let mut global_cf: HashMap<String, u64> = HashMap::new();
    let mut global_total = 0u64;
    for d in groups.values().flatten() {
        for t in &d.tokens {
            *global_cf.entry(t.clone()).or_insert(0) += 1;
            global_total += 1;
        }
    }
    groups
        .into_iter()
        .map(|(id, docs)| {
            let index = Index::from_documents(docs)?;
            let label = distinctive_term(&index, &global_cf, global_total);
            Ok(Vertical { id, index, label })
        })
        .collect()
}

fn distinctive_term(index: &Index, global_cf: &HashMap<String, u64>, global_total: u64) -> String {
    let total = index.total_terms() as f64;
    let mut best: Option<(f64, &str)> = None;
    for t in 0..index.vocabulary_size() as u32 {
        let term = index.term(t);
        let cf = index.cf_by_id(t) as f64;
        let p_c = cf / total;
        let p_g = global_cf[term] as f64 / global_total as f64;
        let s = cf * (p_c / p_g).ln();
        let better = match best {
            None => true,
            Some((bs, bt)) => s > bs || (s == bs && term < bt),
        };
        if better {
            best = Some((s, term));
        }
    }
    best.map(|(_, t)| t.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub v_sel: usize,
    pub k_merge: usize,
    pub n_fb: usize,
    pub mu: f64,
    pub scheme: WeightScheme,
    pub period: i64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            v_sel: DEFAULT_V_SEL,
            k_merge: DEFAULT_K_MERGE,
            n_fb: DEFAULT_N_FB,
            mu: DEFAULT_MU,
            scheme: WeightScheme::Rank,
            period: DEFAULT_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedVertical {
    pub vertical_id: usize,
    /// Share of the merged ranking contributed by this vertical, |M_c| / |M_k|.
    pub weight: f64,
    pub merged_count: usize,
    pub density: TemporalDensity,
    /// Top `n_fb` documents retrieved from the vertical.
    pub feedback: ScoredList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalSelection {
    pub query_id: String,
    pub merged_size: usize,
    pub selected: Vec<SelectedVertical>,
}

/// Smoothed vertical-level query log-likelihood and whether any query term
/// occurs in the vertical.
pub fn vertical_likelihood(verticals: &[Vertical], v: &Vertical, query: &QueryModel, mu: f64) -> (bool, f64) {
    let global_total: f64 = verticals.iter().map(|v| v.index.total_terms() as f64).sum();
    let mut overlap = false;
    let mut score = 0.0;
    for (term, w) in query.iter() {
        let global_cf: f64 = verticals.iter().map(|v| v.index.cf(term) as f64).sum();
        if global_cf == 0.0 {
            continue;
        }
        let cf = v.index.cf(term) as f64;
        overlap |= cf > 0.0;
        score += w * ((cf + mu * global_cf / global_total) / (v.index.total_terms() as f64 + mu)).ln();
    }
    (overlap, score)
}

/// First stage: the `v_sel` verticals with the highest smoothed query
/// likelihood, verticals sharing a query term ranked ahead of the rest.
pub fn preselect(verticals: &[Vertical], query: &QueryModel, v_sel: usize, mu: f64) -> Vec<usize> {
    let mut scored: Vec<(bool, f64, usize)> = verticals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (o, s) = vertical_likelihood(verticals, v, query, mu);
            (o, s, i)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(verticals[a.2].id.cmp(&verticals[b.2].id))
    });
    scored.into_iter().take(v_sel).map(|(_, _, i)| i).collect()
}

/// Merges per-vertical result lists by score into one ranking of at most
/// `k_merge` entries and returns `|M_c|` per input list.
pub fn merged_counts(lists: &[(usize, &ScoredList)], k_merge: usize) -> (usize, Vec<usize>) {
    let mut merged: Vec<(usize, &Hit)> = lists
        .iter()
        .enumerate()
        .flat_map(|(slot, (_, l))| l.entries.iter().map(move |h| (slot, h)))
        .collect();
    merged.sort_by(|a, b| {
        b.1.score
            .total_cmp(&a.1.score)
            .then(lists[a.0].0.cmp(&lists[b.0].0))
            .then(a.1.doc_id.cmp(&b.1.doc_id))
    });
    merged.truncate(k_merge);
    let mut counts = vec![0usize; lists.len()];
    merged.iter().for_each(|(slot, _)| counts[*slot] += 1);
    (merged.len(), counts)
}

/// Weighted KDE over the vertical's top `n_fb` documents for the query.
pub fn vertical_temporal_density(
    vertical: &Vertical,
    query: &QueryModel,
    params: &SelectionParams,
    query_time: i64,
) -> Result<(TemporalDensity, ScoredList)> {
    if params.n_fb == 0 {
        return Err(Error::InvalidParameter("n_fb must be at least 1".into()));
    }
    let fb = search(
        &vertical.index,
        "",
        query,
        Scorer::LmDirichlet { mu: params.mu },
        params.n_fb,
        query_time,
    );
    let density = feedback_density(&fb, |d| vertical.index.doc(d).timestamp, params.scheme, params.period)?;
    Ok((density, fb))
}

/// Two-stage selection: likelihood pre-selection, then merged-ranking weights.
pub fn select_verticals(
    verticals: &[Vertical],
    query_id: &str,
    query: &QueryModel,
    params: &SelectionParams,
    query_time: i64,
) -> Result<VerticalSelection> {
    if params.v_sel == 0 || params.k_merge < params.v_sel {
        return Err(Error::InvalidParameter(format!(
            "need v_sel >= 1 and k_merge >= v_sel (got {} / {})",
            params.v_sel, params.k_merge
        )));
    }
    let kept = preselect(verticals, query, params.v_sel, params.mu);
    let scorer = Scorer::LmDirichlet { mu: params.mu };
    let lists: Vec<ScoredList> = kept
        .iter()
        .map(|&i| search(&verticals[i].index, query_id, query, scorer, params.k_merge, query_time))
        .collect();
    let keyed: Vec<(usize, &ScoredList)> = kept.iter().map(|&i| verticals[i].id).zip(&lists).collect();
    let (merged_size, counts) = merged_counts(&keyed, params.k_merge);

    let mut selected = Vec::new();
    for (&i, &count) in kept.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        match vertical_temporal_density(&verticals[i], query, params, query_time) {
            Ok((density, feedback)) => selected.push(SelectedVertical {
                vertical_id: verticals[i].id,
                weight: count as f64,
                merged_count: count,
                density,
                feedback: ScoredList {
                    query_id: query_id.to_string(),
                    ..feedback
                },
            }),
            Err(e) => log::warn!("query {query_id}: dropping vertical {}: {e}", verticals[i].id),
        }
    }
    let total: f64 = selected.iter().map(|s| s.weight).sum();
    if selected.is_empty() || total == 0.0 {
        return Err(Error::EmptySelection(query_id.to_string()));
    }
    selected.iter_mut().for_each(|s| s.weight /= total);
    Ok(VerticalSelection {
        query_id: query_id.to_string(),
        merged_size,
        selected,
    })
}

/// Σ_c P(q|c) · f_c(t) over the selected verticals.
pub fn external_temporal_relevance(selection: &VerticalSelection, t: f64) -> f64 {
    selection
        .selected
        .iter()
        .map(|s| s.weight * s.density.eval(t))
        .sum()
}

impl VerticalSelection {
    pub fn density_at(&self, t: f64) -> f64 {
        external_temporal_relevance(self, t)
    }

    pub fn vertical<'a>(&self, verticals: &'a [Vertical], id: usize) -> Option<&'a Vertical> {
        verticals.iter().find(|v| v.id == id)
    }
}

pub fn write_assignment<W: Write>(mut w: W, docs: &[Document], assignment: &[usize]) -> std::io::Result<()> {
    writeln!(w, "doc_id,vertical_id")?;
    for (d, c) in docs.iter().zip(assignment) {
        writeln!(w, "{},{}", d.doc_id, c)?;
    }
    Ok(())
}

pub fn read_assignment<R: BufRead>(r: R, source: &str) -> Result<HashMap<String, usize>> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() || (i == 0 && line.starts_with("doc_id")) {
            continue;
        }
        let (doc, c) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(source, i + 1, "expected doc_id,vertical_id"))?;
        let c = c
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, i + 1, format!("bad vertical id {c:?}")))?;
        out.insert(doc.to_string(), c);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct VerticalMeta {
    id: usize,
    label: String,
}

/// Writes `dir/<id>/index.json` and `dir/<id>/meta.json` per vertical.
pub fn save_verticals(dir: &Path, verticals: &[Vertical]) -> Result<()> {
    for v in verticals {
        let vdir = dir.join(v.id.to_string());
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        let mut index = Vec::new();
        v.index.write_json(&mut index)?;
        crate::write_atomic(&vdir.join("index.json"), &index)?;
        let meta = serde_json::to_string(&VerticalMeta {
            id: v.id,
            label: v.label.clone(),
        })
        .expect("plain struct");
        crate::write_atomic(&vdir.join("meta.json"), meta.as_bytes())?;
    }
    Ok(())
}

pub fn load_verticals(dir: &Path) -> Result<Vec<Vertical>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let vdir = entry.path();
        let meta_path = vdir.join("meta.json");
        if !meta_path.exists() {
            continue;
        }
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: VerticalMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::parse(meta_path.display().to_string(), e.line(), e.to_string()))?;
        let path = vdir.join("index.json");
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let index = Index::read_json(std::io::BufReader::new(f))?;
        out.push(Vertical {
            id: meta.id,
            index,
            label: meta.label,
        });
    }
    out.sort_by_key(|v| v.id);
    Ok(out)
}

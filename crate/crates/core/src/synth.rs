//! Seeded synthetic corpora with planted temporal bursts and ground truth.
//!
//! Each query owns a small topic vocabulary: core terms (the query itself),
//! per-burst event terms, generic topic terms and distractor terms. Relevant
//! posts cluster around the query's burst windows; lexically similar noise
//! posts are spread over the whole span, plus a decoy burst that only exists
//! in the main corpus. The external corpus repeats the topical posts with the
//! same burst timing next to unrelated background topics.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::Record;
use crate::error::{Error, Result};
use crate::eval::{write_topics, Qrels, Topic};
use crate::temporal::DAY;
use crate::write_atomic;

/// 2013-02-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_359_676_800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstWindow {
    pub start: i64,
    pub end: i64,
}

impl BurstWindow {
    pub fn contains(&self, t: i64) -> bool {
        (self.start..=self.end).contains(&t)
    }

    fn center(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_queries: usize,
    /// Main corpus size, background posts included.
    pub corpus_size: usize,
    pub external_size: usize,
    /// Background vocabulary size.
    pub vocabulary_size: usize,
    pub start: i64,
    pub span_days: i64,
    pub burst_width: i64,
    pub max_bursts: usize,
    /// Fraction of relevant posts timestamped inside a burst window.
    pub concentration: f64,
    pub external_concentration: f64,
    pub relevant_per_query: usize,
    pub external_per_query: usize,
    /// Uniform lexical-noise posts per relevant post.
    pub noise_rate: f64,
    /// Decoy-burst posts per relevant post (main corpus only).
    pub decoy_rate: f64,
    pub external_noise_rate: f64,
    pub external_topics: usize,
    /// Explicit per-query windows; generated when empty.
    pub bursts: Vec<Vec<BurstWindow>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_queries: 20,
            corpus_size: 20_000,
            external_size: 5_000,
            vocabulary_size: 5_000,
            start: DEFAULT_START,
            span_days: 60,
            burst_width: 2 * DAY,
            max_bursts: 2,
            concentration: 0.8,
            external_concentration: 0.9,
            relevant_per_query: 40,
            external_per_query: 60,
            noise_rate: 1.5,
            decoy_rate: 0.4,
            external_noise_rate: 0.2,
            external_topics: 20,
            bursts: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn end(&self) -> i64 {
        self.start + self.span_days * DAY
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return bad(format!("concentration {} outside (0, 1]", self.concentration));
        }
        if !(0.0..=1.0).contains(&self.external_concentration) {
            return bad(format!("external concentration {} outside [0, 1]", self.external_concentration));
        }
        if self.n_queries == 0 || self.relevant_per_query == 0 || self.max_bursts == 0 {
            return bad("need at least one query, relevant post and burst".into());
        }
        if self.span_days <= 0 || self.burst_width <= 0 || self.burst_width * 4 > self.span_days * DAY {
            return bad(format!(
                "burst width {}s does not fit a {}-day span",
                self.burst_width, self.span_days
            ));
        }
        if self.vocabulary_size < 10 {
            return bad("vocabulary too small".into());
        }
        if !self.bursts.is_empty() && self.bursts.len() != self.n_queries {
            return bad(format!("{} burst lists for {} queries", self.bursts.len(), self.n_queries));
        }
        for (q, ws) in self.bursts.iter().enumerate() {
            if ws.is_empty() {
                return bad(format!("query {q} has no burst window"));
            }
            for w in ws {
                if w.start >= w.end || w.start < self.start || w.end > self.end() {
                    return bad(format!(
                        "burst [{}, {}] of query {q} lies outside the span [{}, {}]",
                        w.start,
                        w.end,
                        self.start,
                        self.end()
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBursts {
    pub query_id: String,
    pub windows: Vec<BurstWindow>,
    pub decoy: BurstWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBench {
    pub corpus: Vec<Record>,
    pub external: Vec<Record>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
    pub bursts: Vec<QueryBursts>,
}

impl SynthBench {
    pub fn bursts_for(&self, query_id: &str) -> Option<&QueryBursts> {
        self.bursts.iter().find(|b| b.query_id == query_id)
    }

    /// Writes corpus.jsonl, external.jsonl, topics.tsv, qrels.txt and
    /// bursts.tsv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("corpus.jsonl"), jsonl(&self.corpus)?.as_bytes())?;
        write_atomic(&dir.join("external.jsonl"), jsonl(&self.external)?.as_bytes())?;
        write_atomic(&dir.join("topics.tsv"), write_topics(&self.topics).as_bytes())?;
        write_atomic(&dir.join("qrels.txt"), self.qrels.to_trec().as_bytes())?;
        let mut b = String::from("query_id\tkind\tstart\tend\n");
        for qb in &self.bursts {
            for w in &qb.windows {
                b.push_str(&format!("{}\tburst\t{}\t{}\n", qb.query_id, w.start, w.end));
            }
            b.push_str(&format!("{}\tdecoy\t{}\t{}\n", qb.query_id, qb.decoy.start, qb.decoy.end));
        }
        write_atomic(&dir.join("bursts.tsv"), b.as_bytes())
    }
}

fn jsonl(records: &[Record]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).map_err(|e| Error::InvalidParameter(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Distinct pronounceable pseudo-word for every index (bijective base-70
/// over consonant-vowel syllables).
pub fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut syllables = Vec::new();
    loop {
        let s = i % base;
        syllables.push([CONSONANTS[s / VOWELS.len()], VOWELS[s % VOWELS.len()]]);
        if i < base {
            break;
        }
        i = i / base - 1;
    }
    // two syllables minimum keeps words clear of short common tokens
    if syllables.len() == 1 {
        syllables.push([b'x', b'a']);
    }
    syllables.iter().rev().flatten().map(|&b| b as char).collect()
}

struct QueryVocab {
    core: Vec<String>,
    event: Vec<Vec<String>>,
    topic: Vec<String>,
    distractor: Vec<String>,
    decoy: Vec<String>,
}

struct Words {
    next: usize,
}

impl Words {
    fn take(&mut self, n: usize) -> Vec<String> {
        let out = (self.next..self.next + n).map(pseudo_word).collect();
        self.next += n;
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Relevant,
    Noise,
    Background,
}

struct Draft {
    timestamp: i64,
    tokens: Vec<String>,
    kind: Kind,
    /// (query index, grade) for judged posts.
    judged: Option<(usize, u8)>,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    background: Vec<String>,
    zipf: Zipf<f64>,
}

impl Generator<'_> {
    fn background_tokens(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                let r = self.zipf.sample(&mut self.rng) as usize;
                self.background[(r - 1).min(self.background.len() - 1)].clone()
            })
            .collect()
    }

    fn pick(&mut self, from: &[String], lo: usize, hi: usize) -> Vec<String> {
        let n = self.rng.random_range(lo..=hi).min(from.len());
        from.choose_multiple(&mut self.rng, n).cloned().collect()
    }

    fn uniform_time(&mut self) -> i64 {
        self.rng.random_range(self.cfg.start..self.cfg.end())
    }

    fn burst_time(&mut self, w: &BurstWindow) -> i64 {
        let sd = (w.end - w.start) as f64 / 4.0;
        let normal = Normal::new(w.center(), sd).expect("positive width");
        loop {
            let t = normal.sample(&mut self.rng).round() as i64;
            if w.contains(t) {
                return t;
            }
        }
    }

    fn off_burst_time(&mut self, windows: &[BurstWindow]) -> i64 {
        loop {
            let t = self.uniform_time();
            if !windows.iter().any(|w| w.contains(t)) {
                return t;
            }
        }
    }

    fn place_windows(&mut self, n: usize, avoid: &[BurstWindow]) -> Result<Vec<BurstWindow>> {
        let width = self.cfg.burst_width;
        let lo = self.cfg.start + width;
        let hi = self.cfg.end() - 2 * width;
        let mut out: Vec<BurstWindow> = Vec::new();
        let mut tries = 0;
        while out.len() < n {
            tries += 1;
            if tries > 10_000 || hi <= lo {
                return Err(Error::InvalidParameter(format!(
                    "cannot place {n} non-overlapping bursts of width {width}s in the span"
                )));
            }
            let s = self.rng.random_range(lo..hi);
            let w = BurstWindow { start: s, end: s + width };
            let clear = out.iter().chain(avoid).all(|o| w.start > o.end + 2 * width || w.end + 2 * width < o.start);
            if clear {
                out.push(w);
            }
        }
        out.sort_by_key(|w| w.start);
        Ok(out)
    }

    fn metadata(&mut self, kind: Kind, tokens: &mut Vec<String>) -> (String, Option<u64>, Option<u64>, bool) {
        let (p_url, mu) = match kind {
            Kind::Relevant => (0.6, 7.0),
            Kind::Noise => (0.25, 5.0),
            Kind::Background => (0.3, 5.5),
        };
        let followers = LogNormal::new(mu, 1.5).expect("valid").sample(&mut self.rng) as u64;
        let statuses = LogNormal::new(8.0, 1.0).expect("valid").sample(&mut self.rng) as u64;
        let reply = kind != Kind::Relevant && self.rng.random_bool(0.2);
        let mut text = String::new();
        if reply {
            text.push_str(&format!("@{} ", pseudo_word(self.rng.random_range(0..500))));
        }
        tokens.shuffle(&mut self.rng);
        text.push_str(&tokens.join(" "));
        if self.rng.random_bool(0.15) {
            let tag = tokens.choose(&mut self.rng).cloned().unwrap_or_default();
            text.push_str(&format!(" #{tag}"));
        }
        if self.rng.random_bool(p_url) {
            text.push_str(&format!(" http://t.co/{}", pseudo_word(self.rng.random_range(0..100_000))));
        }
        (text, Some(followers), Some(statuses), reply)
    }
}

/// Builds the benchmark. Identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthBench> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        background: (0..cfg.vocabulary_size).map(pseudo_word).collect(),
        zipf: Zipf::new(cfg.vocabulary_size as f64, 1.05).map_err(|e| Error::InvalidParameter(e.to_string()))?,
    };
    let mut words = Words {
        next: cfg.vocabulary_size,
    };

    let mut vocabs = Vec::new();
    let mut bursts = Vec::new();
    let mut topics = Vec::new();
    for q in 0..cfg.n_queries {
        let query_id = format!("SQ{:03}", q + 1);
        let windows = match cfg.bursts.get(q) {
            Some(ws) => ws.clone(),
            None => {
                let n = g.rng.random_range(1..=cfg.max_bursts);
                g.place_windows(n, &[])?
            }
        };
        let decoy = g.place_windows(1, &windows)?[0];
        let core = words.take(3);
        vocabs.push(QueryVocab {
            event: windows.iter().map(|_| words.take(5)).collect(),
            topic: words.take(6),
            distractor: words.take(6),
            decoy: words.take(4),
            core: core.clone(),
        });
        topics.push(Topic {
            query_id: query_id.clone(),
            text: core.join(" "),
            query_time: cfg.end(),
        });
        bursts.push(QueryBursts {
            query_id,
            windows,
            decoy,
        });
    }

    let mut main: Vec<Draft> = Vec::new();
    let mut ext: Vec<Draft> = Vec::new();
    for q in 0..cfg.n_queries {
        let v = &vocabs[q];
        let qb = bursts[q].clone();
        topical_posts(&mut g, v, &qb, q, cfg.relevant_per_query, cfg.concentration, &mut main);
        let n_noise = (cfg.relevant_per_query as f64 * cfg.noise_rate).round() as usize;
        for _ in 0..n_noise {
            let mut tokens = g.pick(&v.core, 1, 2);
            tokens.extend(g.pick(&v.distractor, 1, 3));
            let n_bg = g.rng.random_range(4..=9);
            tokens.extend(g.background_tokens(n_bg));
            let timestamp = g.uniform_time();
            main.push(Draft {
                timestamp,
                tokens,
                kind: Kind::Noise,
                judged: Some((q, 0)),
            });
        }
        let n_decoy = (cfg.relevant_per_query as f64 * cfg.decoy_rate).round() as usize;
        for _ in 0..n_decoy {
            let mut tokens = g.pick(&v.core, 1, 2);
            tokens.extend(g.pick(&v.decoy, 1, 3));
            let n_bg = g.rng.random_range(4..=9);
            tokens.extend(g.background_tokens(n_bg));
            let timestamp = g.burst_time(&qb.decoy);
            main.push(Draft {
                timestamp,
                tokens,
                kind: Kind::Noise,
                judged: Some((q, 0)),
            });
        }

        topical_posts(&mut g, v, &qb, q, cfg.external_per_query, cfg.external_concentration, &mut ext);
        let n_ext_noise = (cfg.external_per_query as f64 * cfg.external_noise_rate).round() as usize;
        for _ in 0..n_ext_noise {
            let mut tokens = g.pick(&v.core, 1, 1);
            tokens.extend(g.pick(&v.distractor, 1, 3));
            let n_bg = g.rng.random_range(4..=9);
            tokens.extend(g.background_tokens(n_bg));
            let timestamp = g.uniform_time();
            ext.push(Draft {
                timestamp,
                tokens,
                kind: Kind::Noise,
                judged: None,
            });
        }
    }
    if main.len() > cfg.corpus_size {
        return Err(Error::InvalidParameter(format!(
            "{} topical posts exceed the main corpus size {}",
            main.len(),
            cfg.corpus_size
        )));
    }
    if ext.len() > cfg.external_size {
        return Err(Error::InvalidParameter(format!(
            "{} topical posts exceed the external corpus size {}",
            ext.len(),
            cfg.external_size
        )));
    }
    while main.len() < cfg.corpus_size {
        let n_bg = g.rng.random_range(6..=12);
        let tokens = g.background_tokens(n_bg);
        let timestamp = g.uniform_time();
        main.push(Draft {
            timestamp,
            tokens,
            kind: Kind::Background,
            judged: None,
        });
    }
    let themes: Vec<Vec<String>> = (0..cfg.external_topics).map(|_| words.take(8)).collect();
    while ext.len() < cfg.external_size {
        let mut tokens = if themes.is_empty() {
            Vec::new()
        } else {
            let theme = themes[g.rng.random_range(0..themes.len())].clone();
            g.pick(&theme, 2, 4)
        };
        let n_bg = g.rng.random_range(4..=8);
        tokens.extend(g.background_tokens(n_bg));
        let timestamp = g.uniform_time();
        ext.push(Draft {
            timestamp,
            tokens,
            kind: Kind::Background,
            judged: None,
        });
    }

    let mut qrels = Qrels::default();
    let corpus = finalize(&mut g, main, "d", &bursts, Some(&mut qrels))?;
    let external = finalize(&mut g, ext, "e", &bursts, None)?;
    Ok(SynthBench {
        corpus,
        external,
        topics,
        qrels,
        bursts,
    })
}

fn topical_posts(
    g: &mut Generator<'_>,
    v: &QueryVocab,
    qb: &QueryBursts,
    q: usize,
    n: usize,
    concentration: f64,
    out: &mut Vec<Draft>,
) {
    let inside = (n as f64 * concentration).round() as usize;
    for i in 0..n {
        let (timestamp, mut tokens) = if i < inside {
            let b = i % qb.windows.len();
            let t = g.burst_time(&qb.windows[b]);
            let mut tokens = g.pick(&v.core, 1, 3);
            tokens.extend(g.pick(&v.event[b], 2, 3));
            (t, tokens)
        } else {
            let t = g.off_burst_time(&qb.windows);
            let mut tokens = g.pick(&v.core, 2, 3);
            tokens.extend(g.pick(&v.topic, 1, 2));
            (t, tokens)
        };
        let n_bg = g.rng.random_range(3..=7);
        tokens.extend(g.background_tokens(n_bg));
        let grade = if i < inside { 2 } else { 1 };
        out.push(Draft {
            timestamp,
            tokens,
            kind: Kind::Relevant,
            judged: Some((q, grade)),
        });
    }
}

/// Orders drafts by time, assigns ids and renders records.
fn finalize(
    g: &mut Generator<'_>,
    mut drafts: Vec<Draft>,
    prefix: &str,
    bursts: &[QueryBursts],
    mut qrels: Option<&mut Qrels>,
) -> Result<Vec<Record>> {
    // stable sort keeps generation order for equal timestamps
    drafts.sort_by_key(|d| d.timestamp);
    let width = drafts.len().to_string().len().max(5);
    let mut out = Vec::with_capacity(drafts.len());
    for (i, mut d) in drafts.into_iter().enumerate() {
        let id = format!("{prefix}{i:0width$}");
        let (text, followers, statuses, reply) = g.metadata(d.kind, &mut d.tokens);
        if let (Some(qr), Some((q, grade))) = (qrels.as_deref_mut(), d.judged) {
            qr.insert(&bursts[q].query_id, &id, grade)?;
        }
        out.push(Record {
            id,
            timestamp: d.timestamp,
            text,
            followers_count: followers,
            statuses_count: statuses,
            is_reply: Some(reply),
            is_retweet: None,
            account_id: Some(format!("u{}", g.rng.random_range(0..2_000))),
        });
    }
    Ok(out)
}

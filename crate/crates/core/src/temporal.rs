//! Temporal relevance estimation: weighted Gaussian KDE over feedback
//! timestamps, discrete time histograms and the 1-D earth mover's distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::ScoredList;

pub const HOUR: i64 = 3_600;
pub const DAY: i64 = 86_400;
pub const DEFAULT_PERIOD: i64 = DAY;
/// Floor applied before taking the log of a density.
pub const DENSITY_FLOOR: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Silverman's rule of thumb, `1.06 σ n^(-1/5)`, with the sample (n − 1)
/// standard deviation.
pub fn silverman_bandwidth(timestamps: &[f64]) -> Result<f64> {
    let n = timestamps.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("{n} sample(s)")));
    }
    let mean = timestamps.iter().sum::<f64>() / n as f64;
    let var = timestamps.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(Error::DegenerateSample("zero variance".into()));
    }
    Ok(1.06 * sigma * (n as f64).powf(-0.2))
}

/// Bandwidth used when Silverman's rule is undefined (one sample or zero spread).
pub fn fallback_bandwidth(period: i64) -> f64 {
    (HOUR as f64).max(period as f64 / 100.0)
}

/// Weighted Gaussian kernel density over timestamps (seconds).
///
/// Weights are rescaled to sum to `n`, so the `1/(n h)` prefactor yields a
/// proper density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDensity {
    timestamps: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl TemporalDensity {
    pub fn fit(timestamps: &[f64], weights: &[f64], bandwidth: Option<f64>) -> Result<Self> {
        Self::fit_with_period(timestamps, weights, bandwidth, DEFAULT_PERIOD)
    }

    /// As [`fit`](Self::fit), with `period` driving the degenerate-sample fallback.
    pub fn fit_with_period(
        timestamps: &[f64],
        weights: &[f64],
        bandwidth: Option<f64>,
        period: i64,
    ) -> Result<Self> {
        let n = timestamps.len();
        if n == 0 {
            return Err(Error::DegenerateSample("no samples".into()));
        }
        if weights.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {n} timestamps",
                weights.len()
            )));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeights);
        }
        let bandwidth = match bandwidth {
            Some(h) if h > 0.0 && h.is_finite() => h,
            Some(h) => return Err(Error::InvalidParameter(format!("bandwidth {h}"))),
            None => silverman_bandwidth(timestamps).unwrap_or_else(|_| fallback_bandwidth(period)),
        };
        let scale = n as f64 / total;
        Ok(TemporalDensity {
            timestamps: timestamps.to_vec(),
            weights: weights.iter().map(|w| w * scale).collect(),
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// f(t) = 1/(n h) Σ ω_d φ((t − t_d)/h).
    pub fn eval(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self
            .timestamps
            .iter()
            .zip(&self.weights)
            .map(|(td, w)| {
                let z = (t - td) / h;
                w * (-0.5 * z * z).exp()
            })
            .sum();
        sum * INV_SQRT_2PI / (self.timestamps.len() as f64 * h)
    }

    pub fn log_eval(&self, t: f64) -> f64 {
        self.eval(t).max(DENSITY_FLOOR).ln()
    }

    /// Sample span padded by `pad` bandwidths on each side.
    pub fn support(&self, pad: f64) -> (f64, f64) {
        let lo = self.timestamps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.timestamps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - pad * self.bandwidth, hi + pad * self.bandwidth)
    }

    /// `(t, f(t))` at `points` evenly spaced instants over `[lo, hi]`.
    pub fn grid(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        let step = (hi - lo) / (points - 1) as f64;
        (0..points)
            .map(|i| {
                let t = lo + step * i as f64;
                (t, self.eval(t))
            })
            .collect()
    }
}

/// Free-function form of [`TemporalDensity::fit`].
pub fn kde_fit(timestamps: &[f64], weights: &[f64], bandwidth: Option<f64>) -> Result<TemporalDensity> {
    TemporalDensity::fit(timestamps, weights, bandwidth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Softmax over retrieval log-scores.
    Score,
    /// Proportional to 1/rank.
    #[default]
    Rank,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(WeightScheme::Score),
            "rank" => Ok(WeightScheme::Rank),
            _ => Err(Error::InvalidParameter(format!("unknown weighting scheme {s:?}"))),
        }
    }
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightScheme::Score => "score",
            WeightScheme::Rank => "rank",
        })
    }
}

/// Per-document timestamp weights for a feedback list, summing to its length.
pub fn feedback_weights(scored: &ScoredList, scheme: WeightScheme) -> Vec<f64> {
    let n = scored.len();
    if n == 0 {
        return Vec::new();
    }
    let raw: Vec<f64> = match scheme {
        WeightScheme::Score => {
            let max = scored
                .entries
                .iter()
                .map(|h| h.score)
                .fold(f64::NEG_INFINITY, f64::max);
            scored.entries.iter().map(|h| (h.score - max).exp()).collect()
        }
        WeightScheme::Rank => (1..=n).map(|r| 1.0 / r as f64).collect(),
    };
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w * n as f64 / total).collect()
}

/// Fits a KDE over the timestamps of a feedback list.
pub fn feedback_density(
    scored: &ScoredList,
    timestamp_of: impl Fn(u32) -> i64,
    scheme: WeightScheme,
    period: i64,
) -> Result<TemporalDensity> {
    if scored.is_empty() {
        return Err(Error::EmptyFeedback(format!("query {}", scored.query_id)));
    }
    let ts: Vec<f64> = scored.entries.iter().map(|h| timestamp_of(h.doc) as f64).collect();
    TemporalDensity::fit_with_period(&ts, &feedback_weights(scored, scheme), None, period)
}

/// Normalized mass per fixed-length period starting at `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeHistogram {
    pub period: i64,
    pub origin: i64,
    pub masses: Vec<f64>,
}

impl TimeHistogram {
    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Start of the period containing `t`, aligned to multiples of `period`.
    pub fn aligned_origin(t: i64, period: i64) -> i64 {
        t.div_euclid(period) * period
    }

    pub fn bin_of(&self, t: i64) -> Option<usize> {
        let off = t - self.origin;
        (off >= 0).then(|| (off / self.period) as usize)
    }

    /// Extends the histogram with empty bins up to `len`.
    pub fn padded(mut self, len: usize) -> Self {
        if self.masses.len() < len {
            self.masses.resize(len, 0.0);
        }
        self
    }
}

pub fn histogram(timestamps: &[i64], weights: &[f64], period: i64, origin: i64) -> Result<TimeHistogram> {
    if period <= 0 {
        return Err(Error::InvalidParameter(format!("period {period}")));
    }
    if weights.len() != timestamps.len() {
        return Err(Error::InvalidParameter("weights/timestamps length mismatch".into()));
    }
    let mut masses: Vec<f64> = Vec::new();
    for (&t, &w) in timestamps.iter().zip(weights) {
        if t < origin {
            return Err(Error::InvalidParameter(format!("timestamp {t} before origin {origin}")));
        }
        let bin = ((t - origin) / period) as usize;
        if bin >= masses.len() {
            masses.resize(bin + 1, 0.0);
        }
        masses[bin] += w;
    }
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter_mut().for_each(|m| *m /= total);
    } else {
        masses.clear();
    }
    Ok(TimeHistogram {
        period,
        origin,
        masses,
    })
}

/// Earth mover's distance in bins: Σ_i |CDF_a(i) − CDF_b(i)|.
pub fn emd_1d(a: &TimeHistogram, b: &TimeHistogram) -> Result<f64> {
    if a.period != b.period {
        return Err(Error::BinningMismatch(format!("periods {} vs {}", a.period, b.period)));
    }
    if (a.origin - b.origin).rem_euclid(a.period) != 0 {
        return Err(Error::BinningMismatch("origins not aligned to the period".into()));
    }
    if a.is_empty() != b.is_empty() {
        return Err(Error::BinningMismatch("one histogram is empty".into()));
    }
    let origin = a.origin.min(b.origin);
    let off_a = ((a.origin - origin) / a.period) as usize;
    let off_b = ((b.origin - origin) / b.period) as usize;
    let len = (off_a + a.masses.len()).max(off_b + b.masses.len());
    let at = |h: &TimeHistogram, off: usize, i: usize| {
        i.checked_sub(off).and_then(|j| h.masses.get(j)).copied().unwrap_or(0.0)
    };
    let (mut ca, mut cb, mut total) = (0.0, 0.0, 0.0);
    for i in 0..len {
        ca += at(a, off_a, i);
        cb += at(b, off_b, i);
        total += (ca - cb).abs();
    }
    Ok(total)
}

//! Histogram estimates of the Kullback-Leibler divergence `∫ p ln(p / q)`.

use serde::{Deserialize, Serialize};

pub const DEFAULT_KL_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlOptions {
    pub bins: usize,
    /// Pseudo-count added to every histogram bin.
    pub smoothing: f64,
}

impl Default for KlOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_KL_BINS,
            smoothing: 1.0,
        }
    }
}

fn range(samples: &[f64]) -> (f64, f64) {
    samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if !(x >= lo && x <= hi) {
            continue;
        }
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1.0;
    }
    counts
}

fn smoothed(counts: &[f64], smoothing: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + smoothing * counts.len() as f64;
    counts.iter().map(|c| (c + smoothing) / total).collect()
}

/// Divergence of the `q` sample away from the `p` sample, both histogrammed on
/// equal-width bins over the pooled range with additive smoothing.
pub fn empirical_kl(p_samples: &[f64], q_samples: &[f64], opts: &KlOptions) -> f64 {
    if p_samples.is_empty() || q_samples.is_empty() || opts.bins == 0 {
        return 0.0;
    }
    let (plo, phi) = range(p_samples);
    let (qlo, qhi) = range(q_samples);
    let (lo, hi) = (plo.min(qlo), phi.max(qhi));
    if !(hi > lo) {
        return 0.0;
    }
    let p = smoothed(&histogram(p_samples, lo, hi, opts.bins), opts.smoothing);
    let q = smoothed(&histogram(q_samples, lo, hi, opts.bins), opts.smoothing);
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// A sample reduced to smoothed bin probabilities over its own range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSample {
    pub lo: f64,
    pub hi: f64,
    pub probs: Vec<f64>,
}

impl BinnedSample {
    /// `None` for an empty sample or one without spread.
    pub fn new(samples: &[f64], opts: &KlOptions) -> Option<Self> {
        if samples.is_empty() || opts.bins == 0 {
            return None;
        }
        let (lo, hi) = range(samples);
        if !(hi > lo) {
            return None;
        }
        let probs = smoothed(&histogram(samples, lo, hi, opts.bins), opts.smoothing);
        Some(Self { lo, hi, probs })
    }

    pub fn edges(&self) -> Vec<f64> {
        let bins = self.probs.len();
        let width = (self.hi - self.lo) / bins as f64;
        (0..=bins)
            .map(|i| {
                if i == bins {
                    self.hi
                } else {
                    self.lo + i as f64 * width
                }
            })
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges()
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    /// Histogram density of another sample on these bins (unsmoothed).
    pub fn density_of(&self, samples: &[f64]) -> Vec<f64> {
        let bins = self.probs.len();
        let width = (self.hi - self.lo) / bins as f64;
        let counts = histogram(samples, self.lo, self.hi, bins);
        let n = samples.len().max(1) as f64;
        counts.iter().map(|c| c / (n * width)).collect()
    }

    /// Divergence of the model given by `cdf` away from this sample. Model
    /// mass outside the sample range is lost, which only increases the
    /// divergence.
    pub fn kl_to_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let edges = self.edges();
        let mut prev = cdf(edges[0]);
        let mut kl = 0.0;
        for (pi, edge) in self.probs.iter().zip(&edges[1..]) {
            let next = cdf(*edge);
            let qi = (next - prev).max(1e-300);
            prev = next;
            kl += pi * (pi / qi).ln();
        }
        if kl.is_finite() {
            kl.max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Divergence of a model distribution (given by its CDF) away from the `p`
/// sample, over the range of the sample.
pub fn kl_to_model<F: Fn(f64) -> f64>(p_samples: &[f64], cdf: F, opts: &KlOptions) -> f64 {
    if p_samples.is_empty() || opts.bins == 0 {
        return 0.0;
    }
    match BinnedSample::new(p_samples, opts) {
        Some(b) => b.kl_to_cdf(cdf),
        None => f64::INFINITY,
    }
}

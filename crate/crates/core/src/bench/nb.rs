//! Naive Bayes with Gaussian kernel density estimates.

use std::f64::consts::PI;

use super::{Classifier, Matrix, Model};

/// Relative bandwidth floor, as a fraction of the feature's range.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;
/// Kernel terms beyond this many bandwidths are ignored.
const WINDOW: f64 = 9.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveBayesKde;

/// Silverman's rule of thumb on sorted samples, falling back to the standard
/// deviation when the interquartile range is zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let mut lo = sd.min(iqr / 1.34);
    if lo <= 0.0 {
        lo = sd;
    }
    0.9 * lo * (n as f64).powf(-0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

#[derive(Debug, Clone)]
struct Kde {
    samples: Vec<f64>,
    h: f64,
    log_norm: f64,
}

impl Kde {
    fn new(mut samples: Vec<f64>, range: f64) -> Kde {
        samples.sort_by(f64::total_cmp);
        let mut h = silverman_bandwidth(&samples).max(BANDWIDTH_FLOOR * range);
        if h <= 0.0 || !h.is_finite() {
            h = 1.0;
        }
        let log_norm = -((samples.len() as f64) * h * (2.0 * PI).sqrt()).ln();
        Kde { samples, h, log_norm }
    }

    fn log_density(&self, x: f64) -> f64 {
        let s = &self.samples;
        let lo = s.partition_point(|v| *v < x - WINDOW * self.h);
        let hi = s.partition_point(|v| *v <= x + WINDOW * self.h);
        let z = |v: f64| -0.5 * ((x - v) / self.h).powi(2);
        if lo == hi {
            let near = [lo.checked_sub(1), (lo < s.len()).then_some(lo)];
            let best = near.into_iter().flatten().map(|i| z(s[i])).fold(f64::NEG_INFINITY, f64::max);
            return self.log_norm + best;
        }
        let terms: Vec<f64> = s[lo..hi].iter().map(|v| z(*v)).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.log_norm + m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }
}

#[derive(Debug, Clone)]
pub struct NbModel {
    features: Vec<usize>,
    /// Per class: log prior and one estimate per feature; `None` when the
    /// class had no training rows.
    classes: Vec<Option<(f64, Vec<Kde>)>>,
}

impl NbModel {
    pub fn fit(data: &Matrix, rows: &[usize], features: &[usize]) -> NbModel {
        let ranges: Vec<f64> = features
            .iter()
            .map(|&j| {
                let (lo, hi) = rows
                    .iter()
                    .map(|&r| data.value(r, j))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                if hi > lo {
                    hi - lo
                } else {
                    0.0
                }
            })
            .collect();
        let classes = (0..data.classes.len())
            .map(|c| {
                let members: Vec<usize> = rows.iter().copied().filter(|&r| data.y[r] == c).collect();
                if members.is_empty() {
                    return None;
                }
                let prior = (members.len() as f64 / rows.len() as f64).ln();
                let kdes = features
                    .iter()
                    .zip(&ranges)
                    .map(|(&j, &range)| Kde::new(members.iter().map(|&r| data.value(r, j)).collect(), range))
                    .collect();
                Some((prior, kdes))
            })
            .collect();
        NbModel { features: features.to_vec(), classes }
    }

    pub fn log_prior(&self, class: usize) -> f64 {
        self.classes[class].as_ref().map_or(f64::NEG_INFINITY, |(p, _)| *p)
    }

    /// Log density of feature `slot` (position in the fitted feature list)
    /// under `class`.
    pub fn log_density(&self, class: usize, slot: usize, x: f64) -> f64 {
        self.classes[class].as_ref().map_or(f64::NEG_INFINITY, |(_, k)| k[slot].log_density(x))
    }

    pub fn bandwidth(&self, class: usize, slot: usize) -> Option<f64> {
        self.classes[class].as_ref().map(|(_, k)| k[slot].h)
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }
}

impl Model for NbModel {
    fn scores(&self, row: &[f64]) -> Vec<f64> {
        (0..self.classes.len())
            .map(|c| {
                self.features
                    .iter()
                    .enumerate()
                    .fold(self.log_prior(c), |acc, (slot, &j)| acc + self.log_density(c, slot, row[j]))
            })
            .collect()
    }
}

impl Classifier for NaiveBayesKde {
    fn name(&self) -> &str {
        "nb"
    }

    fn fit(&self, data: &Matrix, rows: &[usize], features: &[usize]) -> Box<dyn Model> {
        Box::new(NbModel::fit(data, rows, features))
    }
}

//! Stratified cross-validation and the metrics derived from it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{BenchError, Classifier, Matrix};
use crate::dataset::LabelSchema;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub k: usize,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
    pub stratify_on: LabelSchema,
}

impl Split {
    pub fn fold_rows(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&r| self.assignments[r] != fold)
    }
}

/// Shuffles each class with a generator seeded by `seed`, then deals rows
/// to folds round-robin, continuing the rotation from one class to the next.
pub fn stratified_kfold(y: &[usize], k: usize, seed: u64, stratify_on: LabelSchema) -> Result<Split, BenchError> {
    if k < 2 || k > y.len() {
        return Err(BenchError::Folds { k, rows: y.len() });
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignments = vec![0; y.len()];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&r| y[r] == c).collect();
        members.shuffle(&mut rng);
        for r in members {
            assignments[r] = next % k;
            next += 1;
        }
    }
    Ok(Split { k, assignments, stratify_on })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// One point per distinct score (predict positive when `score >= threshold`)
/// plus a final point at `+inf`, in ascending threshold order.
pub fn roc_points(positive: &[bool], scores: &[f64]) -> Vec<RocPoint> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    let rate = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut tp, mut fp) = (p, n);
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        out.push(RocPoint { threshold: t, tpr: rate(tp, p), fpr: rate(fp, n) });
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
    }
    out.push(RocPoint { threshold: f64::INFINITY, tpr: 0.0, fpr: 0.0 });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub rows: Vec<usize>,
    pub predicted: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub positive: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Accuracy of each non-empty fold.
    pub fold_accuracy: Vec<f64>,
    pub accuracy: f64,
    /// Sample standard deviation of the fold accuracies.
    pub accuracy_std: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// F1 of the positive (attack) class.
    pub f1: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub roc: Vec<RocPoint>,
    /// Out-of-fold prediction and positive-class margin of every row.
    pub predicted: Vec<usize>,
    pub scores: Vec<f64>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub(crate) fn margin(scores: &[f64], positive: usize) -> f64 {
    let other =
        scores.iter().enumerate().filter(|(c, _)| *c != positive).map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let m = scores[positive] - other;
    if m.is_nan() {
        0.0
    } else {
        m.clamp(f64::MIN, f64::MAX)
    }
}

impl EvalReport {
    pub fn from_outcomes(
        classes: Vec<String>,
        positive: usize,
        truth: &[usize],
        outcomes: &[FoldOutcome],
    ) -> EvalReport {
        let k = classes.len();
        let mut confusion = vec![vec![0; k]; k];
        let mut predicted = vec![0; truth.len()];
        let mut scores = vec![0.0; truth.len()];
        let mut fold_accuracy = Vec::new();
        for o in outcomes {
            let mut hits = 0;
            for ((&r, &p), &s) in o.rows.iter().zip(&o.predicted).zip(&o.scores) {
                confusion[truth[r]][p] += 1;
                predicted[r] = p;
                scores[r] = s;
                hits += usize::from(truth[r] == p);
            }
            if !o.rows.is_empty() {
                fold_accuracy.push(hits as f64 / o.rows.len() as f64);
            }
        }
        let n: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let col = |c: usize| (0..k).map(|t| confusion[t][c]).sum::<usize>();
        let precision: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], col(c))).collect();
        let recall: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], confusion[c].iter().sum())).collect();
        let (p, r) = (precision.get(positive).copied().unwrap_or(0.0), recall.get(positive).copied().unwrap_or(0.0));
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let negatives: usize = (0..k).filter(|&c| c != positive).map(|c| confusion[c].iter().sum::<usize>()).sum();
        let false_pos = col(positive).saturating_sub(confusion.get(positive).map_or(0, |row| row[positive]));
        let accuracy = ratio(correct, n);
        let accuracy_std = if fold_accuracy.len() > 1 {
            let m = fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64;
            (fold_accuracy.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (fold_accuracy.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let is_pos: Vec<bool> = truth.iter().map(|&t| t == positive).collect();
        let roc = roc_points(&is_pos, &scores);
        EvalReport {
            classes,
            positive,
            confusion,
            fold_accuracy,
            accuracy,
            accuracy_std,
            precision,
            recall,
            f1,
            tpr: r,
            fpr: ratio(false_pos, negatives),
            roc,
            predicted,
            scores,
        }
    }

    pub fn rows(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Out-of-fold predictions of `classifier` over `features`, folds evaluated
/// in parallel.
pub fn evaluate(data: &Matrix, split: &Split, classifier: &dyn Classifier, features: &[usize]) -> EvalReport {
    let positive = data.positive();
    let outcomes: Vec<FoldOutcome> = (0..split.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = split.fold_rows(fold);
            let model = classifier.fit(data, &train, features);
            let (predicted, scores) = test
                .iter()
                .map(|&r| {
                    let s = model.scores(data.row(r));
                    (super::argmax(&s), margin(&s, positive))
                })
                .unzip();
            FoldOutcome { fold, rows: test, predicted, scores }
        })
        .collect();
    EvalReport::from_outcomes(data.classes.clone(), positive, &data.y, &outcomes)
}

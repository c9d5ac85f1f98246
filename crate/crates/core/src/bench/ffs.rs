//! Greedy forward feature selection.

use rayon::prelude::*;

use super::cv::{margin, FoldOutcome};
use super::nb::NbModel;
use super::{argmax, EvalReport, Matrix, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// F1 of the attack class.
    #[default]
    AttackF1,
    Accuracy,
}

impl Objective {
    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            Objective::AttackF1 => report.f1,
            Objective::Accuracy => report.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfsResult {
    /// Selected features in order of addition.
    pub selected: Vec<usize>,
    /// Objective after each addition.
    pub scores: Vec<f64>,
}

/// Adds, one at a time, the candidate that maximises `score`. A round that
/// does not beat the best score so far is accepted once per `patience`; the
/// next non-improving round ends the search without adding its feature.
/// Ties go to the candidate listed first.
pub fn forward_feature_selection<F>(candidates: &[usize], max_features: usize, patience: usize, score: F) -> FfsResult
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let mut selected: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut misses = 0;
    while selected.len() < max_features {
        let remaining: Vec<usize> = candidates.iter().copied().filter(|c| !selected.contains(c)).collect();
        if remaining.is_empty() {
            break;
        }
        let evaluated: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&c| {
                let mut trial = selected.clone();
                trial.push(c);
                (c, score(&trial))
            })
            .collect();
        let (pick, s) = evaluated.into_iter().fold((usize::MAX, f64::NEG_INFINITY), |acc, (c, s)| {
            if acc.0 == usize::MAX || s > acc.1 {
                (c, s)
            } else {
                acc
            }
        });
        if s > best {
            best = s;
            misses = 0;
        } else {
            misses += 1;
            if misses > patience {
                break;
            }
        }
        selected.push(pick);
        scores.push(s);
    }
    FfsResult { selected, scores }
}

/// Cross-validated naive Bayes objective. Per-feature class densities of
/// every out-of-fold row are computed once, so scoring a subset is a sum.
pub fn nb_cv_objective(
    data: &Matrix,
    split: &Split,
    candidates: &[usize],
    objective: Objective,
) -> impl Fn(&[usize]) -> f64 + Sync {
    let k = data.classes.len();
    let positive = data.positive();
    let slot_of: Vec<Option<usize>> = (0..data.width()).map(|j| candidates.iter().position(|&c| c == j)).collect();
    let folds: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = (0..split.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = split.fold_rows(fold);
            let model = NbModel::fit(data, &train, candidates);
            let priors: Vec<f64> = (0..k).map(|c| model.log_prior(c)).collect();
            let mut dens = Vec::with_capacity(test.len() * k * candidates.len());
            for &r in &test {
                let row = data.row(r);
                for c in 0..k {
                    dens.extend(candidates.iter().enumerate().map(|(slot, &j)| model.log_density(c, slot, row[j])));
                }
            }
            (test, priors, dens)
        })
        .collect();
    let width = candidates.len();
    let classes = data.classes.clone();
    let truth = data.y.clone();
    move |subset: &[usize]| {
        let slots: Vec<usize> = subset.iter().filter_map(|&j| slot_of.get(j).copied().flatten()).collect();
        let outcomes: Vec<FoldOutcome> = folds
            .iter()
            .enumerate()
            .map(|(fold, (test, priors, dens))| {
                let (predicted, scores) = test
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let s: Vec<f64> = (0..k)
                            .map(|c| {
                                let base = (i * k + c) * width;
                                slots.iter().fold(priors[c], |acc, &slot| acc + dens[base + slot])
                            })
                            .collect();
                        (argmax(&s), margin(&s, positive))
                    })
                    .unzip();
                FoldOutcome { fold, rows: test.clone(), predicted, scores }
            })
            .collect();
        objective.of(&EvalReport::from_outcomes(classes.clone(), positive, &truth, &outcomes))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate, stratified_kfold, NaiveBayesKde};
    use super::*;
    use crate::dataset::LabelSchema;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn synthetic(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let attack = i % 4 == 0;
            labels.push(if attack { "attack" } else { "legitimate" }.to_string());
            x.push(rng.random::<f64>());
            x.push(if attack { 5.0 } else { 0.0 } + rng.random::<f64>());
            x.push(rng.random::<f64>() * 3.0);
        }
        Matrix::new(vec!["noise".into(), "signal".into(), "noise2".into()], x, &labels)
    }

    #[test]
    fn separating_feature_comes_first() {
        let m = synthetic(80, 1);
        let split = stratified_kfold(&m.y, 5, 2, LabelSchema::Label2).unwrap();
        let obj = nb_cv_objective(&m, &split, &[0, 1, 2], Objective::AttackF1);
        let r = forward_feature_selection(&[0, 1, 2], 20, 1, &obj);
        assert_eq!(r.selected[0], 1);
        assert_eq!(r.scores[0], 1.0);
        assert!(r.selected.len() <= 2);
        assert_eq!(r, forward_feature_selection(&[0, 1, 2], 20, 1, &obj));
    }

    #[test]
    fn limits_and_empty_candidates() {
        let f = |s: &[usize]| s.len() as f64;
        assert!(forward_feature_selection(&[0, 1], 0, 1, f).selected.is_empty());
        assert!(forward_feature_selection(&[], 5, 1, f).selected.is_empty());
        assert_eq!(forward_feature_selection(&[0, 1, 2, 3], 2, 1, f).selected, vec![0, 1]);
    }

    #[test]
    fn patience_keeps_one_flat_round() {
        // Score rises with feature 3, then stays flat.
        let f = |s: &[usize]| if s.contains(&3) { 1.0 } else { 0.0 };
        let r = forward_feature_selection(&[0, 1, 2, 3], 20, 1, f);
        assert_eq!(r.selected, vec![3, 0]);
        let r = forward_feature_selection(&[0, 1, 2, 3], 20, 0, f);
        assert_eq!(r.selected, vec![3]);
    }

    #[test]
    fn cached_objective_matches_full_evaluation() {
        let m = synthetic(60, 4);
        let split = stratified_kfold(&m.y, 5, 9, LabelSchema::Label2).unwrap();
        for obj in [Objective::AttackF1, Objective::Accuracy] {
            let cached = nb_cv_objective(&m, &split, &[0, 1, 2], obj);
            for subset in [vec![0], vec![2, 0], vec![0, 1, 2]] {
                let full = obj.of(&evaluate(&m, &split, &NaiveBayesKde, &subset));
                assert!((cached(&subset) - full).abs() < 1e-12, "{subset:?}");
            }
        }
    }
}

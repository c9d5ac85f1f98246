//! Evasion and training-data augmentation experiments.

use super::{
    evaluate, matrix_from_rows, stratified_kfold, BenchError, Classifier, EvalReport, Matrix, ATTACK, LEGITIMATE,
};
use crate::dataset::{class_of, LabelSchema};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct EvasionReport {
    /// Cross-validation on direct attacks and legitimate traffic.
    pub cv: EvalReport,
    pub obfuscated_total: usize,
    pub obfuscated_detected: usize,
    pub obfuscated_tpr: f64,
    /// Detection over direct (out-of-fold) and obfuscated attacks together.
    pub all_attack_tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentReport {
    pub cv: EvalReport,
    /// Out-of-fold detection rate of obfuscated attacks, when present.
    pub obfuscated_tpr: Option<f64>,
    /// Change against the evasion baseline's all-attack TPR and FPR.
    pub delta_tpr: Option<f64>,
    pub delta_fpr: Option<f64>,
}

/// Matrix over three-class names, or binary names for rows that only carry
/// `label_2`.
fn class_matrix(rows: &[FeatureVector], features: &[String]) -> Result<Matrix, BenchError> {
    let refs: Vec<&FeatureVector> = rows.iter().collect();
    matrix_from_rows(&refs, features, |r| class_of(r).map(|c| c.name().to_string()).or_else(|| super::binary_label(r)))
}

fn binary(m: &Matrix, rows: &[usize]) -> Matrix {
    let labels: Vec<String> =
        rows.iter().map(|&r| if m.classes[m.y[r]] == LEGITIMATE { LEGITIMATE } else { ATTACK }.to_string()).collect();
    let sub = m.subset(rows);
    Matrix::new(sub.features, sub.x, &labels)
}

fn all_columns(m: &Matrix) -> Vec<usize> {
    (0..m.width()).collect()
}

/// Trains on direct attacks and legitimate rows, cross-validates there, then
/// scores the held-out obfuscated attacks with a model fit on all of them.
pub fn evasion_experiment(
    rows: &[FeatureVector],
    features: &[String],
    classifier: &dyn Classifier,
    k: usize,
    seed: u64,
) -> Result<EvasionReport, BenchError> {
    let m = class_matrix(rows, features)?;
    let (Some(direct), Some(obf), Some(legit)) =
        (m.class_index("direct"), m.class_index("obfuscated"), m.class_index(LEGITIMATE))
    else {
        return Err(if m.class_index("direct").is_none() && m.class_index("obfuscated").is_none() {
            BenchError::NoThreeClassLabels
        } else {
            BenchError::NoObfuscated
        });
    };
    let train: Vec<usize> = (0..m.rows()).filter(|&r| m.y[r] == direct || m.y[r] == legit).collect();
    let held: Vec<usize> = (0..m.rows()).filter(|&r| m.y[r] == obf).collect();
    let dl = binary(&m, &train);
    let split = stratified_kfold(&dl.y, k, seed, LabelSchema::Label3)?;
    let cols = all_columns(&dl);
    let cv = evaluate(&dl, &split, classifier, &cols);
    let all: Vec<usize> = (0..dl.rows()).collect();
    let model = classifier.fit(&dl, &all, &cols);
    let pos = dl.positive();
    let detected = held.iter().filter(|&&r| model.predict(m.row(r)) == pos).count();
    let direct_total = cv.confusion[pos].iter().sum::<usize>();
    let direct_hit = cv.confusion[pos][pos];
    Ok(EvasionReport {
        obfuscated_total: held.len(),
        obfuscated_detected: detected,
        obfuscated_tpr: detected as f64 / held.len() as f64,
        all_attack_tpr: (direct_hit + detected) as f64 / (direct_total + held.len()) as f64,
        cv,
    })
}

/// Cross-validation over the whole dataset with every attack in one class.
pub fn augmentation_experiment(
    rows: &[FeatureVector],
    features: &[String],
    classifier: &dyn Classifier,
    k: usize,
    seed: u64,
    baseline: Option<&EvasionReport>,
) -> Result<AugmentReport, BenchError> {
    let m = class_matrix(rows, features)?;
    if m.rows() == 0 {
        return Err(BenchError::Empty);
    }
    let all: Vec<usize> = (0..m.rows()).collect();
    let b = binary(&m, &all);
    if b.classes.len() < 2 {
        return Err(BenchError::SingleClass(b.classes[0].clone()));
    }
    let split = stratified_kfold(&b.y, k, seed, LabelSchema::Label2)?;
    let cv = evaluate(&b, &split, classifier, &all_columns(&b));
    let obfuscated_tpr = m.class_index("obfuscated").map(|o| {
        let obf: Vec<usize> = all.iter().copied().filter(|&r| m.y[r] == o).collect();
        obf.iter().filter(|&&r| cv.predicted[r] == cv.positive).count() as f64 / obf.len() as f64
    });
    Ok(AugmentReport {
        obfuscated_tpr,
        delta_tpr: baseline.map(|e| cv.tpr - e.all_attack_tpr),
        delta_fpr: baseline.map(|e| cv.fpr - e.cv.fpr),
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::super::NaiveBayesKde;
    use super::*;
    use crate::features::FeatureValue;
    use std::sync::Arc;

    fn rows(with_obf: bool) -> Vec<FeatureVector> {
        let cols: Arc<[String]> = vec!["X".to_string()].into();
        (0..60)
            .filter_map(|i| {
                let (class, x) = match i % 3 {
                    0 => ("1", 10.0 + (i % 7) as f64 * 0.1),
                    1 => ("3", (i % 5) as f64 * 0.1),
                    _ if with_obf => ("2", if i % 6 == 2 { 10.2 } else { 0.2 }),
                    _ => return None,
                };
                Some(FeatureVector {
                    connection_id: i,
                    columns: cols.clone(),
                    values: vec![FeatureValue::Num(x)],
                    valid: vec![true],
                    labels: vec![("label_3".into(), class.into())],
                })
            })
            .collect()
    }

    #[test]
    fn evasion_scores_held_out_obfuscation() {
        let r = evasion_experiment(&rows(true), &["X".into()], &NaiveBayesKde, 5, 1).unwrap();
        assert_eq!(r.obfuscated_total, 20);
        assert_eq!(r.obfuscated_detected, 10);
        assert_eq!(r.cv.rows(), 40);
        assert_eq!(r.cv.accuracy, 1.0);
        assert!((r.all_attack_tpr - 30.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn evasion_refuses_without_obfuscation() {
        assert_eq!(
            evasion_experiment(&rows(false), &["X".into()], &NaiveBayesKde, 5, 1),
            Err(BenchError::NoObfuscated)
        );
    }

    #[test]
    fn augmentation_reports_deltas() {
        let data = rows(true);
        let base = evasion_experiment(&data, &["X".into()], &NaiveBayesKde, 5, 1).unwrap();
        let r = augmentation_experiment(&data, &["X".into()], &NaiveBayesKde, 5, 1, Some(&base)).unwrap();
        assert_eq!(r.cv.rows(), 60);
        assert!(r.obfuscated_tpr.is_some());
        assert_eq!(r.delta_tpr, Some(r.cv.tpr - base.all_attack_tpr));
    }

    #[test]
    fn augmentation_refuses_single_class() {
        let data: Vec<FeatureVector> = rows(true).into_iter().filter(|r| r.labels[0].1 == "3").collect();
        assert_eq!(
            augmentation_experiment(&data, &["X".into()], &NaiveBayesKde, 5, 1, None),
            Err(BenchError::SingleClass(LEGITIMATE.into()))
        );
    }
}

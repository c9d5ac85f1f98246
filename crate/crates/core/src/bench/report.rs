//! Text, key=value and CSV renderings of evaluation results.

use std::fmt::Write;

use super::{AugmentReport, EvalReport, EvasionReport, RocPoint};

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Confusion matrix and headline metrics as an aligned table.
pub fn text_table(r: &EvalReport) -> String {
    let w = r.classes.iter().map(String::len).max().unwrap_or(0).max(10);
    let mut s = String::new();
    let _ = write!(s, "{:>w$}", "true\\pred");
    for c in &r.classes {
        let _ = write!(s, " {c:>w$}");
    }
    let _ = writeln!(s, " {:>w$} {:>w$}", "precision", "recall");
    for (i, c) in r.classes.iter().enumerate() {
        let _ = write!(s, "{c:>w$}");
        for n in &r.confusion[i] {
            let _ = write!(s, " {n:>w$}");
        }
        let _ = writeln!(s, " {:>w$} {:>w$}", pct(r.precision[i]), pct(r.recall[i]));
    }
    let _ = writeln!(s, "rows: {}", r.rows());
    let _ = writeln!(
        s,
        "accuracy: {} +- {} (std across {} folds)",
        pct(r.accuracy),
        pct(r.accuracy_std),
        r.fold_accuracy.len()
    );
    let _ = writeln!(s, "attack F1: {}  TPR: {}  FPR: {}", pct(r.f1), pct(r.tpr), pct(r.fpr));
    s
}

impl EvalReport {
    pub fn key_values(&self, prefix: &str) -> Vec<(String, String)> {
        let mut kv = vec![
            (format!("{prefix}rows"), self.rows().to_string()),
            (format!("{prefix}accuracy"), self.accuracy.to_string()),
            (format!("{prefix}accuracy_std_folds"), self.accuracy_std.to_string()),
            (format!("{prefix}f1_attack"), self.f1.to_string()),
            (format!("{prefix}tpr"), self.tpr.to_string()),
            (format!("{prefix}fpr"), self.fpr.to_string()),
        ];
        for (i, c) in self.classes.iter().enumerate() {
            kv.push((format!("{prefix}precision.{c}"), self.precision[i].to_string()));
            kv.push((format!("{prefix}recall.{c}"), self.recall[i].to_string()));
            for (j, p) in self.classes.iter().enumerate() {
                kv.push((format!("{prefix}confusion.{c}.{p}"), self.confusion[i][j].to_string()));
            }
        }
        kv
    }
}

impl EvasionReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = self.cv.key_values("cv.");
        kv.push(("obfuscated.total".into(), self.obfuscated_total.to_string()));
        kv.push(("obfuscated.detected".into(), self.obfuscated_detected.to_string()));
        kv.push(("obfuscated.tpr".into(), self.obfuscated_tpr.to_string()));
        kv.push(("all_attacks.tpr".into(), self.all_attack_tpr.to_string()));
        kv
    }
}

impl AugmentReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = self.cv.key_values("cv.");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        kv.push(("obfuscated.tpr".into(), opt(self.obfuscated_tpr)));
        kv.push(("delta.tpr".into(), opt(self.delta_tpr)));
        kv.push(("delta.fpr".into(), opt(self.delta_fpr)));
        kv
    }
}

pub fn key_values(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,tpr,fpr\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.tpr, p.fpr);
    }
    s
}

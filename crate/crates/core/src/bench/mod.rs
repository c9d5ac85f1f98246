//! Classifier benchmarking on labelled feature tables.

mod cv;
mod experiment;
mod ffs;
mod nb;
mod report;
mod tree;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::dataset::{binary_class, class_of, label_of, normalize_name, Class, LabelSchema};
use crate::features::{FeatureValue, FeatureVector};

pub use cv::{evaluate, roc_points, stratified_kfold, EvalReport, FoldOutcome, RocPoint, Split};
pub use experiment::{augmentation_experiment, evasion_experiment, AugmentReport, EvasionReport};
pub use ffs::{forward_feature_selection, nb_cv_objective, FfsResult, Objective};
pub use nb::{silverman_bandwidth, NaiveBayesKde, NbModel};
pub use report::{key_values, roc_csv, text_table};
pub use tree::gini;
pub use tree::{best_split, DecisionTree, TreeModel, TreeNode};

pub const ATTACK: &str = "attack";
pub const LEGITIMATE: &str = "legitimate";
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_MAX_FEATURES: usize = 20;
pub const DEFAULT_PATIENCE: usize = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("feature `{0}` is not in the dataset")]
    UnknownFeature(String),
    #[error("no rows to evaluate")]
    Empty,
    #[error("only one class present ({0}); nothing to discriminate")]
    SingleClass(String),
    #[error("the dataset has no obfuscated attack rows (label_3 = 2)")]
    NoObfuscated,
    #[error("the dataset has no three-class labels (label_3 or label_poly)")]
    NoThreeClassLabels,
    #[error("unknown feature subset `{0}`")]
    UnknownSubset(String),
    #[error("fold count {k} is invalid for {rows} rows")]
    Folds { k: usize, rows: usize },
}

/// Dense numeric design matrix with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub features: Vec<String>,
    /// Row-major values, `features.len()` per row.
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    /// Class names sorted lexicographically; `y` indexes into this.
    pub classes: Vec<String>,
}

impl Matrix {
    pub fn new(features: Vec<String>, x: Vec<f64>, labels: &[String]) -> Matrix {
        let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let y = labels.iter().map(|l| classes.binary_search(l).expect("class collected")).collect();
        Matrix { features, x, y, classes }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.width() + j]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Index of the attack class, or the last class when there is none.
    pub fn positive(&self) -> usize {
        self.class_index(ATTACK).unwrap_or(self.classes.len().saturating_sub(1))
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.classes.len()];
        for &c in &self.y {
            n[c] += 1;
        }
        n
    }

    pub fn subset(&self, rows: &[usize]) -> Matrix {
        let w = self.width();
        let mut x = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Matrix {
            features: self.features.clone(),
            x,
            y: rows.iter().map(|&r| self.y[r]).collect(),
            classes: self.classes.clone(),
        }
    }
}

/// Per-row prediction model; larger score means more likely.
pub trait Model: Send + Sync {
    fn scores(&self, row: &[f64]) -> Vec<f64>;

    /// Most likely class; ties go to the lowest index, which is the
    /// lexicographically first class name.
    fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.scores(row))
    }
}

pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;

    /// Fits on `rows` of `data` using only the columns in `features`.
    fn fit(&self, data: &Matrix, rows: &[usize], features: &[usize]) -> Box<dyn Model>;
}

pub(crate) fn argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in s.iter().enumerate() {
        if *v > s[best] {
            best = i;
        }
    }
    best
}

/// Binary target: `label_2` when present, otherwise derived from the
/// three-class label.
pub fn binary_label(row: &FeatureVector) -> Option<String> {
    label_of(row, LabelSchema::Label2)
        .and_then(binary_class)
        .or_else(|| class_of(row).map(|c| if c.is_attack() { ATTACK } else { LEGITIMATE }))
        .map(str::to_string)
}

/// Builds a matrix over `features` (matched by normalised name) for the rows
/// that have a label. Text columns are coded by sorted distinct value.
pub fn matrix_from_rows(
    rows: &[&FeatureVector],
    features: &[String],
    label: impl Fn(&FeatureVector) -> Option<String>,
) -> Result<Matrix, BenchError> {
    let Some(first) = rows.first() else {
        return Err(BenchError::Empty);
    };
    let index: HashMap<String, usize> =
        first.columns.iter().enumerate().map(|(i, c)| (normalize_name(c), i)).rev().collect();
    let cols: Vec<usize> = features
        .iter()
        .map(|f| index.get(&normalize_name(f)).copied().ok_or_else(|| BenchError::UnknownFeature(f.clone())))
        .collect::<Result<_, _>>()?;
    let kept: Vec<(&FeatureVector, String)> = rows.iter().filter_map(|r| label(r).map(|l| (*r, l))).collect();
    let codes: Vec<HashMap<&str, f64>> = cols
        .iter()
        .map(|&c| {
            let tokens: BTreeSet<&str> = kept
                .iter()
                .filter_map(|(r, _)| match &r.values[c] {
                    FeatureValue::Token(t) => Some(t.as_str()),
                    FeatureValue::Num(_) => None,
                })
                .collect();
            tokens.into_iter().enumerate().map(|(i, t)| (t, i as f64)).collect()
        })
        .collect();
    let mut x = Vec::with_capacity(kept.len() * cols.len());
    for (r, _) in &kept {
        for (j, &c) in cols.iter().enumerate() {
            x.push(match &r.values[c] {
                FeatureValue::Num(v) if v.is_finite() => *v,
                FeatureValue::Num(_) => 0.0,
                FeatureValue::Token(t) => codes[j][t.as_str()],
            });
        }
    }
    let labels: Vec<String> = kept.into_iter().map(|(_, l)| l).collect();
    Ok(Matrix::new(features.to_vec(), x, &labels))
}

/// Rows of one three-class group.
pub fn rows_of_class<'a>(rows: &'a [FeatureVector], classes: &[Class]) -> Vec<&'a FeatureVector> {
    rows.iter().filter(|r| class_of(r).is_some_and(|c| classes.contains(&c))).collect()
}

/// Feature subsets selected in the published experiments.
pub fn builtin_subset(name: &str) -> Option<Vec<String>> {
    let list: &[&str] = match name.to_ascii_lowercase().as_str() {
        "cdx" => &[
            "PolyInd3ordOut[0]",
            "PolyInd3ordOut[3]",
            "PolyInd8ordOut[6]",
            "InPkt1s10i[7]",
            "InPkt1s10i[0]",
            "InPkt1s10i[1]",
            "GaussProds8All[7]",
        ],
        "tun-dol" => &[
            "SigPktLenIn",
            "ConTcpFinCntIn",
            "ConTcpSynCntIn",
            "InPktLen32s10i[0]",
            "InPktLen1s10i[2]",
            "InPktLen8s10i[7]",
            "OutPktLen1s10i[0]",
            "FourGonAngleN[9]",
        ],
        "tun-dl" => &[
            "ConTcpFinCntIn",
            "ConTcpSynCntIn",
            "FourGonAngleN[9]",
            "InPktLen8s10i[1]",
            "PolyInd8ordOut[5]",
            "PolyInd8ordIn[5]",
        ],
        "npbo-dol" => &[
            "SigPktLenOut",
            "MeanPktLenIn",
            "CntOfOldFlows",
            "CntOfNewFlows",
            "ModTCPHdrLen",
            "UrgCntIn",
            "FourGonModulIn[1]",
            "FourGonAngleOut[1]",
            "FourGonAngleN[9]",
            "FourGonAngleN[1]",
            "PolyInd13ordOut[13]",
            "GaussProds8All[1]",
            "InPktLen1s10i[5]",
        ],
        "npbo-dl" => &[
            "SigPktLenOut",
            "MeanPktLenIn",
            "CntOfOldFlows",
            "CntOfNewFlows",
            "FinCntIn",
            "PshCntIn",
            "FourGonModulIn[1]",
            "FourGonModulOut[1]",
            "FourGonAngleN[9]",
            "FourGonModulN[0]",
            "PolyInd3ordOut[3]",
            "GaussProds8Out[7]",
            "OutPktLen32s10i[3]",
            "OutPktLen4s10i[2]",
        ],
        _ => return None,
    };
    Some(list.iter().map(|s| s.to_string()).collect())
}

pub const BUILTIN_SUBSETS: [&str; 5] = ["cdx", "tun-dol", "tun-dl", "npbo-dol", "npbo-dl"];

const EXCLUDED_PARTS: [&str; 12] =
    ["ttl", "mac", "port", "local", "subnet", "host", "srcip", "dstip", "cliip", "srvip", "ipsrc", "ipdst"];

/// Whether a feature is one of the identity-revealing kinds left out of
/// selection: TTLs, IP addresses, ports, MAC addresses, host locality.
pub fn is_excluded_feature(name: &str) -> bool {
    let n = normalize_name(name);
    let stem = n.trim_end_matches(|c: char| c.is_ascii_digit());
    EXCLUDED_PARTS.iter().any(|p| n.contains(p)) || stem.ends_with("ip")
}

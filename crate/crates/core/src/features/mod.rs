//! ASNM connection features.

mod catalog;
mod extract;
pub mod math;

use std::fmt;
use std::sync::Arc;

pub use catalog::{
    CatalogError, Category, CategoryCount, Dir, Endpoint, FeatureCatalog, FeatureDef, FourierMode, FourierPart, Kind,
    Metric, NeighbourSide,
};
pub use extract::{ExtractOptions, Extractor, FeatureError};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Num(f64),
    Token(String),
}

impl FeatureValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(x) => Some(*x),
            FeatureValue::Token(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Num(x) => write!(f, "{x}"),
            FeatureValue::Token(t) => f.write_str(t),
        }
    }
}

/// Features of one connection, in catalog column order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub connection_id: usize,
    pub columns: Arc<[String]>,
    pub values: Vec<FeatureValue>,
    /// False where the value is a sentinel for an undefined quantity.
    pub valid: Vec<bool>,
    pub labels: Vec<(String, String)>,
}

impl FeatureVector {
    pub fn index_of(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn get(&self, column: &str) -> Option<&FeatureValue> {
        self.index_of(column).map(|i| &self.values[i])
    }

    pub fn num(&self, column: &str) -> Option<f64> {
        self.get(column).and_then(FeatureValue::as_f64)
    }

    pub fn is_valid(&self, column: &str) -> Option<bool> {
        self.index_of(column).map(|i| self.valid[i])
    }
}

use std::fmt;
use std::str::FromStr;

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Direct,
    Obfuscated,
    Legitimate,
}

impl Class {
    /// Three-class symbol: 1 direct, 2 obfuscated, 3 legitimate.
    pub fn symbol(self) -> u8 {
        match self {
            Class::Direct => 1,
            Class::Obfuscated => 2,
            Class::Legitimate => 3,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Class> {
        match s.trim().trim_end_matches(".0") {
            "1" => Some(Class::Direct),
            "2" => Some(Class::Obfuscated),
            "3" => Some(Class::Legitimate),
            _ => None,
        }
    }

    pub fn is_attack(self) -> bool {
        self != Class::Legitimate
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Direct => "direct",
            Class::Obfuscated => "obfuscated",
            Class::Legitimate => "legitimate",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelSchema {
    Label2,
    Label3,
    LabelPoly,
    LabelPolyS,
    LabelPolyO,
}

impl LabelSchema {
    pub const ALL: [LabelSchema; 5] = [
        LabelSchema::Label2,
        LabelSchema::Label3,
        LabelSchema::LabelPoly,
        LabelSchema::LabelPolyS,
        LabelSchema::LabelPolyO,
    ];

    pub fn column(self) -> &'static str {
        match self {
            LabelSchema::Label2 => "label_2",
            LabelSchema::Label3 => "label_3",
            LabelSchema::LabelPoly => "label_poly",
            LabelSchema::LabelPolyS => "label_poly_s",
            LabelSchema::LabelPolyO => "label_poly_o",
        }
    }

    pub fn from_column(name: &str) -> Option<LabelSchema> {
        let n = name.trim().to_ascii_lowercase();
        LabelSchema::ALL.into_iter().find(|s| s.column() == n)
    }
}

impl FromStr for LabelSchema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        LabelSchema::from_column(s).ok_or_else(|| format!("unknown label schema `{s}`"))
    }
}

/// Symbols used in the first part of `label_poly`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolySymbols {
    /// 1 direct, 2 obfuscated, 3 legitimate.
    ThreeClass,
    /// 0 legitimate, 1 malicious.
    TwoClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub class: Class,
    pub service: String,
    /// Network modification letter or obfuscation technique id.
    pub modifier: Option<String>,
}

pub const LABEL_SEPARATOR: &str = "_";

impl LabelSet {
    pub fn new(class: Class, service: &str, modifier: Option<&str>) -> Self {
        LabelSet { class, service: service.to_ascii_lowercase(), modifier: modifier.map(str::to_string) }
    }

    pub fn label_2(&self) -> &'static str {
        if self.class.is_attack() {
            "attack"
        } else {
            "legitimate"
        }
    }

    pub fn compose(&self, schema: LabelSchema) -> Result<String, DatasetError> {
        self.compose_with(schema, PolySymbols::ThreeClass)
    }

    pub fn compose_with(&self, schema: LabelSchema, symbols: PolySymbols) -> Result<String, DatasetError> {
        let sym = match symbols {
            PolySymbols::ThreeClass => self.class.symbol().to_string(),
            PolySymbols::TwoClass => u8::from(self.class.is_attack()).to_string(),
        };
        let need_service = || {
            if self.service.is_empty() {
                Err(DatasetError::Composition { schema: schema.column(), missing: "service" })
            } else {
                Ok(self.service.as_str())
            }
        };
        let need_modifier = || {
            self.modifier.as_deref().ok_or(DatasetError::Composition { schema: schema.column(), missing: "modifier" })
        };
        let sep = LABEL_SEPARATOR;
        Ok(match schema {
            LabelSchema::Label2 => self.label_2().to_string(),
            LabelSchema::Label3 => sym,
            LabelSchema::LabelPoly => format!("{sym}{sep}{}", need_service()?),
            LabelSchema::LabelPolyS => format!("{sym}{sep}{}{sep}{}", need_service()?, need_modifier()?),
            LabelSchema::LabelPolyO => {
                if self.class == Class::Obfuscated {
                    format!("{sym}{sep}{}{sep}{}", need_modifier()?, need_service()?)
                } else {
                    format!("{sym}{sep}{}", need_service()?)
                }
            }
        })
    }

    /// Every label column for which composition succeeds.
    pub fn columns(&self) -> Vec<(String, String)> {
        LabelSchema::ALL.into_iter().filter_map(|s| self.compose(s).ok().map(|v| (s.column().to_string(), v))).collect()
    }
}

pub fn compose_labels(set: &LabelSet, schema: LabelSchema) -> Result<String, DatasetError> {
    set.compose(schema)
}

/// Normalises a two-class label value to `legitimate` or `attack`.
pub fn binary_class(value: &str) -> Option<&'static str> {
    match value.trim().to_ascii_lowercase().trim_end_matches(".0") {
        "0" | "legitimate" | "legit" | "normal" | "benign" | "false" => Some("legitimate"),
        "1" | "attack" | "malicious" | "anomaly" | "true" => Some("attack"),
        _ => None,
    }
}

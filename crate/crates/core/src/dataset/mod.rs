//! Labelled feature tables: label composition, CSV reading and writing,
//! class histograms and consistency audits of the published datasets.

mod labels;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::features::{FeatureValue, FeatureVector};

pub use labels::{binary_class, compose_labels, Class, LabelSchema, LabelSet, PolySymbols, LABEL_SEPARATOR};

pub const DATA_DIR_ENV: &str = "ASNM_DATA_DIR";
/// Column holding the connection id in files written by this crate.
pub const ID_COLUMN: &str = "conn_id";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: u64, found: u64 },
    #[error("CSV format error: {0}")]
    Format(String),
    #[error("{schema} needs a {missing}")]
    Composition { schema: &'static str, missing: &'static str },
    #[error("dataset {0} not found; set {DATA_DIR_ENV} to the directory holding the ASNM CSV files")]
    NotFound(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => DatasetError::Ragged {
                line: pos.as_ref().map_or(0, |p| p.line()),
                expected: *expected_len,
                found: *len,
            },
            _ => match e.into_kind() {
                csv::ErrorKind::Io(io) => DatasetError::Io(io),
                other => DatasetError::Format(format!("{other:?}")),
            },
        }
    }
}

/// Alphanumeric characters only, lower-cased; used to match feature names
/// across naming variants.
pub fn normalize_name(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    b",;\t".iter().copied().max_by_key(|&d| (header.bytes().filter(|&b| b == d).count(), d == b',')).unwrap_or(b',')
}

pub fn write_csv(rows: &[FeatureVector], columns: &[String], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path)?;
    write_csv_to(rows, columns, file)
}

/// Header: id column, feature columns, then the label columns of the
/// first row. With no rows only the header is written.
pub fn write_csv_to<W: Write>(rows: &[FeatureVector], columns: &[String], out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let label_cols: Vec<String> =
        rows.first().map(|r| r.labels.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(columns.iter().cloned());
    header.extend(label_cols.iter().cloned());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(r.connection_id.to_string());
        for c in columns {
            rec.push(r.get(c).map(|v| v.to_string()).unwrap_or_default());
        }
        for l in &label_cols {
            rec.push(r.labels.iter().find(|(k, _)| k == l).map(|(_, v)| v.clone()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<FeatureVector>, DatasetError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    read_csv_str(&text)
}

/// Label columns go to `labels`; every other column is kept as a feature,
/// numeric where it parses as a number. Delimiters `,`, `;` and tab are
/// detected from the header.
pub fn read_csv_str(text: &str) -> Result<Vec<FeatureVector>, DatasetError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut r =
        csv::ReaderBuilder::new().delimiter(detect_delimiter(text)).flexible(false).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let id_col = header.iter().position(|h| h == ID_COLUMN);
    let is_label: Vec<bool> = header.iter().map(|h| LabelSchema::from_column(h).is_some()).collect();
    let columns: Arc<[String]> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_label[*i] && Some(*i) != id_col)
        .map(|(_, h)| h.clone())
        .collect::<Vec<_>>()
        .into();
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut values = Vec::with_capacity(columns.len());
        let mut labels = Vec::new();
        let mut id = n;
        for (i, field) in rec.iter().enumerate() {
            let field = field.trim();
            if Some(i) == id_col {
                id = field.parse().unwrap_or(n);
            } else if is_label[i] {
                labels.push((header[i].to_ascii_lowercase(), field.to_string()));
            } else {
                values.push(match field.parse::<f64>() {
                    Ok(x) => FeatureValue::Num(x),
                    Err(_) => FeatureValue::Token(field.to_string()),
                });
            }
        }
        let valid = vec![true; values.len()];
        out.push(FeatureVector { connection_id: id, columns: columns.clone(), values, valid, labels });
    }
    Ok(out)
}

pub fn label_of(row: &FeatureVector, schema: LabelSchema) -> Option<&str> {
    row.labels.iter().find(|(k, _)| k == schema.column()).map(|(_, v)| v.as_str())
}

/// Three-class label of a row, from `label_3` or the `label_poly` prefix.
pub fn class_of(row: &FeatureVector) -> Option<Class> {
    label_of(row, LabelSchema::Label3).and_then(Class::from_symbol).or_else(|| {
        label_of(row, LabelSchema::LabelPoly)
            .and_then(|p| p.split(['_', '-', ':', '|']).next())
            .and_then(Class::from_symbol)
    })
}

/// Histogram over one label column. `label_2` values are normalised to
/// `legitimate`/`attack`, `label_3` symbols to class names.
pub fn class_counts(rows: &[FeatureVector], schema: LabelSchema) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for r in rows {
        let Some(v) = label_of(r, schema) else { continue };
        let key = match schema {
            LabelSchema::Label2 => binary_class(v).map_or_else(|| v.to_string(), str::to_string),
            LabelSchema::Label3 => Class::from_symbol(v).map_or_else(|| v.to_string(), |c| c.name().to_string()),
            _ => v.to_string(),
        };
        *h.entry(key).or_insert(0) += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub rows: usize,
    pub counts: BTreeMap<LabelSchema, BTreeMap<String, usize>>,
    pub violations: Vec<Violation>,
}

/// Checks label consistency of every row and collects histograms for every
/// label column present. Inconsistent rows are reported, not rejected.
pub fn audit(rows: &[FeatureVector]) -> AuditReport {
    let mut report = AuditReport { rows: rows.len(), ..Default::default() };
    for schema in LabelSchema::ALL {
        if rows.iter().any(|r| label_of(r, schema).is_some()) {
            report.counts.insert(schema, class_counts(rows, schema));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        let l2 = label_of(r, LabelSchema::Label2);
        let l3 = label_of(r, LabelSchema::Label3);
        let mut bad = |m: String| report.violations.push(Violation { row: i, message: m });
        if let Some(v) = l2 {
            if binary_class(v).is_none() {
                bad(format!("unrecognised label_2 value `{v}`"));
            }
        }
        if let Some(v) = l3 {
            match Class::from_symbol(v) {
                None => bad(format!("unrecognised label_3 value `{v}`")),
                Some(c) => {
                    if let Some(b) = l2.and_then(binary_class) {
                        let want = if c.is_attack() { "attack" } else { "legitimate" };
                        if b != want {
                            bad(format!("label_3 {} implies {want} but label_2 is {b}", c.symbol()));
                        }
                    }
                    for schema in [LabelSchema::LabelPoly, LabelSchema::LabelPolyS, LabelSchema::LabelPolyO] {
                        if let Some(p) = label_of(r, schema) {
                            let head = p.split(['_', '-', ':', '|']).next().unwrap_or("");
                            if Class::from_symbol(head) != Some(c) {
                                bad(format!("{} `{p}` disagrees with label_3 {}", schema.column(), c.symbol()));
                            }
                        }
                    }
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    Cdx,
    Tun,
    Npbo,
}

impl DatasetName {
    pub const ALL: [DatasetName; 3] = [DatasetName::Cdx, DatasetName::Tun, DatasetName::Npbo];

    pub fn key(self) -> &'static str {
        match self {
            DatasetName::Cdx => "cdx",
            DatasetName::Tun => "tun",
            DatasetName::Npbo => "npbo",
        }
    }

    /// Class histogram of the published file, keyed as by [`class_counts`].
    pub fn published_counts(self) -> (LabelSchema, Vec<(&'static str, usize)>) {
        match self {
            DatasetName::Cdx => (LabelSchema::Label2, vec![("legitimate", 5727), ("attack", 44)]),
            DatasetName::Tun => (LabelSchema::Label3, vec![("legitimate", 177), ("direct", 130), ("obfuscated", 87)]),
            DatasetName::Npbo => {
                (LabelSchema::Label3, vec![("legitimate", 10805), ("direct", 162), ("obfuscated", 478)])
            }
        }
    }

    pub fn published_rows(self) -> usize {
        self.published_counts().1.iter().map(|(_, n)| n).sum()
    }
}

impl std::str::FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let n = normalize_name(s);
        DatasetName::ALL
            .into_iter()
            .find(|d| n == d.key() || n.contains(d.key()))
            .ok_or_else(|| format!("unknown dataset `{s}` (expected cdx, tun or npbo)"))
    }
}

/// CSV file of `name` inside `dir`: the first `*.csv` whose normalised file
/// name mentions the dataset key.
pub fn find_in(dir: &Path, name: DatasetName) -> Option<PathBuf> {
    let mut hits: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .filter(|p| p.file_name().is_some_and(|f| normalize_name(&f.to_string_lossy()).contains(name.key())))
        .collect();
    hits.sort();
    hits.into_iter().next()
}

/// Looks the dataset up under `$ASNM_DATA_DIR`.
pub fn locate(name: DatasetName) -> Result<PathBuf, DatasetError> {
    std::env::var_os(DATA_DIR_ENV)
        .and_then(|d| find_in(Path::new(&d), name))
        .ok_or_else(|| DatasetError::NotFound(name.key().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, x: f64, labels: &[(&str, &str)]) -> FeatureVector {
        FeatureVector {
            connection_id: id,
            columns: vec!["A".to_string(), "B[0]".to_string()].into(),
            values: vec![FeatureValue::Num(x), FeatureValue::Token("legal".into())],
            valid: vec![true, true],
            labels: labels.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    #[test]
    fn empty_rows_write_header_only() {
        let mut buf = Vec::new();
        write_csv_to(&[], &["A".into()], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "conn_id,A\n");
    }

    #[test]
    fn round_trip_keeps_values_and_labels() {
        let rows: Vec<_> = (0..5).map(|i| row(i, i as f64 / 3.0, &[("label_2", "attack"), ("label_3", "1")])).collect();
        let mut buf = Vec::new();
        write_csv_to(&rows, &rows[0].columns, &mut buf).unwrap();
        let back = read_csv_str(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn semicolons_and_unknown_columns() {
        let text = "Foo;SigPktLenIn;label_2\n1.5;2;0\n3;4;1\n";
        let rows = read_csv_str(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].num("Foo"), Some(3.0));
        assert_eq!(class_counts(&rows, LabelSchema::Label2).get("attack"), Some(&1));
    }

    #[test]
    fn ragged_rows_report_line() {
        let err = read_csv_str("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(err, DatasetError::Ragged { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn audit_flags_inconsistent_rows() {
        let rows = vec![
            row(0, 1.0, &[("label_2", "legitimate"), ("label_3", "3"), ("label_poly", "3_apache")]),
            row(1, 1.0, &[("label_2", "legitimate"), ("label_3", "2"), ("label_poly", "2_apache")]),
            row(2, 1.0, &[("label_2", "attack"), ("label_3", "1"), ("label_poly", "3_apache")]),
        ];
        let rep = audit(&rows);
        assert_eq!(rep.violations.iter().map(|v| v.row).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(rep.counts[&LabelSchema::Label3]["obfuscated"], 1);
        assert!(class_counts(&[], LabelSchema::Label3).is_empty());
    }

    #[test]
    fn dataset_files_are_found_by_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ASNM-NPBO.csv"), "a\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "").unwrap();
        assert!(find_in(dir.path(), DatasetName::Npbo).is_some());
        assert!(find_in(dir.path(), DatasetName::Cdx).is_none());
        assert_eq!("ASNM-TUN".parse::<DatasetName>(), Ok(DatasetName::Tun));
        assert_eq!(DatasetName::Npbo.published_rows(), 11445);
        assert_eq!(DatasetName::Cdx.published_rows(), 5771);
        assert_eq!(DatasetName::Tun.published_rows(), 394);
    }
}

use std::sync::Arc;

use asnm_core::dataset::{audit, read_csv, read_csv_str, write_csv, write_csv_to, Class, LabelSchema, LabelSet};
use asnm_core::features::{FeatureValue, FeatureVector};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = FeatureValue> {
    prop_oneof![
        (-1e12f64..1e12).prop_map(FeatureValue::Num),
        (0u32..70000).prop_map(|v| FeatureValue::Num(f64::from(v))),
        prop::sample::select(vec!["legal", "illegal"]).prop_map(|s| FeatureValue::Token(s.to_string())),
    ]
}

fn class() -> impl Strategy<Value = Class> {
    prop::sample::select(vec![Class::Direct, Class::Obfuscated, Class::Legitimate])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trips(width in 1usize..12, rows in proptest::collection::vec((proptest::collection::vec(value(), 12), class()), 100)) {
        let columns: Arc<[String]> = (0..width).map(|i| format!("F{i}[{}]", i % 3)).collect::<Vec<_>>().into();
        let vectors: Vec<FeatureVector> = rows
            .iter()
            .enumerate()
            .map(|(i, (vals, class))| {
                let set = LabelSet::new(*class, "samba", Some("q"));
                FeatureVector {
                    connection_id: i,
                    columns: columns.clone(),
                    values: vals[..width].to_vec(),
                    valid: vec![true; width],
                    labels: set.columns(),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_csv_to(&vectors, &columns, &mut buf).unwrap();
        let back = read_csv_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(&back, &vectors);
        prop_assert!(audit(&back).violations.is_empty());
    }
}

#[test]
fn semicolon_files_and_published_style_columns() {
    let text = "conn_id;SigPktLenIn;LegalClose;label_2;label_3;label_poly\n0;1.5;legal;0;3;3_apache\n1;2;illegal;1;2;2_samba\n";
    let rows = read_csv_str(text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].values[0], FeatureValue::Num(2.0));
    assert_eq!(rows[1].values[1], FeatureValue::Token("illegal".into()));
    let report = audit(&rows);
    assert!(report.violations.is_empty());
    assert_eq!(report.counts[&LabelSchema::Label3]["obfuscated"], 1);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    write_csv(&rows, &rows[0].columns, &p).unwrap();
    assert_eq!(read_csv(&p).unwrap(), rows);
}

use std::error::Error;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use asnm_core::bench::{
    self, augmentation_experiment, builtin_subset, evaluate, evasion_experiment, forward_feature_selection,
    is_excluded_feature, key_values, matrix_from_rows, nb_cv_objective, roc_csv, stratified_kfold, text_table,
    Classifier, DecisionTree, EvalReport, NaiveBayesKde, Objective,
};
use asnm_core::capture::{read_pcap, write_pcap, Capture};
use asnm_core::context::DEFAULT_CONTEXT_TAU_SECS;
use asnm_core::dataset::{
    audit, class_of, locate, read_csv, write_csv, write_csv_to, Class, DatasetName, LabelSchema, LabelSet, PolySymbols,
};
use asnm_core::features::{ExtractOptions, Extractor, FeatureCatalog, FeatureVector};
use asnm_core::flows::{assemble_connections, DEFAULT_FLOW_TIMEOUT_SECS};
use asnm_core::morph::{apply, ObfuscationSpec};

type Res<T> = Result<T, Box<dyn Error>>;

/// TCP connection features, trace obfuscation and classifier benchmarks.
#[derive(Parser)]
#[command(name = "asnm", version)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-connection features from a pcap file into CSV.
    Extract(ExtractArgs),
    /// Apply an obfuscation spec to a pcap file.
    Morph(MorphArgs),
    /// Attach labels to every row of a feature CSV.
    Label(LabelArgs),
    /// Report label histograms and consistency problems of a dataset.
    Audit(AuditArgs),
    /// Cross-validate classifiers on a labelled dataset.
    Bench(BenchArgs),
    /// Show the feature catalog.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct ExtractArgs {
    input: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Idle gap in seconds that ends a connection.
    #[arg(long, default_value_t = DEFAULT_FLOW_TIMEOUT_SECS)]
    flow_timeout: f64,
    /// Context window width in seconds, centred on each connection start.
    #[arg(long, default_value_t = DEFAULT_CONTEXT_TAU_SECS)]
    context_tau: f64,
    /// Catalog manifest (default: built-in catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Comma-separated CIDR prefixes counted as local.
    #[arg(long, value_delimiter = ',')]
    local_prefixes: Vec<ipnet::Ipv4Net>,
}

#[derive(Args)]
struct MorphArgs {
    input: PathBuf,
    output: PathBuf,
    /// Preset id (a..q, tunnel-http, tunnel-https) or spec file.
    #[arg(long)]
    spec: String,
    /// Seed of the random streams.
    #[arg(long)]
    seed: u64,
    /// Let loss, corruption and reordering touch handshake packets.
    #[arg(long)]
    allow_broken_handshake: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Direct,
    Obfuscated,
    Legitimate,
}

#[derive(Clone, Copy, ValueEnum)]
enum SymbolsArg {
    Three,
    Two,
}

#[derive(Args)]
struct LabelArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    class: ClassArg,
    /// Attacked or legitimate service name.
    #[arg(long, default_value = "")]
    service: String,
    /// Network modification letter or obfuscation technique id.
    #[arg(long)]
    modifier: Option<String>,
    /// Symbols of the `label_poly` prefix.
    #[arg(long, value_enum, default_value = "three")]
    poly_symbols: SymbolsArg,
}

#[derive(Args)]
struct AuditArgs {
    /// CSV file; looked up under $ASNM_DATA_DIR from --dataset when omitted.
    input: Option<PathBuf>,
    /// Published dataset to compare class counts with (cdx, tun, npbo).
    #[arg(long)]
    dataset: Option<DatasetName>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierArg {
    Nb,
    Tree,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentArg {
    Cv,
    Evasion,
    Augment,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset name (cdx, tun, npbo) or CSV path.
    #[arg(long)]
    dataset: String,
    /// Built-in subset (cdx, tun-dol, tun-dl, npbo-dol, npbo-dl), `ffs`, or a
    /// file with one feature name per line.
    #[arg(long)]
    features: Option<String>,
    #[arg(long, value_enum, default_value = "nb")]
    classifier: ClassifierArg,
    #[arg(long, value_enum, default_value = "cv")]
    experiment: ExperimentArg,
    /// Seed of the fold shuffle.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = bench::DEFAULT_FOLDS)]
    folds: usize,
    /// Optimise accuracy instead of attack F1 during feature selection.
    #[arg(long)]
    ffs_accuracy: bool,
    /// Directory for report.txt, report.kv and roc.csv.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    /// Catalog manifest (default: built-in catalog).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Print the manifest instead of the category summary.
    #[arg(long)]
    manifest: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("asnm: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Morph(a) => morph(a),
        Command::Label(a) => label(a),
        Command::Audit(a) => audit_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Catalog(a) => catalog(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("asnm: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_catalog(path: Option<&Path>) -> Res<FeatureCatalog> {
    Ok(match path {
        Some(p) => FeatureCatalog::load(p)?,
        None => FeatureCatalog::builtin(),
    })
}

fn extract(a: ExtractArgs) -> Res<ExitCode> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let cap = read_pcap(&a.input)?;
    let assembly = assemble_connections(&cap.packets, a.flow_timeout);
    let ex = Extractor::new(
        &catalog,
        &assembly.connections,
        ExtractOptions { tau: a.context_tau, local_prefixes: a.local_prefixes },
    );
    let rows = ex.extract_all();
    let cols = ex.columns().to_vec();
    match a.output {
        Some(p) => write_csv(&rows, &cols, &p)?,
        None => write_csv_to(&rows, &cols, io::stdout().lock())?,
    }
    eprintln!(
        "{} packets, {} connections, {} packets outside connections",
        cap.packets.len(),
        assembly.connections.len(),
        assembly.residue.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn morph(a: MorphArgs) -> Res<ExitCode> {
    let mut spec = ObfuscationSpec::resolve(&a.spec, a.seed)?;
    spec.protect_handshake = !a.allow_broken_handshake;
    let cap = read_pcap(&a.input)?;
    let packets = apply(cap.packets, &spec);
    write_pcap(&Capture { packets, ..cap }, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn label(a: LabelArgs) -> Res<ExitCode> {
    let class = match a.class {
        ClassArg::Direct => Class::Direct,
        ClassArg::Obfuscated => Class::Obfuscated,
        ClassArg::Legitimate => Class::Legitimate,
    };
    let symbols = match a.poly_symbols {
        SymbolsArg::Three => PolySymbols::ThreeClass,
        SymbolsArg::Two => PolySymbols::TwoClass,
    };
    let set = LabelSet::new(class, &a.service, a.modifier.as_deref());
    let labels: Vec<(String, String)> = LabelSchema::ALL
        .into_iter()
        .filter_map(|s| set.compose_with(s, symbols).ok().map(|v| (s.column().to_string(), v)))
        .collect();
    let mut rows = read_csv(&a.input)?;
    for r in &mut rows {
        r.labels = labels.clone();
    }
    let cols = rows.first().map(|r| r.columns.to_vec()).unwrap_or_default();
    write_csv(&rows, &cols, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn dataset_path(input: Option<PathBuf>, name: Option<DatasetName>) -> Res<PathBuf> {
    match (input, name) {
        (Some(p), _) => Ok(p),
        (None, Some(n)) => Ok(locate(n)?),
        (None, None) => Err("give a CSV path or --dataset".into()),
    }
}

fn audit_cmd(a: AuditArgs) -> Res<ExitCode> {
    let path = dataset_path(a.input, a.dataset)?;
    let rows = read_csv(&path)?;
    let report = audit(&rows);
    let mut out = io::stdout().lock();
    writeln!(out, "rows={}", report.rows)?;
    for (schema, counts) in &report.counts {
        for (k, n) in counts {
            writeln!(out, "{}.{k}={n}", schema.column())?;
        }
    }
    for v in &report.violations {
        eprintln!("row {}: {}", v.row, v.message);
    }
    let mut ok = report.violations.is_empty();
    if let Some(name) = a.dataset {
        let (schema, want) = name.published_counts();
        let got = report.counts.get(&schema);
        for (k, n) in want {
            let have = got.and_then(|c| c.get(k)).copied().unwrap_or(0);
            let status = if have == n { "match" } else { "MISMATCH" };
            writeln!(out, "published.{}.{k}={n} ingested={have} {status}", schema.column())?;
            ok &= have == n;
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn load_dataset(spec: &str) -> Res<(Vec<FeatureVector>, Option<DatasetName>)> {
    let p = Path::new(spec);
    if p.is_file() {
        let name = spec.parse::<DatasetName>().ok();
        return Ok((read_csv(p)?, name));
    }
    let name: DatasetName = spec.parse()?;
    Ok((read_csv(&locate(name)?)?, Some(name)))
}

fn default_subset(name: Option<DatasetName>, experiment: ExperimentArg) -> Option<&'static str> {
    Some(match (name?, experiment) {
        (DatasetName::Cdx, _) => "cdx",
        (DatasetName::Tun, ExperimentArg::Evasion) => "tun-dl",
        (DatasetName::Tun, _) => "tun-dol",
        (DatasetName::Npbo, ExperimentArg::Evasion) => "npbo-dl",
        (DatasetName::Npbo, _) => "npbo-dol",
    })
}

fn select_features(rows: &[FeatureVector], classifier: &dyn Classifier, a: &BenchArgs) -> Res<Vec<String>> {
    let candidates: Vec<String> = rows
        .first()
        .ok_or("dataset has no rows")?
        .columns
        .iter()
        .filter(|c| !is_excluded_feature(c))
        .cloned()
        .collect();
    let train: Vec<&FeatureVector> = if a.experiment == ExperimentArg::Evasion {
        rows.iter().filter(|r| class_of(r) != Some(Class::Obfuscated)).collect()
    } else {
        rows.iter().collect()
    };
    let m = matrix_from_rows(&train, &candidates, bench::binary_label)?;
    let split = stratified_kfold(&m.y, a.folds, a.seed, LabelSchema::Label2)?;
    let objective = if a.ffs_accuracy { Objective::Accuracy } else { Objective::AttackF1 };
    let idx: Vec<usize> = (0..m.width()).collect();
    let result = if a.classifier == ClassifierArg::Nb {
        let score = nb_cv_objective(&m, &split, &idx, objective);
        forward_feature_selection(&idx, bench::DEFAULT_MAX_FEATURES, bench::DEFAULT_PATIENCE, score)
    } else {
        let score = |s: &[usize]| objective.of(&evaluate(&m, &split, classifier, s));
        forward_feature_selection(&idx, bench::DEFAULT_MAX_FEATURES, bench::DEFAULT_PATIENCE, score)
    };
    for (f, s) in result.selected.iter().zip(&result.scores) {
        eprintln!("ffs: +{} -> {s:.6}", m.features[*f]);
    }
    Ok(result.selected.iter().map(|&f| m.features[f].clone()).collect())
}

fn bench_cmd(a: BenchArgs) -> Res<ExitCode> {
    let (rows, name) = load_dataset(&a.dataset)?;
    let classifier: Box<dyn Classifier> = match a.classifier {
        ClassifierArg::Nb => Box::new(NaiveBayesKde),
        ClassifierArg::Tree => Box::new(DecisionTree::default()),
    };
    let features = match a.features.as_deref().or(default_subset(name, a.experiment)) {
        None => return Err("no default feature subset for this dataset; pass --features".into()),
        Some("ffs") => select_features(&rows, classifier.as_ref(), &a)?,
        Some(f) => match builtin_subset(f) {
            Some(list) => list,
            None => fs::read_to_string(f)
                .map_err(|e| format!("--features `{f}`: not a built-in subset and unreadable: {e}"))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        },
    };
    let (table, kv, report): (String, Vec<(String, String)>, EvalReport) = match a.experiment {
        ExperimentArg::Cv => {
            let refs: Vec<&FeatureVector> = rows.iter().collect();
            let m = matrix_from_rows(&refs, &features, bench::binary_label)?;
            let split = stratified_kfold(&m.y, a.folds, a.seed, LabelSchema::Label2)?;
            let cols: Vec<usize> = (0..m.width()).collect();
            let r = evaluate(&m, &split, classifier.as_ref(), &cols);
            (text_table(&r), r.key_values(""), r)
        }
        ExperimentArg::Evasion => {
            let r = evasion_experiment(&rows, &features, classifier.as_ref(), a.folds, a.seed)?;
            let t = format!(
                "{}obfuscated attacks detected: {} of {} ({:.2}%)\n",
                text_table(&r.cv),
                r.obfuscated_detected,
                r.obfuscated_total,
                100.0 * r.obfuscated_tpr
            );
            (t, r.key_values(), r.cv)
        }
        ExperimentArg::Augment => {
            let base = evasion_experiment(&rows, &features, classifier.as_ref(), a.folds, a.seed).ok();
            let r = augmentation_experiment(&rows, &features, classifier.as_ref(), a.folds, a.seed, base.as_ref())?;
            let mut t = text_table(&r.cv);
            if let (Some(dt), Some(df)) = (r.delta_tpr, r.delta_fpr) {
                t.push_str(&format!("delta TPR: {:+.2}  delta FPR: {:+.2} (points)\n", 100.0 * dt, 100.0 * df));
            }
            (t, r.key_values(), r.cv)
        }
    };
    let mut head = vec![
        ("classifier".to_string(), classifier.name().to_string()),
        ("seed".to_string(), a.seed.to_string()),
        ("folds".to_string(), a.folds.to_string()),
        ("features".to_string(), features.join(";")),
    ];
    head.extend(kv);
    print!("features: {}\n{table}", features.join(", "));
    if let Some(dir) = a.output {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.txt"), &table)?;
        fs::write(dir.join("report.kv"), key_values(&head))?;
        fs::write(dir.join("roc.csv"), roc_csv(&report.roc))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn catalog(a: CatalogArgs) -> Res<ExitCode> {
    let c = load_catalog(a.catalog.as_deref())?;
    let mut out = io::stdout().lock();
    if a.manifest {
        write!(out, "{}", c.to_manifest())?;
        return Ok(ExitCode::SUCCESS);
    }
    writeln!(out, "{:<14} {:>8} {:>8} {:>10}", "category", "families", "columns", "published")?;
    for cc in c.category_counts() {
        writeln!(out, "{:<14} {:>8} {:>8} {:>10}", cc.category.name(), cc.families, cc.columns, cc.published)?;
    }
    writeln!(out, "total columns: {}", c.width())?;
    Ok(ExitCode::SUCCESS)
}

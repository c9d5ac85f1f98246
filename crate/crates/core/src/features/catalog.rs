//! Feature catalog and its manifest format.
//!
//! One family per line: `<id> <category> kind=<kind> [key=value ...]`.
//! Blank lines and text after `#` are ignored. A family expands to one
//! column (`Id`) or, for vector kinds, to `Id[0]`, `Id[1]`, ...

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

const DEFAULT_MANIFEST: &str = include_str!("default.catalog");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("catalog line {line}: duplicate feature id {id}")]
    Duplicate { line: usize, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Statistical,
    Dynamic,
    Localization,
    Distributed,
    Behavioral,
}

impl Category {
    pub const ALL: [Category; 5] =
        [Category::Statistical, Category::Dynamic, Category::Localization, Category::Distributed, Category::Behavioral];

    /// Size of each category in the full published feature set.
    pub fn published_total(self) -> usize {
        match self {
            Category::Statistical => 77,
            Category::Dynamic => 32,
            Category::Localization => 8,
            Category::Distributed => 34,
            Category::Behavioral => 43,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Statistical => "statistical",
            Category::Dynamic => "dynamic",
            Category::Localization => "localization",
            Category::Distributed => "distributed",
            Category::Behavioral => "behavioral",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// Packet selection by direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    In,
    Out,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Count,
    Sum,
    Mean,
    Median,
    Mode,
    Std,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierPart {
    Modulus,
    Angle,
}

/// Sequence fed to the Fourier transform. `Signed` is all packets in
/// trace order, inbound sizes negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierMode {
    In,
    Out,
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighbourSide {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Size { metric: Metric, dir: Dir },
    Flag { flag: u8, dir: Dir },
    HeaderLenMode,
    Throughput { dir: Dir },
    PeakThroughput { dir: Dir },
    IatMean { dir: Dir },
    IatStd { dir: Dir },
    Retransmissions { dir: Dir },
    RetransmissionRatio,
    SynAttempts,
    Duration,
    ContextDensity,
    ContextCount,
    ContextSameServer,
    ContextSameClient,
    IpOctets { end: Endpoint },
    Port { end: Endpoint },
    Local { end: Endpoint },
    SameSubnet,
    Bins { dir: Dir, period_secs: u32, bins: usize },
    Poly { dir: Dir, degree: usize },
    Fourier { part: FourierPart, mode: FourierMode, count: usize },
    Gauss { dir: Dir, slices: usize },
    Closing,
    MutualFlows { side: NeighbourSide, horizon_secs: f64 },
}

impl Kind {
    pub fn width(&self) -> usize {
        match *self {
            Kind::IpOctets { .. } => 4,
            Kind::Bins { bins, .. } => bins,
            Kind::Poly { degree, .. } => degree + 1,
            Kind::Fourier { count, .. } => count,
            Kind::Gauss { slices, .. } => slices,
            _ => 1,
        }
    }

    pub fn uses_context(&self) -> bool {
        matches!(
            self,
            Kind::ContextDensity
                | Kind::ContextCount
                | Kind::ContextSameServer
                | Kind::ContextSameClient
                | Kind::MutualFlows { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDef {
    pub id: String,
    pub category: Category,
    pub kind: Kind,
    /// The `key=value` parameters as written in the manifest.
    pub params: Vec<(String, String)>,
}

impl FeatureDef {
    pub fn width(&self) -> usize {
        self.kind.width()
    }

    pub fn uses_context(&self) -> bool {
        self.kind.uses_context()
    }

    pub fn column_names(&self) -> Vec<String> {
        if self.width() == 1 && !self.is_vector() {
            vec![self.id.clone()]
        } else {
            (0..self.width()).map(|k| format!("{}[{k}]", self.id)).collect()
        }
    }

    fn is_vector(&self) -> bool {
        matches!(
            self.kind,
            Kind::IpOctets { .. } | Kind::Bins { .. } | Kind::Poly { .. } | Kind::Fourier { .. } | Kind::Gauss { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    pub entries: Vec<FeatureDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryCount {
    pub category: Category,
    pub families: usize,
    pub columns: usize,
    pub published: usize,
}

impl FeatureCatalog {
    pub fn builtin() -> FeatureCatalog {
        FeatureCatalog::parse(DEFAULT_MANIFEST).expect("built-in catalog parses")
    }

    pub fn builtin_manifest() -> &'static str {
        DEFAULT_MANIFEST
    }

    pub fn load(path: &Path) -> Result<FeatureCatalog, CatalogError> {
        FeatureCatalog::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<FeatureCatalog, CatalogError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let def = parse_line(content).map_err(|msg| CatalogError::Parse { line, msg })?;
            if !seen.insert(def.id.clone()) {
                return Err(CatalogError::Duplicate { line, id: def.id });
            }
            entries.push(def);
        }
        Ok(FeatureCatalog { entries })
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.id);
            out.push(' ');
            out.push_str(e.category.name());
            for (k, v) in &e.params {
                out.push_str(&format!(" {k}={v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn columns(&self) -> Vec<String> {
        self.entries.iter().flat_map(|e| e.column_names()).collect()
    }

    pub fn width(&self) -> usize {
        self.entries.iter().map(|e| e.width()).sum()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureDef> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Families per category, which is the unit the published totals count.
    pub fn category_counts(&self) -> Vec<CategoryCount> {
        Category::ALL
            .into_iter()
            .map(|category| {
                let of: Vec<_> = self.entries.iter().filter(|e| e.category == category).collect();
                CategoryCount {
                    category,
                    families: of.len(),
                    columns: of.iter().map(|e| e.width()).sum(),
                    published: category.published_total(),
                }
            })
            .collect()
    }
}

fn parse_line(content: &str) -> Result<FeatureDef, String> {
    let mut parts = content.split_whitespace();
    let id = parts.next().ok_or("missing feature id")?.to_string();
    if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("invalid feature id `{id}`"));
    }
    let category: Category = parts.next().ok_or("missing category")?.parse()?;
    let mut params = Vec::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
        if params.iter().any(|(pk, _): &(String, String)| pk == k) {
            return Err(format!("parameter `{k}` given twice"));
        }
        params.push((k.to_string(), v.to_string()));
    }
    let kind = parse_kind(&params)?;
    Ok(FeatureDef { id, category, kind, params })
}

struct Params<'a>(&'a [(String, String)]);

impl Params<'_> {
    fn raw(&self, key: &str) -> Result<&str, String> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format!("missing parameter `{key}`"))
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T, String> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| format!("invalid value `{v}` for `{key}`"))
    }

    fn dir(&self) -> Result<Dir, String> {
        match self.raw("dir")? {
            "in" => Ok(Dir::In),
            "out" => Ok(Dir::Out),
            "all" => Ok(Dir::All),
            v => Err(format!("invalid dir `{v}`")),
        }
    }

    fn end(&self) -> Result<Endpoint, String> {
        match self.raw("end")? {
            "client" => Ok(Endpoint::Client),
            "server" => Ok(Endpoint::Server),
            v => Err(format!("invalid end `{v}`")),
        }
    }

    fn check(&self, allowed: &[&str]) -> Result<(), String> {
        for (k, _) in self.0 {
            if k != "kind" && !allowed.contains(&k.as_str()) {
                return Err(format!("unexpected parameter `{k}`"));
            }
        }
        Ok(())
    }
}

fn parse_kind(params: &[(String, String)]) -> Result<Kind, String> {
    let p = Params(params);
    let kind = p.raw("kind")?;
    let (kind, allowed): (Kind, &[&str]) = match kind {
        "size" => {
            let metric = match p.raw("metric")? {
                "count" => Metric::Count,
                "sum" => Metric::Sum,
                "mean" => Metric::Mean,
                "median" => Metric::Median,
                "mode" => Metric::Mode,
                "std" => Metric::Std,
                "min" => Metric::Min,
                "max" => Metric::Max,
                v => return Err(format!("invalid metric `{v}`")),
            };
            (Kind::Size { metric, dir: p.dir()? }, &["metric", "dir"])
        }
        "flag" => {
            use crate::capture::flags;
            let flag = match p.raw("flag")? {
                "fin" => flags::FIN,
                "syn" => flags::SYN,
                "rst" => flags::RST,
                "psh" => flags::PSH,
                "ack" => flags::ACK,
                "urg" => flags::URG,
                v => return Err(format!("invalid flag `{v}`")),
            };
            (Kind::Flag { flag, dir: p.dir()? }, &["flag", "dir"])
        }
        "header-len-mode" => (Kind::HeaderLenMode, &[]),
        "throughput" => (Kind::Throughput { dir: p.dir()? }, &["dir"]),
        "peak-throughput" => (Kind::PeakThroughput { dir: p.dir()? }, &["dir"]),
        "iat-mean" => (Kind::IatMean { dir: p.dir()? }, &["dir"]),
        "iat-std" => (Kind::IatStd { dir: p.dir()? }, &["dir"]),
        "retransmissions" => (Kind::Retransmissions { dir: p.dir()? }, &["dir"]),
        "retransmission-ratio" => (Kind::RetransmissionRatio, &[]),
        "syn-attempts" => (Kind::SynAttempts, &[]),
        "duration" => (Kind::Duration, &[]),
        "context-density" => (Kind::ContextDensity, &[]),
        "context-count" => (Kind::ContextCount, &[]),
        "context-same-server" => (Kind::ContextSameServer, &[]),
        "context-same-client" => (Kind::ContextSameClient, &[]),
        "ip-octets" => (Kind::IpOctets { end: p.end()? }, &["end"]),
        "port" => (Kind::Port { end: p.end()? }, &["end"]),
        "local" => (Kind::Local { end: p.end()? }, &["end"]),
        "same-subnet" => (Kind::SameSubnet, &[]),
        "bins" => {
            let period_secs: u32 = p.num("period")?;
            let bins: usize = p.num("bins")?;
            if period_secs == 0 || bins == 0 {
                return Err("period and bins must be positive".into());
            }
            (Kind::Bins { dir: p.dir()?, period_secs, bins }, &["dir", "period", "bins"])
        }
        "poly" => (Kind::Poly { dir: p.dir()?, degree: p.num("degree")? }, &["dir", "degree"]),
        "fourier" => {
            let part = match p.raw("part")? {
                "modulus" => FourierPart::Modulus,
                "angle" => FourierPart::Angle,
                v => return Err(format!("invalid part `{v}`")),
            };
            let mode = match p.raw("mode")? {
                "in" => FourierMode::In,
                "out" => FourierMode::Out,
                "signed" => FourierMode::Signed,
                v => return Err(format!("invalid mode `{v}`")),
            };
            let count: usize = p.num("count")?;
            if count == 0 || count > super::math::DFT_LEN {
                return Err(format!("count must be in 1..={}", super::math::DFT_LEN));
            }
            (Kind::Fourier { part, mode, count }, &["part", "mode", "count"])
        }
        "gauss" => {
            let slices: usize = p.num("slices")?;
            if slices == 0 {
                return Err("slices must be positive".into());
            }
            (Kind::Gauss { dir: p.dir()?, slices }, &["dir", "slices"])
        }
        "closing" => (Kind::Closing, &[]),
        "mutual-flows" => {
            let side = match p.raw("side")? {
                "before" => NeighbourSide::Before,
                "after" => NeighbourSide::After,
                v => return Err(format!("invalid side `{v}`")),
            };
            let horizon_secs: f64 = p.num("horizon")?;
            if !horizon_secs.is_finite() || horizon_secs <= 0.0 {
                return Err("horizon must be positive".into());
            }
            (Kind::MutualFlows { side, horizon_secs }, &["side", "horizon"])
        }
        other => return Err(format!("unknown kind `{other}`")),
    };
    p.check(allowed)?;
    Ok(kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_is_within_published_totals() {
        let cat = FeatureCatalog::builtin();
        for c in cat.category_counts() {
            assert!(c.families > 0, "{}", c.category);
            assert!(c.families <= c.published, "{} has {} families", c.category, c.families);
        }
        let cols = cat.columns();
        let unique: HashSet<_> = cols.iter().collect();
        assert_eq!(unique.len(), cols.len());
    }

    #[test]
    fn published_subset_columns_exist() {
        let cols = FeatureCatalog::builtin().columns();
        for name in [
            "PolyInd3ordOut[0]",
            "PolyInd13ordOut[13]",
            "InPkt1s10i[7]",
            "GaussProds8All[7]",
            "GaussProds8Out[7]",
            "SigPktLenIn",
            "SigPktLenOut",
            "MeanPktLenIn",
            "ConTcpFinCntIn",
            "ConTcpSynCntIn",
            "FinCntIn",
            "PshCntIn",
            "UrgCntIn",
            "ModTCPHdrLen",
            "CntOfOldFlows",
            "CntOfNewFlows",
            "InPktLen32s10i[0]",
            "OutPktLen4s10i[2]",
            "FourGonAngleN[9]",
            "FourGonModulN[0]",
            "FourGonModulIn[1]",
            "FourGonAngleOut[1]",
        ] {
            assert!(cols.iter().any(|c| c == name), "{name}");
        }
    }

    #[test]
    fn manifest_round_trips() {
        let cat = FeatureCatalog::builtin();
        assert_eq!(FeatureCatalog::parse(&cat.to_manifest()).unwrap(), cat);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = FeatureCatalog::parse("# c\nA statistical kind=size metric=mean dir=in\nB nonsense kind=duration\n")
            .unwrap_err();
        assert!(matches!(err, CatalogError::Parse { line: 3, .. }));
        let err = FeatureCatalog::parse("A dynamic kind=duration\nA dynamic kind=duration\n").unwrap_err();
        assert!(matches!(err, CatalogError::Duplicate { line: 2, .. }));
        let err = FeatureCatalog::parse("A dynamic kind=duration dir=in\n").unwrap_err();
        assert!(err.to_string().contains("unexpected parameter"));
    }
}

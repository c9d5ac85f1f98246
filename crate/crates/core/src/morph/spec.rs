use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::Path;

use super::MorphError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDist {
    /// Seconds.
    Constant(f64),
    /// Mean and standard deviation, seconds.
    Normal { mean: f64, std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TunnelMode {
    Http,
    Https,
}

/// One transformation stage. Percentages and correlations are fractions
/// in `[0, 1]`, times are seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Technique {
    Delay { dist: DelayDist, correlation: f64 },
    Loss { pct: f64, correlation: f64 },
    Corrupt { pct: f64, correlation: f64 },
    Duplicate { pct: f64, correlation: f64 },
    Reorder { pct: f64, gap: f64, correlation: f64 },
    Fragment { mtu: u16 },
    Tunnel { mode: TunnelMode, client: Option<Ipv4Addr>, server: Option<SocketAddrV4> },
}

pub const MIN_MTU: u16 = 68;
/// Gap applied to reordered packets when a stage gives none.
pub const DEFAULT_REORDER_GAP: f64 = 0.010;

#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscationSpec {
    /// Preset letter, `tunnel-http`, `tunnel-https`, or `custom`.
    pub technique_id: String,
    pub stages: Vec<Technique>,
    pub seed: u64,
    /// Keep the three handshake packets of every connection out of loss,
    /// corruption and reordering.
    pub protect_handshake: bool,
}

pub const PRESET_IDS: [&str; 17] =
    ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q"];

/// Stages of a built-in technique `a`..`q`.
pub fn preset(id: &str) -> Option<Vec<Technique>> {
    use DelayDist::*;
    use Technique::*;
    let normal = |mean: f64, std: f64| Delay { dist: Normal { mean, std }, correlation: 0.25 };
    Some(match id {
        "a" => vec![Delay { dist: Constant(1.0), correlation: 0.0 }],
        "b" => vec![Delay { dist: Constant(8.0), correlation: 0.0 }],
        "c" => vec![normal(5.0, 2.5)],
        "d" => vec![Loss { pct: 0.25, correlation: 0.0 }],
        "e" => vec![Corrupt { pct: 0.25, correlation: 0.0 }],
        "f" => vec![Corrupt { pct: 0.35, correlation: 0.0 }],
        "g" => vec![Corrupt { pct: 0.35, correlation: 0.25 }],
        "h" => vec![Duplicate { pct: 0.05, correlation: 0.0 }],
        "i" => vec![Reorder { pct: 0.25, gap: 0.010, correlation: 0.5 }],
        "j" => vec![Reorder { pct: 0.50, gap: 0.010, correlation: 0.5 }],
        "k" => vec![Fragment { mtu: 1000 }],
        "l" => vec![Fragment { mtu: 750 }],
        "m" => vec![Fragment { mtu: 500 }],
        "n" => vec![Fragment { mtu: 250 }],
        "o" => vec![
            normal(0.010, 0.020),
            Loss { pct: 0.23, correlation: 0.0 },
            Corrupt { pct: 0.23, correlation: 0.0 },
            Reorder { pct: 0.23, gap: DEFAULT_REORDER_GAP, correlation: 0.0 },
        ],
        "p" => vec![
            normal(7.750, 0.150),
            Loss { pct: 0.001, correlation: 0.0 },
            Corrupt { pct: 0.001, correlation: 0.0 },
            Duplicate { pct: 0.001, correlation: 0.0 },
            Reorder { pct: 0.001, gap: DEFAULT_REORDER_GAP, correlation: 0.0 },
        ],
        "q" => vec![
            normal(6.800, 0.150),
            Loss { pct: 0.01, correlation: 0.0 },
            Corrupt { pct: 0.01, correlation: 0.0 },
            Duplicate { pct: 0.01, correlation: 0.0 },
            Reorder { pct: 0.01, gap: DEFAULT_REORDER_GAP, correlation: 0.0 },
        ],
        "tunnel-http" => vec![Tunnel { mode: TunnelMode::Http, client: None, server: None }],
        "tunnel-https" => vec![Tunnel { mode: TunnelMode::Https, client: None, server: None }],
        _ => return None,
    })
}

impl ObfuscationSpec {
    pub fn preset(id: &str, seed: u64) -> Result<ObfuscationSpec, MorphError> {
        let stages = preset(id).ok_or_else(|| MorphError::UnknownTechnique(id.to_string()))?;
        Ok(ObfuscationSpec { technique_id: id.to_string(), stages, seed, protect_handshake: true })
    }

    /// A preset id or the path of a spec file.
    pub fn resolve(spec: &str, seed: u64) -> Result<ObfuscationSpec, MorphError> {
        if preset(spec).is_some() {
            return ObfuscationSpec::preset(spec, seed);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(MorphError::UnknownTechnique(spec.to_string()));
        }
        ObfuscationSpec::parse(&std::fs::read_to_string(path)?, seed)
    }

    /// One technique per line: `<id> [key=value ...]`, `#` starts a comment.
    pub fn parse(text: &str, seed: u64) -> Result<ObfuscationSpec, MorphError> {
        let mut stages = Vec::new();
        let mut ids = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.split_whitespace();
            let id = parts.next().unwrap_or_default();
            let kv: Vec<&str> = parts.collect();
            let parsed = parse_line(id, &kv).map_err(|e| match e {
                LineError::Unknown => MorphError::UnknownTechnique(id.to_string()),
                LineError::Invalid(msg) => MorphError::Config { line: n + 1, msg },
            })?;
            ids.push(id.to_string());
            stages.extend(parsed);
        }
        if stages.is_empty() {
            return Err(MorphError::Config { line: 0, msg: "spec defines no technique".into() });
        }
        let technique_id = if ids.len() == 1 && preset(&ids[0]).is_some() { ids[0].clone() } else { "custom".into() };
        Ok(ObfuscationSpec { technique_id, stages, seed, protect_handshake: true })
    }
}

enum LineError {
    Unknown,
    Invalid(String),
}

impl From<String> for LineError {
    fn from(s: String) -> Self {
        LineError::Invalid(s)
    }
}

fn parse_line(id: &str, kv: &[&str]) -> Result<Vec<Technique>, LineError> {
    let mut pairs = Vec::new();
    for p in kv {
        let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
        pairs.push((k, v));
    }
    let get = |k: &str| pairs.iter().rev().find(|(pk, _)| *pk == k).map(|(_, v)| *v);
    let known = |allowed: &[&str]| -> Result<(), LineError> {
        match pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(LineError::Invalid(format!("unexpected parameter `{k}` for `{id}`"))),
            None => Ok(()),
        }
    };

    let base = match id {
        "delay" => Technique::Delay { dist: DelayDist::Constant(0.0), correlation: 0.0 },
        "loss" => Technique::Loss { pct: 0.0, correlation: 0.0 },
        "corrupt" => Technique::Corrupt { pct: 0.0, correlation: 0.0 },
        "duplicate" => Technique::Duplicate { pct: 0.0, correlation: 0.0 },
        "reorder" => Technique::Reorder { pct: 0.0, gap: DEFAULT_REORDER_GAP, correlation: 0.0 },
        "fragment" => Technique::Fragment { mtu: 1500 },
        other => match preset(other) {
            Some(stages) if stages.len() == 1 => stages.into_iter().next().unwrap_or(Technique::Fragment { mtu: 1500 }),
            Some(stages) => {
                if !pairs.is_empty() {
                    return Err(LineError::Invalid(format!("combination `{other}` takes no parameters")));
                }
                return Ok(stages);
            }
            None => return Err(LineError::Unknown),
        },
    };

    let pct = |k: &str, cur: f64| -> Result<f64, String> { get(k).map_or(Ok(cur), percent) };
    let t = match base {
        Technique::Delay { dist, correlation } => {
            known(&["constant", "mean", "std", "correlation"])?;
            let dist = match (get("constant"), get("mean"), get("std")) {
                (Some(c), None, None) => DelayDist::Constant(duration(c)?),
                (None, Some(m), s) => {
                    let std = s.map_or(Ok(0.0), duration)?;
                    DelayDist::Normal { mean: duration(m)?, std }
                }
                (None, None, Some(s)) => match dist {
                    DelayDist::Normal { mean, .. } => DelayDist::Normal { mean, std: duration(s)? },
                    DelayDist::Constant(_) => return Err(LineError::Invalid("std needs a mean".into())),
                },
                (None, None, None) => dist,
                _ => return Err(LineError::Invalid("give either constant or mean/std".into())),
            };
            Technique::Delay { dist, correlation: pct("correlation", correlation)? }
        }
        Technique::Loss { pct: p, correlation } => {
            known(&["pct", "correlation"])?;
            Technique::Loss { pct: pct("pct", p)?, correlation: pct("correlation", correlation)? }
        }
        Technique::Corrupt { pct: p, correlation } => {
            known(&["pct", "correlation"])?;
            Technique::Corrupt { pct: pct("pct", p)?, correlation: pct("correlation", correlation)? }
        }
        Technique::Duplicate { pct: p, correlation } => {
            known(&["pct", "correlation"])?;
            Technique::Duplicate { pct: pct("pct", p)?, correlation: pct("correlation", correlation)? }
        }
        Technique::Reorder { pct: p, gap, correlation } => {
            known(&["pct", "gap", "correlation"])?;
            Technique::Reorder {
                pct: pct("pct", p)?,
                gap: get("gap").map_or(Ok(gap), duration)?,
                correlation: pct("correlation", correlation)?,
            }
        }
        Technique::Fragment { mtu } => {
            known(&["mtu"])?;
            let mtu = match get("mtu") {
                Some(v) => v.parse::<u16>().map_err(|_| format!("invalid mtu `{v}`"))?,
                None => mtu,
            };
            if mtu < MIN_MTU {
                return Err(LineError::Invalid(format!("mtu must be at least {MIN_MTU}")));
            }
            Technique::Fragment { mtu }
        }
        Technique::Tunnel { mode, .. } => {
            known(&["client", "server"])?;
            let client = get("client")
                .map(|v| v.parse::<Ipv4Addr>().map_err(|_| format!("invalid client address `{v}`")))
                .transpose()?;
            let server = get("server")
                .map(|v| v.parse::<SocketAddrV4>().map_err(|_| format!("invalid server address `{v}`")))
                .transpose()?;
            Technique::Tunnel { mode, client, server }
        }
    };
    Ok(vec![t])
}

fn percent(v: &str) -> Result<f64, String> {
    let x: f64 = v.trim_end_matches('%').parse().map_err(|_| format!("invalid percentage `{v}`"))?;
    if !(0.0..=100.0).contains(&x) {
        return Err(format!("percentage `{v}` outside 0..100"));
    }
    Ok(x / 100.0)
}

/// `10ms`, `2.5s`, `500us`; a bare number is seconds.
fn duration(v: &str) -> Result<f64, String> {
    let (num, scale) = if let Some(n) = v.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = v.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = v.strip_suffix('s') {
        (n, 1.0)
    } else {
        (v, 1.0)
    };
    let x: f64 = num.parse().map_err(|_| format!("invalid duration `{v}`"))?;
    if !x.is_finite() || x < 0.0 {
        return Err(format!("duration `{v}` must be non-negative"));
    }
    Ok(x * scale)
}

use std::collections::HashSet;
use std::sync::Arc;

use ipnet::Ipv4Net;
use rayon::prelude::*;
use thiserror::Error;

use super::catalog::{Dir, Endpoint, FeatureCatalog, FourierMode, FourierPart, Kind, Metric, NeighbourSide};
use super::math;
use super::{FeatureValue, FeatureVector};
use crate::capture::TcpFrame;
use crate::context::{self, ConnectionContext, HostPairIndex, DEFAULT_CONTEXT_TAU_SECS};
use crate::flows::{Direction, TcpConnection};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("context is centred on connection {context}, not {connection}")]
    ContextMismatch { connection: usize, context: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub tau: f64,
    pub local_prefixes: Vec<Ipv4Net>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { tau: DEFAULT_CONTEXT_TAU_SECS, local_prefixes: Vec::new() }
    }
}

/// Extracts catalog features for connections of one trace.
pub struct Extractor<'a> {
    catalog: &'a FeatureCatalog,
    connections: &'a [TcpConnection],
    options: ExtractOptions,
    columns: Arc<[String]>,
    pairs: HostPairIndex,
}

struct Pkt<'a> {
    t: i64,
    size: f64,
    dir: Direction,
    tcp: Option<&'a TcpFrame>,
}

struct View<'a> {
    conn: &'a TcpConnection,
    pkts: Vec<Pkt<'a>>,
}

impl<'a> View<'a> {
    fn new(conn: &'a TcpConnection) -> Self {
        let pkts = conn
            .packets()
            .into_iter()
            .map(|(dir, tp)| Pkt {
                t: tp.packet.t.micros(),
                size: f64::from(tp.packet.size),
                dir,
                tcp: tp.packet.tcp(),
            })
            .collect();
        View { conn, pkts }
    }

    fn select(&self, dir: Dir) -> impl Iterator<Item = &Pkt<'a>> {
        self.pkts.iter().filter(move |p| match dir {
            Dir::In => p.dir == Direction::Inbound,
            Dir::Out => p.dir == Direction::Outbound,
            Dir::All => true,
        })
    }

    fn sizes(&self, dir: Dir) -> Vec<f64> {
        self.select(dir).map(|p| p.size).collect()
    }

    fn payload(p: &Pkt) -> usize {
        p.tcp.map_or(0, |f| f.data.len())
    }

    fn retransmissions(&self, dir: Dir) -> (usize, usize) {
        let mut count = 0;
        let mut data = 0;
        for d in [Direction::Outbound, Direction::Inbound] {
            if (dir == Dir::In && d == Direction::Outbound) || (dir == Dir::Out && d == Direction::Inbound) {
                continue;
            }
            let mut seen = HashSet::new();
            for f in self.pkts.iter().filter(|p| p.dir == d).filter_map(|p| p.tcp) {
                if f.data.is_empty() {
                    continue;
                }
                data += 1;
                if !seen.insert(f.tcp.seq) {
                    count += 1;
                }
            }
        }
        (count, data)
    }
}

struct Out<'v> {
    values: &'v mut Vec<FeatureValue>,
    valid: &'v mut Vec<bool>,
}

impl Out<'_> {
    fn num(&mut self, x: f64) {
        self.opt(Some(x));
    }

    fn opt(&mut self, x: Option<f64>) {
        match x {
            Some(v) if v.is_finite() => {
                self.values.push(FeatureValue::Num(v));
                self.valid.push(true);
            }
            _ => {
                self.values.push(FeatureValue::Num(0.0));
                self.valid.push(false);
            }
        }
    }

    fn many(&mut self, xs: Option<Vec<f64>>, width: usize) {
        match xs {
            Some(v) => {
                for i in 0..width {
                    self.opt(v.get(i).copied());
                }
            }
            None => {
                for _ in 0..width {
                    self.opt(None);
                }
            }
        }
    }
}

impl<'a> Extractor<'a> {
    pub fn new(catalog: &'a FeatureCatalog, connections: &'a [TcpConnection], options: ExtractOptions) -> Self {
        Extractor {
            catalog,
            connections,
            options,
            columns: catalog.columns().into(),
            pairs: HostPairIndex::new(connections),
        }
    }

    pub fn columns(&self) -> &Arc<[String]> {
        &self.columns
    }

    pub fn extract(&self, conn: &TcpConnection, ctx: &ConnectionContext) -> Result<FeatureVector, FeatureError> {
        if ctx.center != conn.id {
            return Err(FeatureError::ContextMismatch { connection: conn.id, context: ctx.center });
        }
        let view = View::new(conn);
        let width = self.columns.len();
        let mut values = Vec::with_capacity(width);
        let mut valid = Vec::with_capacity(width);
        let mut out = Out { values: &mut values, valid: &mut valid };
        for def in &self.catalog.entries {
            self.compute(&def.kind, &view, ctx, &mut out);
        }
        Ok(FeatureVector { connection_id: conn.id, columns: self.columns.clone(), values, valid, labels: Vec::new() })
    }

    /// All connections in parallel, in connection order.
    pub fn extract_all(&self) -> Vec<FeatureVector> {
        let contexts = context::sliding_windows(self.connections, self.options.tau);
        self.connections
            .par_iter()
            .zip(contexts.par_iter())
            .map(|(c, ctx)| self.extract(c, ctx).expect("contexts are built per connection"))
            .collect()
    }

    fn compute(&self, kind: &Kind, v: &View, ctx: &ConnectionContext, out: &mut Out) {
        let conn = v.conn;
        match *kind {
            Kind::Size { metric, dir } => {
                let s = v.sizes(dir);
                out.opt(match metric {
                    Metric::Count => Some(s.len() as f64),
                    Metric::Sum => Some(s.iter().sum()),
                    Metric::Mean => math::mean(&s),
                    Metric::Median => math::median(&s),
                    Metric::Mode => math::mode(&s),
                    Metric::Std => math::std_dev(&s),
                    Metric::Min => s.iter().copied().reduce(f64::min),
                    Metric::Max => s.iter().copied().reduce(f64::max),
                })
            }
            Kind::Flag { flag, dir } => {
                out.num(v.select(dir).filter(|p| p.tcp.is_some_and(|f| f.tcp.has(flag))).count() as f64)
            }
            Kind::HeaderLenMode => {
                let lens: Vec<f64> = v.pkts.iter().filter_map(|p| p.tcp).map(|f| f.tcp.header_len() as f64).collect();
                out.opt(math::mode(&lens))
            }
            Kind::Throughput { dir } => {
                let sel: Vec<&Pkt> = v.select(dir).collect();
                let span = match (sel.first(), sel.last()) {
                    (Some(a), Some(b)) => (b.t - a.t) as f64 / 1e6,
                    _ => 0.0,
                };
                let bytes: usize = sel.iter().map(|p| View::payload(p)).sum();
                out.opt((span > 0.0).then(|| bytes as f64 / span))
            }
            Kind::PeakThroughput { dir } => {
                let t0 = conn.t_s.micros();
                let mut bins: Vec<(i64, usize)> = Vec::new();
                for p in v.select(dir) {
                    let b = (p.t - t0).div_euclid(1_000_000);
                    match bins.iter_mut().find(|(k, _)| *k == b) {
                        Some(e) => e.1 += View::payload(p),
                        None => bins.push((b, View::payload(p))),
                    }
                }
                out.opt(bins.iter().map(|&(_, n)| n as f64).reduce(f64::max))
            }
            Kind::IatMean { dir } | Kind::IatStd { dir } => {
                let t: Vec<i64> = v.select(dir).map(|p| p.t).collect();
                let gaps: Vec<f64> = t.windows(2).map(|w| (w[1] - w[0]) as f64 / 1e6).collect();
                out.opt(if matches!(kind, Kind::IatMean { .. }) { math::mean(&gaps) } else { math::std_dev(&gaps) })
            }
            Kind::Retransmissions { dir } => out.num(v.retransmissions(dir).0 as f64),
            Kind::RetransmissionRatio => {
                let (n, data) = v.retransmissions(Dir::All);
                out.opt((data > 0).then(|| n as f64 / data as f64))
            }
            Kind::SynAttempts => out.num(f64::from(conn.syn_count)),
            Kind::Duration => out.num((conn.t_e.micros() - conn.t_s.micros()) as f64 / 1e6),
            Kind::ContextDensity => out.opt((ctx.tau > 0.0).then(|| ctx.members.len() as f64 / ctx.tau)),
            Kind::ContextCount => out.num(ctx.members.len() as f64),
            Kind::ContextSameServer | Kind::ContextSameClient => {
                let n = ctx
                    .members
                    .iter()
                    .filter_map(|&id| self.connection(id))
                    .filter(|o| match kind {
                        Kind::ContextSameServer => o.ip_s() == conn.ip_s(),
                        _ => o.ip_c() == conn.ip_c(),
                    })
                    .count();
                out.num(n as f64)
            }
            Kind::IpOctets { end } => {
                let ip = match end {
                    Endpoint::Client => conn.ip_c(),
                    Endpoint::Server => conn.ip_s(),
                };
                for o in ip.octets() {
                    out.num(f64::from(o));
                }
            }
            Kind::Port { end } => out.num(f64::from(match end {
                Endpoint::Client => conn.p_c(),
                Endpoint::Server => conn.p_s(),
            })),
            Kind::Local { end } => {
                let ip = match end {
                    Endpoint::Client => conn.ip_c(),
                    Endpoint::Server => conn.ip_s(),
                };
                out.num(flag(self.options.local_prefixes.iter().any(|n| n.contains(&ip))))
            }
            Kind::SameSubnet => out.num(flag(
                self.options.local_prefixes.iter().any(|n| n.contains(&conn.ip_c()) && n.contains(&conn.ip_s())),
            )),
            Kind::Bins { dir, period_secs, bins } => {
                let t0 = conn.t_s.micros();
                let period = i64::from(period_secs) * 1_000_000;
                let mut acc = vec![0.0; bins];
                for p in v.select(dir) {
                    let off = p.t - t0;
                    if (0..period).contains(&off) {
                        acc[(off as i128 * bins as i128 / period as i128) as usize] += p.size;
                    }
                }
                for x in acc {
                    out.num(x);
                }
            }
            Kind::Poly { dir, degree } => out.many(math::polyfit(&v.sizes(dir), degree), degree + 1),
            Kind::Fourier { part, mode, count } => {
                let seq: Vec<f64> = match mode {
                    FourierMode::In => v.sizes(Dir::In),
                    FourierMode::Out => v.sizes(Dir::Out),
                    FourierMode::Signed => {
                        v.pkts.iter().map(|p| if p.dir == Direction::Inbound { -p.size } else { p.size }).collect()
                    }
                };
                for z in math::dft(&seq).into_iter().take(count) {
                    out.num(match part {
                        FourierPart::Modulus => z.norm(),
                        FourierPart::Angle => math::angle(z),
                    });
                }
            }
            Kind::Gauss { dir, slices } => {
                let s = v.sizes(dir);
                if s.is_empty() {
                    out.many(None, slices);
                } else {
                    out.many(Some(math::gauss_slices(&s, slices)), slices);
                }
            }
            Kind::Closing => {
                let token = if conn.close.is_legal() { "legal" } else { "illegal" };
                out.values.push(FeatureValue::Token(token.to_string()));
                out.valid.push(true);
            }
            Kind::MutualFlows { side, horizon_secs } => {
                let side = match side {
                    NeighbourSide::Before => context::Side::Before,
                    NeighbourSide::After => context::Side::After,
                };
                out.num(self.pairs.count(conn, horizon_secs, side) as f64)
            }
        }
    }

    fn connection(&self, id: usize) -> Option<&TcpConnection> {
        match self.connections.get(id) {
            Some(c) if c.id == id => Some(c),
            _ => self.connections.iter().find(|c| c.id == id),
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

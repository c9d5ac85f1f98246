//! Per-packet network impairments in the style of netem.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::spec::DelayDist;
use crate::capture::{Frame, Ipv4Header, Packet, TcpFrame, Timestamp, ETH_HEADER_LEN};
use crate::flows::assemble_connections;

/// Assembly timeout long enough that no connection is split by inactivity.
const NO_TIMEOUT: f64 = 1e12;

/// Correlated uniform source: `v_i = rho * v_{i-1} + (1 - rho) * u_i`.
#[derive(Debug, Clone)]
pub struct Correlated {
    rho: f64,
    last: Option<f64>,
}

impl Correlated {
    pub fn new(rho: f64) -> Self {
        Correlated { rho, last: None }
    }

    pub fn next(&mut self, fresh: f64) -> f64 {
        let v = match self.last {
            Some(l) => self.rho * l + (1.0 - self.rho) * fresh,
            None => fresh,
        };
        self.last = Some(v);
        v
    }
}

/// Selects each item with probability `pct`, draws correlated per netem.
pub(crate) struct Selector {
    pct: f64,
    source: Correlated,
}

impl Selector {
    pub(crate) fn new(pct: f64, correlation: f64) -> Self {
        Selector { pct, source: Correlated::new(correlation) }
    }

    pub(crate) fn pick(&mut self, rng: &mut ChaCha20Rng) -> bool {
        let u: f64 = rng.random();
        self.source.next(u) < self.pct
    }
}

/// Trace indices of every connection's SYN, SYN-ACK and ACK.
pub fn handshake_indices(packets: &[Packet]) -> HashSet<usize> {
    assemble_connections(packets, NO_TIMEOUT).connections.iter().flat_map(|c| c.handshake).collect()
}

fn sort_by_time(packets: &mut [Packet]) {
    packets.sort_by_key(|p| p.t);
}

fn shift(t: Timestamp, secs: f64) -> Timestamp {
    t.saturating_add_micros((secs * 1e6).round() as i64)
}

/// Per-packet delays, smoothed with `correlation` for the normal case and
/// clamped at zero.
pub fn delays(n: usize, dist: DelayDist, correlation: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    match dist {
        DelayDist::Constant(c) => vec![c.max(0.0); n],
        DelayDist::Normal { mean, std } => {
            let normal = Normal::new(mean, std).expect("validated standard deviation");
            let mut src = Correlated::new(correlation);
            (0..n).map(|_| src.next(normal.sample(rng)).max(0.0)).collect()
        }
    }
}

/// Delays every packet. Handshake packets never overtake their predecessor
/// in the handshake, and no later packet of a connection moves ahead of the
/// handshake's final ACK, so connections stay assemblable.
pub fn delay(mut packets: Vec<Packet>, dist: DelayDist, correlation: f64, rng: &mut ChaCha20Rng) -> Vec<Packet> {
    let d = delays(packets.len(), dist, correlation, rng);
    let conns: Vec<([usize; 3], Vec<usize>)> = assemble_connections(&packets, NO_TIMEOUT)
        .connections
        .iter()
        .map(|c| (c.handshake, c.packets().iter().map(|(_, tp)| tp.index).filter(|&i| i > c.handshake[2]).collect()))
        .collect();
    for (p, d) in packets.iter_mut().zip(&d) {
        p.t = shift(p.t, *d);
    }
    for ([a, b, c], rest) in conns {
        packets[b].t = packets[b].t.max(packets[a].t);
        packets[c].t = packets[c].t.max(packets[b].t);
        for i in rest {
            packets[i].t = packets[i].t.max(packets[c].t);
        }
    }
    sort_by_time(&mut packets);
    packets
}

pub fn drop(packets: Vec<Packet>, pct: f64, correlation: f64, protect: bool, rng: &mut ChaCha20Rng) -> Vec<Packet> {
    let keep = if protect { handshake_indices(&packets) } else { HashSet::new() };
    let mut sel = Selector::new(pct, correlation);
    packets.into_iter().enumerate().filter(|(i, _)| keep.contains(i) || !sel.pick(rng)).map(|(_, p)| p).collect()
}

/// XORs one payload byte of selected packets with a non-zero value. Only
/// decoded TCP packets with payload are candidates; checksums go stale.
pub fn corrupt(
    mut packets: Vec<Packet>,
    pct: f64,
    correlation: f64,
    protect: bool,
    rng: &mut ChaCha20Rng,
) -> Vec<Packet> {
    let keep = if protect { handshake_indices(&packets) } else { HashSet::new() };
    let mut sel = Selector::new(pct, correlation);
    for (i, p) in packets.iter_mut().enumerate() {
        let Some(f) = p.tcp_mut() else { continue };
        if f.data.is_empty() || keep.contains(&i) {
            continue;
        }
        if sel.pick(rng) {
            let at = rng.random_range(0..f.data.len());
            f.data[at] ^= rng.random_range(1..=255u8);
        }
    }
    packets
}

pub fn duplicate(packets: Vec<Packet>, pct: f64, correlation: f64, rng: &mut ChaCha20Rng) -> Vec<Packet> {
    let mut sel = Selector::new(pct, correlation);
    let mut out = Vec::with_capacity(packets.len());
    for p in packets {
        let twice = sel.pick(rng);
        if twice {
            out.push(p.clone());
        }
        out.push(p);
    }
    out
}

pub fn reorder(
    mut packets: Vec<Packet>,
    pct: f64,
    gap: f64,
    correlation: f64,
    protect: bool,
    rng: &mut ChaCha20Rng,
) -> Vec<Packet> {
    let keep = if protect { handshake_indices(&packets) } else { HashSet::new() };
    let mut sel = Selector::new(pct, correlation);
    let chosen: Vec<usize> = (0..packets.len()).filter(|i| !keep.contains(i) && sel.pick(rng)).collect();
    reorder_selected(&mut packets, &chosen, gap);
    packets
}

/// Adds `gap` seconds to the chosen packets and re-sorts by time.
pub fn reorder_selected(packets: &mut [Packet], chosen: &[usize], gap: f64) {
    for &i in chosen {
        packets[i].t = shift(packets[i].t, gap);
    }
    sort_by_time(packets);
}

/// Splits TCP datagrams longer than `mtu` into IPv4 fragments. The first
/// fragment keeps the TCP header (and the original TCP checksum); later
/// fragments are raw frames.
pub fn fragment(packets: Vec<Packet>, mtu: u16) -> Vec<Packet> {
    let mut out = Vec::with_capacity(packets.len());
    for p in packets {
        match &p.frame {
            Frame::Tcp(f) if usize::from(f.ip.total_len) > usize::from(mtu) && p.size as usize <= p.encoded_len() => {
                out.extend(split(&p, f, mtu));
            }
            _ => out.push(p),
        }
    }
    out
}

fn copied_options(options: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < options.len() {
        match options[i] {
            0 => break,
            1 => i += 1,
            kind => {
                let len = options.get(i + 1).map_or(0, |&l| usize::from(l)).max(2);
                let end = (i + len).min(options.len());
                if kind & 0x80 != 0 {
                    out.extend_from_slice(&options[i..end]);
                }
                i = end;
            }
        }
    }
    while out.len() % 4 != 0 {
        out.push(0);
    }
    out
}

fn split(p: &Packet, f: &TcpFrame, mtu: u16) -> Vec<Packet> {
    let ip_bytes = f.ip_bytes();
    let payload = &ip_bytes[f.ip.header_len()..];
    let first_room = ((usize::from(mtu) - f.ip.header_len()) / 8) * 8;
    let later_options = copied_options(&f.ip.options);
    let later_room = ((usize::from(mtu) - 20 - later_options.len()) / 8) * 8;
    if first_room == 0 || later_room == 0 || payload.len() <= first_room {
        return vec![p.clone()];
    }
    let mut out = Vec::new();
    let mut off = 0;
    while off < payload.len() {
        let room = if off == 0 { first_room } else { later_room };
        let end = (off + room).min(payload.len());
        let more = end < payload.len() || f.ip.more_fragments;
        let mut ip = f.ip.clone();
        ip.dont_fragment = false;
        ip.more_fragments = more;
        ip.frag_offset = (off / 8) as u16;
        if off > 0 {
            ip.options = later_options.clone();
        }
        let chunk = &payload[off..end];
        let frame = if off == 0 && chunk.len() >= f.tcp.header_len() {
            let mut first = f.clone();
            first.ip = ip;
            first.trailer.clear();
            first.data = chunk[f.tcp.header_len()..].to_vec();
            first.refresh();
            Frame::Tcp(first)
        } else {
            Frame::Other(raw_fragment(f, ip, chunk))
        };
        let mut fp = Packet { t: p.t, size: 0, frame };
        fp.size = fp.encoded_len() as u32;
        out.push(fp);
        off = end;
    }
    out
}

fn raw_fragment(f: &TcpFrame, mut ip: Ipv4Header, chunk: &[u8]) -> Vec<u8> {
    ip.total_len = (ip.header_len() + chunk.len()) as u16;
    ip.checksum = ip.compute_checksum();
    let mut b = Vec::with_capacity(ETH_HEADER_LEN + ip.header_len() + chunk.len());
    b.extend_from_slice(&f.eth.dst.0);
    b.extend_from_slice(&f.eth.src.0);
    b.extend_from_slice(&crate::capture::ETHERTYPE_IPV4.to_be_bytes());
    ip.encode(&mut b);
    b.extend_from_slice(chunk);
    b
}

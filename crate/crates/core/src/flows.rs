//! Assembly of packets into TCP connection objects.
//!
//! A connection opens on a three-way handshake whose sequence numbers chain
//! as in RFC 793 (SYN `x`, SYN-ACK `ack = x + 1`, ACK `ack = y + 1`); the SYN
//! sender is the client. It closes on a completed FIN exchange, a RST, an
//! inactivity timeout, or a new SYN reusing the same address/port pair.
//! Packets that cannot be attributed to a handshake end up in the residue.

use std::collections::HashMap;
use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

use thiserror::Error;

use crate::capture::{flags, Frame, Packet, TcpFrame, Timestamp, IPPROTO_TCP};

pub const DEFAULT_FLOW_TIMEOUT_SECS: f64 = 600.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("packet {index} is not part of connection {connection}")]
    NotInConnection { index: usize, connection: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Client to server.
    Outbound,
    /// Server to client.
    Inbound,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Outbound => "outbound",
            Direction::Inbound => "inbound",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    /// FIN, FIN, final ACK.
    Endshake,
    Reset,
    Timeout,
    /// A fresh SYN reused the address/port pair before the connection closed.
    Superseded,
    /// The trace ended while the connection was still open.
    EndOfTrace,
}

impl CloseReason {
    pub fn is_legal(self) -> bool {
        self == CloseReason::Endshake
    }
}

/// A packet together with its position in the input trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePacket {
    pub index: usize,
    pub packet: Packet,
}

#[derive(Debug, Clone)]
pub struct TcpConnection {
    pub id: usize,
    pub t_s: Timestamp,
    pub t_e: Timestamp,
    pub client: SocketAddrV4,
    pub server: SocketAddrV4,
    /// Packets sent by the client, in trace order.
    pub client_packets: Vec<TracePacket>,
    /// Packets sent by the server, in trace order.
    pub server_packets: Vec<TracePacket>,
    /// Trace indices of the SYN, SYN-ACK and ACK that opened the connection.
    pub handshake: [usize; 3],
    pub close: CloseReason,
    /// SYN segments sent by the client, retransmissions included.
    pub syn_count: u32,
}

impl TcpConnection {
    pub fn ip_c(&self) -> Ipv4Addr {
        *self.client.ip()
    }

    pub fn ip_s(&self) -> Ipv4Addr {
        *self.server.ip()
    }

    pub fn p_c(&self) -> u16 {
        self.client.port()
    }

    pub fn p_s(&self) -> u16 {
        self.server.port()
    }

    pub fn packet_count(&self) -> usize {
        self.client_packets.len() + self.server_packets.len()
    }

    pub fn direction_of(&self, index: usize) -> Result<Direction, FlowError> {
        let has = |v: &[TracePacket]| v.binary_search_by_key(&index, |p| p.index).is_ok();
        if has(&self.client_packets) {
            Ok(Direction::Outbound)
        } else if has(&self.server_packets) {
            Ok(Direction::Inbound)
        } else {
            Err(FlowError::NotInConnection { index, connection: self.id })
        }
    }

    pub fn packets_in(&self, dir: Direction) -> &[TracePacket] {
        match dir {
            Direction::Outbound => &self.client_packets,
            Direction::Inbound => &self.server_packets,
        }
    }

    /// Both directions merged back into trace order.
    pub fn packets(&self) -> Vec<(Direction, &TracePacket)> {
        let mut out = Vec::with_capacity(self.packet_count());
        let (mut i, mut j) = (0, 0);
        let (c, s) = (&self.client_packets, &self.server_packets);
        while i < c.len() || j < s.len() {
            if j >= s.len() || (i < c.len() && c[i].index < s[j].index) {
                out.push((Direction::Outbound, &c[i]));
                i += 1;
            } else {
                out.push((Direction::Inbound, &s[j]));
                j += 1;
            }
        }
        out
    }

    /// Unordered endpoint pair, used to group connections between the same hosts.
    pub fn host_pair(&self) -> (Ipv4Addr, Ipv4Addr) {
        let (a, b) = (self.ip_c(), self.ip_s());
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Assembly {
    /// Connections ordered by start time; `id` equals the position.
    pub connections: Vec<TcpConnection>,
    /// Trace indices of TCP packets that belong to no connection.
    pub residue: Vec<usize>,
}

/// True for packets the assembler must place: decoded TCP frames and raw
/// IPv4 frames carrying TCP (non-initial fragments, truncated headers).
pub fn is_tcp_bearing(p: &Packet) -> bool {
    match &p.frame {
        Frame::Tcp(_) => true,
        Frame::Other(b) => {
            b.len() >= 34
                && u16::from_be_bytes([b[12], b[13]]) == crate::capture::ETHERTYPE_IPV4
                && b[14] >> 4 == 4
                && b[23] == IPPROTO_TCP
        }
    }
}

type TupleKey = (SocketAddrV4, SocketAddrV4);

fn tuple_key(a: SocketAddrV4, b: SocketAddrV4) -> TupleKey {
    if (a.ip(), a.port()) <= (b.ip(), b.port()) {
        (a, b)
    } else {
        (b, a)
    }
}

fn endpoints(f: &TcpFrame) -> (SocketAddrV4, SocketAddrV4) {
    (SocketAddrV4::new(f.ip.src, f.tcp.src_port), SocketAddrV4::new(f.ip.dst, f.tcp.dst_port))
}

#[derive(Debug)]
struct Pending {
    client: SocketAddrV4,
    server: SocketAddrV4,
    client_isn: u32,
    server_isn: Option<u32>,
    syn_index: usize,
    synack_index: Option<usize>,
    start: Timestamp,
    members: Vec<usize>,
    syn_count: u32,
}

#[derive(Debug)]
struct Open {
    conn: TcpConnection,
    client_isn: u32,
    last: Timestamp,
    /// Ack value that acknowledges each side's FIN, with the order seen.
    client_fin: Option<(u32, u8)>,
    server_fin: Option<(u32, u8)>,
    fins: u8,
}

enum Tuple {
    Pending(Pending),
    Open(Box<Open>),
}

struct Assembler<'a> {
    packets: &'a [Packet],
    timeout_us: i64,
    tuples: HashMap<TupleKey, Tuple>,
    done: Vec<TcpConnection>,
    residue: Vec<usize>,
    /// (src, dst, ip id) of fragmented datagrams -> owning tuple and sender side.
    fragments: HashMap<(Ipv4Addr, Ipv4Addr, u16), (TupleKey, Direction)>,
}

pub fn assemble_connections(packets: &[Packet], timeout_secs: f64) -> Assembly {
    let mut a = Assembler {
        packets,
        timeout_us: (timeout_secs * 1e6).round() as i64,
        tuples: HashMap::new(),
        done: Vec::new(),
        residue: Vec::new(),
        fragments: HashMap::new(),
    };
    for (i, p) in packets.iter().enumerate() {
        match &p.frame {
            Frame::Tcp(f) => a.on_segment(i, p, f),
            Frame::Other(_) if is_tcp_bearing(p) => a.on_raw(i, p),
            Frame::Other(_) => {}
        }
    }
    a.finish()
}

impl Assembler<'_> {
    fn on_raw(&mut self, i: usize, p: &Packet) {
        let owner = p.raw_fragment().and_then(|fi| self.fragments.get(&(fi.src, fi.dst, fi.id)).copied());
        let Some((key, dir)) = owner else {
            self.residue.push(i);
            return;
        };
        match self.tuples.get_mut(&key) {
            Some(Tuple::Open(open)) => {
                open.push(dir, i, p);
                open.last = open.last.max(p.t);
            }
            _ => self.residue.push(i),
        }
    }

    fn on_segment(&mut self, i: usize, p: &Packet, f: &TcpFrame) {
        let (src, dst) = endpoints(f);
        let key = tuple_key(src, dst);
        let syn = f.tcp.has(flags::SYN);
        let ack = f.tcp.has(flags::ACK);

        if let Some(Tuple::Open(open)) = self.tuples.get(&key) {
            let gap = p.t.micros() - open.last.micros();
            let fresh_syn = syn && !ack && !(src == open.conn.client && f.tcp.seq == open.client_isn);
            if gap > self.timeout_us {
                self.close(key, CloseReason::Timeout, None);
            } else if fresh_syn {
                self.close(key, CloseReason::Superseded, None);
            }
        }

        match self.tuples.remove(&key) {
            None => {
                if syn && !ack {
                    self.tuples.insert(key, Tuple::Pending(Pending::start(src, dst, i, p, f)));
                } else {
                    self.residue.push(i);
                }
            }
            Some(Tuple::Pending(pending)) => self.on_pending(key, pending, i, p, f),
            Some(Tuple::Open(mut open)) => {
                let dir = if src == open.conn.client { Direction::Outbound } else { Direction::Inbound };
                open.push(dir, i, p);
                open.last = p.t;
                if dir == Direction::Outbound && syn && !ack {
                    open.conn.syn_count += 1;
                }
                if f.ip.more_fragments {
                    self.fragments.insert((f.ip.src, f.ip.dst, f.ip.id), (key, dir));
                }
                let outcome = if f.tcp.has(flags::RST) { Some(CloseReason::Reset) } else { open.track_fin(dir, f) };
                self.tuples.insert(key, Tuple::Open(open));
                if let Some(reason) = outcome {
                    self.close(key, reason, Some(p.t));
                }
            }
        }
    }

    fn on_pending(&mut self, key: TupleKey, mut pending: Pending, i: usize, p: &Packet, f: &TcpFrame) {
        let (src, _) = endpoints(f);
        let (syn, ack, rst) = (f.tcp.has(flags::SYN), f.tcp.has(flags::ACK), f.tcp.has(flags::RST));
        let from_client = src == pending.client;

        if syn && !ack {
            if from_client && f.tcp.seq == pending.client_isn {
                pending.members.push(i);
                pending.syn_count += 1;
                self.tuples.insert(key, Tuple::Pending(pending));
            } else {
                self.residue.extend(pending.members);
                let (s, d) = endpoints(f);
                self.tuples.insert(key, Tuple::Pending(Pending::start(s, d, i, p, f)));
            }
            return;
        }
        if rst {
            self.residue.extend(pending.members);
            self.residue.push(i);
            return;
        }
        match pending.server_isn {
            None if !from_client && syn && ack && f.tcp.ack == pending.client_isn.wrapping_add(1) => {
                pending.server_isn = Some(f.tcp.seq);
                pending.synack_index = Some(i);
                pending.members.push(i);
            }
            Some(y) if !from_client && syn && ack && f.tcp.seq == y => pending.members.push(i),
            Some(y) if from_client && ack && !syn && f.tcp.ack == y.wrapping_add(1) => {
                pending.members.push(i);
                let open = pending.open(self.packets, i, p.t);
                self.tuples.insert(key, Tuple::Open(Box::new(open)));
                return;
            }
            _ => self.residue.push(i),
        }
        self.tuples.insert(key, Tuple::Pending(pending));
    }

    fn close(&mut self, key: TupleKey, reason: CloseReason, at: Option<Timestamp>) {
        if let Some(Tuple::Open(open)) = self.tuples.remove(&key) {
            let mut conn = open.conn;
            conn.close = reason;
            conn.t_e = at.unwrap_or(open.last);
            self.fragments.retain(|_, (k, _)| *k != key);
            self.done.push(conn);
        }
    }

    fn finish(mut self) -> Assembly {
        let keys: Vec<TupleKey> = self.tuples.keys().copied().collect();
        for key in keys {
            match self.tuples.remove(&key) {
                Some(Tuple::Open(open)) => {
                    self.tuples.insert(key, Tuple::Open(open));
                    self.close(key, CloseReason::EndOfTrace, None);
                }
                Some(Tuple::Pending(p)) => self.residue.extend(p.members),
                None => {}
            }
        }
        let mut connections = self.done;
        connections.sort_by_key(|c| (c.t_s, c.handshake[0]));
        for (id, c) in connections.iter_mut().enumerate() {
            c.id = id;
        }
        self.residue.sort_unstable();
        Assembly { connections, residue: self.residue }
    }
}

impl Pending {
    fn start(client: SocketAddrV4, server: SocketAddrV4, i: usize, p: &Packet, f: &TcpFrame) -> Pending {
        Pending {
            client,
            server,
            client_isn: f.tcp.seq,
            server_isn: None,
            syn_index: i,
            synack_index: None,
            start: p.t,
            members: vec![i],
            syn_count: 1,
        }
    }

    fn open(self, packets: &[Packet], ack_index: usize, now: Timestamp) -> Open {
        let mut conn = TcpConnection {
            id: 0,
            t_s: self.start,
            t_e: now,
            client: self.client,
            server: self.server,
            client_packets: Vec::new(),
            server_packets: Vec::new(),
            handshake: [self.syn_index, self.synack_index.unwrap_or(self.syn_index), ack_index],
            close: CloseReason::EndOfTrace,
            syn_count: self.syn_count,
        };
        for i in self.members {
            let p = &packets[i];
            let from_client =
                p.tcp().map(|f| SocketAddrV4::new(f.ip.src, f.tcp.src_port) == self.client).unwrap_or(true);
            let tp = TracePacket { index: i, packet: p.clone() };
            if from_client {
                conn.client_packets.push(tp);
            } else {
                conn.server_packets.push(tp);
            }
        }
        Open { conn, client_isn: self.client_isn, last: now, client_fin: None, server_fin: None, fins: 0 }
    }
}

impl Open {
    fn push(&mut self, dir: Direction, i: usize, p: &Packet) {
        let tp = TracePacket { index: i, packet: p.clone() };
        match dir {
            Direction::Outbound => self.conn.client_packets.push(tp),
            Direction::Inbound => self.conn.server_packets.push(tp),
        }
    }

    /// Returns `Some(Endshake)` when `f` acknowledges the second FIN.
    fn track_fin(&mut self, dir: Direction, f: &TcpFrame) -> Option<CloseReason> {
        if f.tcp.has(flags::ACK) {
            let peer_fin = match dir {
                Direction::Outbound => self.server_fin,
                Direction::Inbound => self.client_fin,
            };
            if let Some((needed, order)) = peer_fin {
                if order == 2 && f.tcp.ack == needed {
                    return Some(CloseReason::Endshake);
                }
            }
        }
        if f.tcp.has(flags::FIN) {
            let slot = match dir {
                Direction::Outbound => &mut self.client_fin,
                Direction::Inbound => &mut self.server_fin,
            };
            if slot.is_none() {
                self.fins += 1;
                let needed = f.tcp.seq.wrapping_add(f.data.len() as u32).wrapping_add(1);
                *slot = Some((needed, self.fins));
            }
        }
        None
    }
}

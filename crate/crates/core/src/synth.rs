//! Builders for synthetic TCP conversations.
//!
//! Used by the tunnel obfuscation to emit carrier connections and by tests
//! that need well-formed traces without a capture file.

use std::net::SocketAddrV4;

use crate::capture::{flags, EthernetHeader, Frame, MacAddr, Packet, TcpFrame, Timestamp};

/// One side of a conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Endpoint {
    pub addr: SocketAddrV4,
    pub mac: MacAddr,
}

impl Endpoint {
    pub fn new(addr: SocketAddrV4, mac: MacAddr) -> Self {
        Endpoint { addr, mac }
    }

    /// Endpoint with a locally administered MAC derived from the address.
    pub fn from_addr(addr: SocketAddrV4) -> Self {
        let o = addr.ip().octets();
        Endpoint { addr, mac: MacAddr([0x02, 0x00, o[0], o[1], o[2], o[3]]) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

/// Emits packets of one TCP conversation with consistent seq/ack numbers.
#[derive(Debug, Clone)]
pub struct Conversation {
    client: Endpoint,
    server: Endpoint,
    now: Timestamp,
    client_next: u32,
    server_next: u32,
    client_ip_id: u16,
    server_ip_id: u16,
    packets: Vec<Packet>,
}

impl Conversation {
    pub fn new(client: Endpoint, server: Endpoint, start: Timestamp, client_isn: u32, server_isn: u32) -> Self {
        Conversation {
            client,
            server,
            now: start,
            client_next: client_isn,
            server_next: server_isn,
            client_ip_id: 1,
            server_ip_id: 1,
            packets: Vec::new(),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Advances the clock without emitting anything.
    pub fn wait(&mut self, us: i64) -> &mut Self {
        self.now = self.now.saturating_add_micros(us);
        self
    }

    /// Emits a segment from `side` after `after_us` microseconds. SYN and FIN
    /// consume one sequence number, as does every payload byte.
    pub fn send(&mut self, side: Side, after_us: i64, tcp_flags: u8, data: Vec<u8>) -> &mut Self {
        self.now = self.now.saturating_add_micros(after_us);
        let (src, dst) = match side {
            Side::Client => (self.client, self.server),
            Side::Server => (self.server, self.client),
        };
        let (seq, ack) = match side {
            Side::Client => (self.client_next, self.server_next),
            Side::Server => (self.server_next, self.client_next),
        };
        let ack = if tcp_flags & flags::ACK != 0 { ack } else { 0 };
        let consumed = data.len() as u32 + u32::from(tcp_flags & (flags::SYN | flags::FIN) != 0);
        let mut frame = TcpFrame::build(
            EthernetHeader { src: src.mac, dst: dst.mac },
            src.addr,
            dst.addr,
            seq,
            ack,
            tcp_flags,
            data,
        );
        let id = match side {
            Side::Client => &mut self.client_ip_id,
            Side::Server => &mut self.server_ip_id,
        };
        frame.ip.id = *id;
        *id = id.wrapping_add(1);
        frame.refresh();
        match side {
            Side::Client => self.client_next = self.client_next.wrapping_add(consumed),
            Side::Server => self.server_next = self.server_next.wrapping_add(consumed),
        }
        let size = frame.encoded_len() as u32;
        self.packets.push(Packet { t: self.now, size, frame: Frame::Tcp(frame) });
        self
    }

    pub fn handshake(&mut self, rtt_us: i64) -> &mut Self {
        self.send(Side::Client, 0, flags::SYN, Vec::new())
            .send(Side::Server, rtt_us / 2, flags::SYN | flags::ACK, Vec::new())
            .send(Side::Client, rtt_us / 2, flags::ACK, Vec::new())
    }

    pub fn data(&mut self, side: Side, after_us: i64, len: usize) -> &mut Self {
        let payload = (0..len).map(|i| (i % 251) as u8).collect();
        self.send(side, after_us, flags::PSH | flags::ACK, payload)
    }

    pub fn ack(&mut self, side: Side, after_us: i64) -> &mut Self {
        self.send(side, after_us, flags::ACK, Vec::new())
    }

    /// FIN from `first`, FIN-ACK from the peer, final ACK from `first`.
    pub fn close(&mut self, first: Side, gap_us: i64) -> &mut Self {
        let other = match first {
            Side::Client => Side::Server,
            Side::Server => Side::Client,
        };
        self.send(first, gap_us, flags::FIN | flags::ACK, Vec::new())
            .send(other, gap_us, flags::FIN | flags::ACK, Vec::new())
            .send(first, gap_us, flags::ACK, Vec::new())
    }

    pub fn reset(&mut self, side: Side, after_us: i64) -> &mut Self {
        self.send(side, after_us, flags::RST | flags::ACK, Vec::new())
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn finish(self) -> Vec<Packet> {
        self.packets
    }
}

/// Merges several packet lists into one trace ordered by time; ties keep
/// list order.
pub fn merge(traces: Vec<Vec<Packet>>) -> Vec<Packet> {
    let mut all: Vec<Packet> = traces.into_iter().flatten().collect();
    all.sort_by_key(|p| p.t);
    all
}

//! Encapsulation of connections into a carrier TCP connection.
//!
//! Each original IP datagram becomes one record in the carrier's byte
//! stream, sent in the original packet's direction and at its time.
//! `http` records are a fixed text header, a big-endian `u32` length and
//! the datagram. `https` records use a 5-byte TLS-like application-data
//! header and a keystream-scrambled body.

use std::net::{Ipv4Addr, SocketAddrV4};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;

use super::spec::TunnelMode;
use crate::capture::{MacAddr, Packet, Timestamp, ETH_HEADER_LEN};
use crate::flows::{assemble_connections, Direction};
use crate::synth::{Conversation, Endpoint, Side};

pub const MSS: usize = 1460;
pub const HTTP_RECORD_HEADER: &[u8] = b"POST /relay HTTP/1.1\r\nContent-Type: application/octet-stream\r\n\r\n";
pub const HTTPS_RECORD_HEADER_LEN: usize = 5;
const EPHEMERAL_BASE: u16 = 49152;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunnelEndpoints {
    pub client: Endpoint,
    pub server: Endpoint,
}

/// Frames one datagram as a record; `keystream` is only used in https mode.
pub fn record(mode: TunnelMode, datagram: &[u8], keystream: &mut ChaCha20Rng) -> Vec<u8> {
    match mode {
        TunnelMode::Http => {
            let mut r = Vec::with_capacity(HTTP_RECORD_HEADER.len() + 4 + datagram.len());
            r.extend_from_slice(HTTP_RECORD_HEADER);
            r.extend_from_slice(&(datagram.len() as u32).to_be_bytes());
            r.extend_from_slice(datagram);
            r
        }
        TunnelMode::Https => {
            let mut r = Vec::with_capacity(HTTPS_RECORD_HEADER_LEN + datagram.len());
            r.extend_from_slice(&[0x17, 0x03, 0x03]);
            r.extend_from_slice(&(datagram.len() as u16).to_be_bytes());
            let mut pad = vec![0u8; datagram.len()];
            keystream.fill_bytes(&mut pad);
            r.extend(datagram.iter().zip(&pad).map(|(a, b)| a ^ b));
            r
        }
    }
}

/// IP datagram of a captured frame (everything after the Ethernet header,
/// trailing padding excluded when the frame was decoded).
pub fn datagram(p: &Packet) -> Vec<u8> {
    match p.tcp() {
        Some(f) => f.ip_bytes(),
        None => p.encode().get(ETH_HEADER_LEN..).map(<[u8]>::to_vec).unwrap_or_default(),
    }
}

/// One carrier connection for `packets` (time-ordered, with directions).
/// An empty input still produces a handshake and an endshake at `start`.
pub fn tunnel(
    packets: &[(Direction, &Packet)],
    mode: TunnelMode,
    ends: TunnelEndpoints,
    start: Timestamp,
    rng: &mut ChaCha20Rng,
) -> Vec<Packet> {
    let first = packets.first().map_or(start, |(_, p)| p.t);
    let (cisn, sisn) = (rng.random(), rng.random());
    let mut conv = Conversation::new(ends.client, ends.server, first, cisn, sisn);
    conv.handshake(0);
    for (dir, p) in packets {
        let gap = (p.t.micros() - conv.now().micros()).max(0);
        conv.wait(gap);
        let side = match dir {
            Direction::Outbound => Side::Client,
            Direction::Inbound => Side::Server,
        };
        let rec = record(mode, &datagram(p), rng);
        for chunk in rec.chunks(MSS) {
            conv.send(side, 0, crate::capture::flags::PSH | crate::capture::flags::ACK, chunk.to_vec());
        }
    }
    conv.close(Side::Client, 0);
    conv.finish()
}

/// Replaces every assembled connection of the trace by its carrier.
/// Packets outside connections pass through unchanged.
pub fn tunnel_trace(
    packets: Vec<Packet>,
    mode: TunnelMode,
    client: Option<Ipv4Addr>,
    server: Option<SocketAddrV4>,
    rng: &mut ChaCha20Rng,
) -> Vec<Packet> {
    let assembly = assemble_connections(&packets, 1e12);
    let mut used = vec![false; packets.len()];
    let default_port = match mode {
        TunnelMode::Http => 80,
        TunnelMode::Https => 443,
    };
    let mut out = Vec::with_capacity(packets.len());
    for c in &assembly.connections {
        let mac_of =
            |dir: Direction| c.packets_in(dir).first().and_then(|tp| tp.packet.tcp()).map(|f| (f.eth.src, f.eth.dst));
        let (cmac, smac) = match (mac_of(Direction::Outbound), mac_of(Direction::Inbound)) {
            (Some((src, dst)), _) => (src, dst),
            (None, Some((src, dst))) => (dst, src),
            (None, None) => (MacAddr([2, 0, 0, 0, 0, 1]), MacAddr([2, 0, 0, 0, 0, 2])),
        };
        let port = EPHEMERAL_BASE + (c.id % usize::from(u16::MAX - EPHEMERAL_BASE)) as u16;
        let ends = TunnelEndpoints {
            client: Endpoint::new(SocketAddrV4::new(client.unwrap_or(c.ip_c()), port), cmac),
            server: Endpoint::new(server.unwrap_or(SocketAddrV4::new(c.ip_s(), default_port)), smac),
        };
        let members = c.packets();
        for (_, tp) in &members {
            used[tp.index] = true;
        }
        let list: Vec<(Direction, &Packet)> = members.iter().map(|(d, tp)| (*d, &tp.packet)).collect();
        out.extend(tunnel(&list, mode, ends, c.t_s, rng));
    }
    out.extend(packets.into_iter().zip(used).filter(|(_, u)| !u).map(|(p, _)| p));
    out.sort_by_key(|p| p.t);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::flags;
    use rand::SeedableRng;

    fn ends() -> TunnelEndpoints {
        TunnelEndpoints {
            client: Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(192, 168, 1, 5), 50000)),
            server: Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(198, 51, 100, 7), 80)),
        }
    }

    /// Inverse of the http framing over one direction's payload stream.
    fn detunnel_http(stream: &[u8]) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut rest = stream;
        while !rest.is_empty() {
            assert!(rest.starts_with(HTTP_RECORD_HEADER));
            rest = &rest[HTTP_RECORD_HEADER.len()..];
            let n = u32::from_be_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
            out.push(rest[4..4 + n].to_vec());
            rest = &rest[4 + n..];
        }
        out
    }

    fn original() -> Vec<Packet> {
        let c = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 40000));
        let s = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 2), 445));
        let mut conv = Conversation::new(c, s, Timestamp(1000), 1, 1);
        conv.handshake(200).data(Side::Client, 10, 3000).data(Side::Server, 10, 46).close(Side::Server, 5);
        conv.finish()
    }

    #[test]
    fn empty_connection_is_handshake_and_endshake() {
        let out = tunnel(&[], TunnelMode::Http, ends(), Timestamp(5), &mut ChaCha20Rng::seed_from_u64(1));
        let fl: Vec<u8> = out.iter().map(|p| p.tcp().unwrap().tcp.flags).collect();
        assert_eq!(
            fl,
            vec![
                flags::SYN,
                flags::SYN | flags::ACK,
                flags::ACK,
                flags::FIN | flags::ACK,
                flags::FIN | flags::ACK,
                flags::ACK
            ]
        );
        assert!(out.iter().all(|p| p.t == Timestamp(5)));
    }

    #[test]
    fn small_packet_needs_one_segment() {
        let p = &original()[4];
        assert_eq!(p.size, 100);
        let out = tunnel(&[(Direction::Inbound, p)], TunnelMode::Http, ends(), p.t, &mut ChaCha20Rng::seed_from_u64(1));
        let data: Vec<_> = out.iter().filter(|p| !p.tcp().unwrap().data.is_empty()).collect();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].tcp().unwrap().data.len(), HTTP_RECORD_HEADER.len() + 4 + 86);
    }

    #[test]
    fn http_tunnel_inverts() {
        let orig = original();
        let out = tunnel_trace(orig.clone(), TunnelMode::Http, None, None, &mut ChaCha20Rng::seed_from_u64(2));
        let a = assemble_connections(&out, 600.0);
        assert_eq!(a.connections.len(), 1);
        let carrier = &a.connections[0];
        assert_eq!(carrier.server, SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 2), 80));
        assert!(carrier.client_packets.iter().chain(&carrier.server_packets).all(|p| p
            .packet
            .tcp()
            .unwrap()
            .data
            .len()
            <= MSS));
        let stream = |dir| {
            carrier.packets_in(dir).iter().flat_map(|p| p.packet.tcp().unwrap().data.clone()).collect::<Vec<u8>>()
        };
        let sent = detunnel_http(&stream(Direction::Outbound));
        let recv = detunnel_http(&stream(Direction::Inbound));
        let oa = assemble_connections(&orig, 600.0);
        let want = |dir| oa.connections[0].packets_in(dir).iter().map(|p| datagram(&p.packet)).collect::<Vec<_>>();
        assert_eq!(sent, want(Direction::Outbound));
        assert_eq!(recv, want(Direction::Inbound));
    }

    #[test]
    fn https_records_are_scrambled() {
        let orig = original();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let r = record(TunnelMode::Https, &datagram(&orig[3]), &mut rng);
        assert_eq!(r.len(), HTTPS_RECORD_HEADER_LEN + datagram(&orig[3]).len());
        assert_eq!(&r[..3], &[0x17, 0x03, 0x03]);
        assert_ne!(&r[5..], &datagram(&orig[3])[..]);
    }
}

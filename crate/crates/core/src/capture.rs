//! libpcap decoding and encoding.
//!
//! Frames are decoded into the packet tuple used throughout the crate
//! (timestamps, Ethernet addresses, IPv4 and TCP header fields, payload).
//! Only Ethernet/IPv4/TCP frames are decoded; everything else, including
//! non-initial IPv4 fragments, is kept as raw bytes so that a capture can be
//! written back unchanged.
//!
//! Header fields are stored verbatim, checksums and length fields included.
//! Encoding never repairs them: helpers such as [`TcpFrame::refresh`] exist
//! for callers that rewrite packets on purpose.

use std::fmt;
use std::fs;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::Path;

use thiserror::Error;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IPPROTO_TCP: u8 = 6;
pub const ETH_HEADER_LEN: usize = 14;

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

pub mod flags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed pcap global header: {0}")]
    Format(String),
    #[error("unsupported link type {0} (only Ethernet is decoded)")]
    LinkType(u32),
    #[error("truncated record at byte {offset}; {} packets decoded before it", .partial.packets.len())]
    Truncated { offset: usize, partial: Box<Capture> },
    #[error("packet timestamp {0} µs cannot be represented in a pcap record")]
    Timestamp(i64),
}

/// Capture time in microseconds.
///
/// Packets carry time relative to the first packet of the capture; the
/// absolute origin lives in [`Capture::origin`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_micros(us: i64) -> Self {
        Timestamp(us)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1e6).round() as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_add_micros(self, us: i64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.secs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EthernetHeader {
    pub src: MacAddr,
    pub dst: MacAddr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Header {
    /// The whole type-of-service byte (DSCP and ECN bits).
    pub dscp: u8,
    pub total_len: u16,
    pub id: u16,
    pub reserved_flag: bool,
    pub dont_fragment: bool,
    pub more_fragments: bool,
    /// Fragment offset in 8-byte units (13 bits).
    pub frag_offset: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    /// Raw option bytes; the length is always a multiple of four.
    pub options: Vec<u8>,
}

impl Ipv4Header {
    pub fn header_len(&self) -> usize {
        20 + self.options.len()
    }

    /// Flags and fragment offset as they appear on the wire.
    pub fn flags_and_offset(&self) -> u16 {
        (u16::from(self.reserved_flag) << 15)
            | (u16::from(self.dont_fragment) << 14)
            | (u16::from(self.more_fragments) << 13)
            | (self.frag_offset & 0x1fff)
    }

    pub fn is_fragment(&self) -> bool {
        self.more_fragments || self.frag_offset != 0
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let ihl = (self.header_len() / 4) as u8;
        out.push(0x40 | (ihl & 0x0f));
        out.push(self.dscp);
        out.extend_from_slice(&self.total_len.to_be_bytes());
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&self.flags_and_offset().to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
        out.extend_from_slice(&self.options);
    }

    /// Header checksum computed over the current field values.
    pub fn compute_checksum(&self) -> u16 {
        let mut bytes = Vec::with_capacity(self.header_len());
        let mut zeroed = self.clone();
        zeroed.checksum = 0;
        zeroed.encode(&mut bytes);
        internet_checksum(&[&bytes])
    }

    fn decode(bytes: &[u8]) -> Option<Ipv4Header> {
        if bytes.len() < 20 || bytes[0] >> 4 != 4 {
            return None;
        }
        let hlen = usize::from(bytes[0] & 0x0f) * 4;
        if hlen < 20 || bytes.len() < hlen {
            return None;
        }
        let fo = u16::from_be_bytes([bytes[6], bytes[7]]);
        Some(Ipv4Header {
            dscp: bytes[1],
            total_len: u16::from_be_bytes([bytes[2], bytes[3]]),
            id: u16::from_be_bytes([bytes[4], bytes[5]]),
            reserved_flag: fo & 0x8000 != 0,
            dont_fragment: fo & 0x4000 != 0,
            more_fragments: fo & 0x2000 != 0,
            frag_offset: fo & 0x1fff,
            ttl: bytes[8],
            protocol: bytes[9],
            checksum: u16::from_be_bytes([bytes[10], bytes[11]]),
            src: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
            dst: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
            options: bytes[20..hlen].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    /// Data offset and reserved bits (byte 12 of the header).
    pub off: u8,
    /// Control bits (byte 13 of the header).
    pub flags: u8,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
    pub options: Vec<u8>,
}

impl TcpHeader {
    pub fn header_len(&self) -> usize {
        20 + self.options.len()
    }

    /// Header length announced by the data-offset nibble.
    pub fn data_offset_len(&self) -> usize {
        usize::from(self.off >> 4) * 4
    }

    pub fn has(&self, flag: u8) -> bool {
        self.flags & flag != 0
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.ack.to_be_bytes());
        out.push(self.off);
        out.push(self.flags);
        out.extend_from_slice(&self.window.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.urgent.to_be_bytes());
        out.extend_from_slice(&self.options);
    }

    fn decode(bytes: &[u8]) -> Option<TcpHeader> {
        if bytes.len() < 20 {
            return None;
        }
        let hlen = usize::from(bytes[12] >> 4) * 4;
        if hlen < 20 || bytes.len() < hlen {
            return None;
        }
        Some(TcpHeader {
            src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
            dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
            seq: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
            ack: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
            off: bytes[12],
            flags: bytes[13],
            window: u16::from_be_bytes([bytes[14], bytes[15]]),
            checksum: u16::from_be_bytes([bytes[16], bytes[17]]),
            urgent: u16::from_be_bytes([bytes[18], bytes[19]]),
            options: bytes[20..hlen].to_vec(),
        })
    }
}

/// A fully decoded Ethernet/IPv4/TCP frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpFrame {
    pub eth: EthernetHeader,
    pub ip: Ipv4Header,
    pub tcp: TcpHeader,
    pub data: Vec<u8>,
    /// Link-layer bytes after the IP datagram (Ethernet padding).
    pub trailer: Vec<u8>,
}

impl TcpFrame {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.eth.dst.0);
        out.extend_from_slice(&self.eth.src.0);
        out.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
        self.ip.encode(out);
        self.tcp.encode(out);
        out.extend_from_slice(&self.data);
        out.extend_from_slice(&self.trailer);
    }

    /// IP datagram bytes (header, TCP segment), without link framing.
    pub fn ip_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.ip.header_len() + self.tcp.header_len() + self.data.len());
        self.ip.encode(&mut out);
        self.tcp.encode(&mut out);
        out.extend_from_slice(&self.data);
        out
    }

    /// TCP checksum over the pseudo-header, header and payload.
    ///
    /// Only meaningful for unfragmented datagrams.
    pub fn compute_tcp_checksum(&self) -> u16 {
        let mut seg = Vec::with_capacity(self.tcp.header_len() + self.data.len());
        let mut hdr = self.tcp.clone();
        hdr.checksum = 0;
        hdr.encode(&mut seg);
        seg.extend_from_slice(&self.data);
        let len = seg.len() as u16;
        let mut pseudo = Vec::with_capacity(12);
        pseudo.extend_from_slice(&self.ip.src.octets());
        pseudo.extend_from_slice(&self.ip.dst.octets());
        pseudo.push(0);
        pseudo.push(self.ip.protocol);
        pseudo.extend_from_slice(&len.to_be_bytes());
        internet_checksum(&[&pseudo, &seg])
    }

    pub fn tcp_checksum_ok(&self) -> bool {
        self.tcp.checksum == self.compute_tcp_checksum()
    }

    /// Recomputes total length and both checksums after a deliberate edit.
    pub fn refresh(&mut self) {
        self.ip.total_len = (self.ip.header_len() + self.tcp.header_len() + self.data.len()) as u16;
        self.ip.checksum = self.ip.compute_checksum();
        if !self.ip.is_fragment() {
            self.tcp.checksum = self.compute_tcp_checksum();
        }
    }

    /// A well-formed segment with valid checksums, TTL 64 and DF set.
    pub fn build(
        eth: EthernetHeader,
        src: SocketAddrV4,
        dst: SocketAddrV4,
        seq: u32,
        ack: u32,
        flags: u8,
        data: Vec<u8>,
    ) -> TcpFrame {
        let mut f = TcpFrame {
            eth,
            ip: Ipv4Header {
                dscp: 0,
                total_len: 0,
                id: 0,
                reserved_flag: false,
                dont_fragment: true,
                more_fragments: false,
                frag_offset: 0,
                ttl: 64,
                protocol: IPPROTO_TCP,
                checksum: 0,
                src: *src.ip(),
                dst: *dst.ip(),
                options: Vec::new(),
            },
            tcp: TcpHeader {
                src_port: src.port(),
                dst_port: dst.port(),
                seq,
                ack,
                off: 5 << 4,
                flags,
                window: 65535,
                checksum: 0,
                urgent: 0,
                options: Vec::new(),
            },
            data,
            trailer: Vec::new(),
        };
        f.refresh();
        f
    }

    pub fn encoded_len(&self) -> usize {
        ETH_HEADER_LEN + self.ip.header_len() + self.tcp.header_len() + self.data.len() + self.trailer.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Tcp(TcpFrame),
    /// Any frame outside the decoded model, kept byte for byte.
    Other(Vec<u8>),
}

/// One captured frame: the packet tuple plus whatever is needed to
/// re-encode it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub t: Timestamp,
    /// Length of the whole Ethernet frame on the wire.
    pub size: u32,
    pub frame: Frame,
}

impl Packet {
    pub fn tcp(&self) -> Option<&TcpFrame> {
        match &self.frame {
            Frame::Tcp(f) => Some(f),
            Frame::Other(_) => None,
        }
    }

    pub fn tcp_mut(&mut self) -> Option<&mut TcpFrame> {
        match &mut self.frame {
            Frame::Tcp(f) => Some(f),
            Frame::Other(_) => None,
        }
    }

    pub fn is_tcp(&self) -> bool {
        matches!(self.frame, Frame::Tcp(_))
    }

    pub fn encode(&self) -> Vec<u8> {
        match &self.frame {
            Frame::Tcp(f) => {
                let mut out = Vec::with_capacity(f.encoded_len());
                f.encode(&mut out);
                out
            }
            Frame::Other(b) => b.clone(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match &self.frame {
            Frame::Tcp(f) => f.encoded_len(),
            Frame::Other(b) => b.len(),
        }
    }

    /// Fragment metadata for IPv4 frames that were not decoded as TCP.
    pub fn raw_fragment(&self) -> Option<FragmentInfo> {
        match &self.frame {
            Frame::Other(b) => FragmentInfo::parse(b),
            Frame::Tcp(_) => None,
        }
    }

    /// Sets `size` to the encoded length, keeping any capture truncation.
    pub fn resize_to(&mut self, old_encoded_len: usize) {
        let truncated = (self.size as usize).saturating_sub(old_encoded_len);
        self.size = (self.encoded_len() + truncated) as u32;
    }
}

/// Identity of an IPv4 fragment carried in an undecoded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentInfo {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub id: u16,
    pub protocol: u8,
    pub offset: u16,
    pub more_fragments: bool,
}

impl FragmentInfo {
    pub fn parse(frame: &[u8]) -> Option<FragmentInfo> {
        if frame.len() < ETH_HEADER_LEN + 20 {
            return None;
        }
        if u16::from_be_bytes([frame[12], frame[13]]) != ETHERTYPE_IPV4 {
            return None;
        }
        let ip = Ipv4Header::decode(&frame[ETH_HEADER_LEN..])?;
        if !ip.is_fragment() {
            return None;
        }
        Some(FragmentInfo {
            src: ip.src,
            dst: ip.dst,
            id: ip.id,
            protocol: ip.protocol,
            offset: ip.frag_offset,
            more_fragments: ip.more_fragments,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileHeader {
    pub endian: Endian,
    /// True when the source file carried nanosecond timestamps. Encoding
    /// always writes microsecond records.
    pub nanosecond_source: bool,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

impl Default for FileHeader {
    fn default() -> Self {
        FileHeader {
            endian: Endian::Little,
            nanosecond_source: false,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen: 65535,
            linktype: LINKTYPE_ETHERNET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Capture {
    pub header: FileHeader,
    /// Absolute time of the first packet, microseconds since the epoch.
    pub origin: i64,
    pub packets: Vec<Packet>,
}

impl Capture {
    pub fn from_packets(packets: Vec<Packet>) -> Self {
        Capture { packets, ..Capture::default() }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn u16(&self, at: usize) -> u16 {
        let b = [self.bytes[at], self.bytes[at + 1]];
        match self.endian {
            Endian::Little => u16::from_le_bytes(b),
            Endian::Big => u16::from_be_bytes(b),
        }
    }

    fn u32(&self, at: usize) -> u32 {
        let b = [self.bytes[at], self.bytes[at + 1], self.bytes[at + 2], self.bytes[at + 3]];
        match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Capture, CaptureError> {
    let bytes = fs::read(path)?;
    decode_pcap(&bytes)
}

pub fn decode_pcap(bytes: &[u8]) -> Result<Capture, CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::Format(format!("{} bytes is shorter than the 24-byte header", bytes.len())));
    }
    let le = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (endian, nanos) = match le {
        MAGIC_USEC => (Endian::Little, false),
        MAGIC_NSEC => (Endian::Little, true),
        _ => match le.swap_bytes() {
            MAGIC_USEC => (Endian::Big, false),
            MAGIC_NSEC => (Endian::Big, true),
            _ => return Err(CaptureError::Format(format!("unknown magic number {le:#010x}"))),
        },
    };
    let r = Reader { bytes, endian };
    let header = FileHeader {
        endian,
        nanosecond_source: nanos,
        version_major: r.u16(4),
        version_minor: r.u16(6),
        thiszone: r.u32(8) as i32,
        sigfigs: r.u32(12),
        snaplen: r.u32(16),
        linktype: r.u32(20),
    };
    if header.linktype != LINKTYPE_ETHERNET {
        return Err(CaptureError::LinkType(header.linktype));
    }

    let mut capture = Capture { header, origin: 0, packets: Vec::new() };
    let mut pos = GLOBAL_HEADER_LEN;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER_LEN {
            return Err(CaptureError::Truncated { offset: pos, partial: Box::new(capture) });
        }
        let sec = i64::from(r.u32(pos));
        let frac = i64::from(r.u32(pos + 4));
        let incl = r.u32(pos + 8) as usize;
        let orig = r.u32(pos + 12);
        let body = pos + RECORD_HEADER_LEN;
        if bytes.len() - body < incl {
            return Err(CaptureError::Truncated { offset: pos, partial: Box::new(capture) });
        }
        // nanosecond sources are truncated toward zero
        let abs = sec * 1_000_000 + if nanos { frac / 1000 } else { frac };
        if capture.packets.is_empty() {
            capture.origin = abs;
        }
        capture.packets.push(Packet {
            t: Timestamp(abs - capture.origin),
            size: orig,
            frame: decode_frame(&bytes[body..body + incl]),
        });
        pos = body + incl;
    }
    Ok(capture)
}

/// Decodes one Ethernet frame; anything outside the TCP/IPv4 model, and
/// anything that would not re-encode to the same bytes, stays raw.
pub fn decode_frame(bytes: &[u8]) -> Frame {
    decode_tcp_frame(bytes)
        .filter(|f| {
            let mut out = Vec::with_capacity(bytes.len());
            f.encode(&mut out);
            out == bytes
        })
        .map(Frame::Tcp)
        .unwrap_or_else(|| Frame::Other(bytes.to_vec()))
}

fn decode_tcp_frame(bytes: &[u8]) -> Option<TcpFrame> {
    if bytes.len() < ETH_HEADER_LEN || u16::from_be_bytes([bytes[12], bytes[13]]) != ETHERTYPE_IPV4 {
        return None;
    }
    let mut dst = [0u8; 6];
    let mut src = [0u8; 6];
    dst.copy_from_slice(&bytes[0..6]);
    src.copy_from_slice(&bytes[6..12]);
    let l3 = &bytes[ETH_HEADER_LEN..];
    let ip = Ipv4Header::decode(l3)?;
    if ip.protocol != IPPROTO_TCP || ip.frag_offset != 0 {
        return None;
    }
    let ip_end = usize::from(ip.total_len).min(l3.len());
    if ip_end < ip.header_len() + 20 {
        return None;
    }
    let tcp = TcpHeader::decode(&l3[ip.header_len()..ip_end])?;
    let data_start = ip.header_len() + tcp.header_len();
    let data = l3[data_start..ip_end].to_vec();
    let trailer = l3[ip_end..].to_vec();
    Some(TcpFrame { eth: EthernetHeader { src: MacAddr(src), dst: MacAddr(dst) }, ip, tcp, data, trailer })
}

pub fn write_pcap(capture: &Capture, path: impl AsRef<Path>) -> Result<(), CaptureError> {
    let bytes = encode_pcap(capture)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pcap(capture: &Capture) -> Result<Vec<u8>, CaptureError> {
    let h = &capture.header;
    let endian = h.endian;
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + capture.packets.len() * 96);
    let put16 = |out: &mut Vec<u8>, v: u16| match endian {
        Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
    };
    let put32 = |out: &mut Vec<u8>, v: u32| match endian {
        Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
    };
    put32(&mut out, MAGIC_USEC);
    put16(&mut out, h.version_major);
    put16(&mut out, h.version_minor);
    put32(&mut out, h.thiszone as u32);
    put32(&mut out, h.sigfigs);
    put32(&mut out, h.snaplen);
    put32(&mut out, h.linktype);
    for p in &capture.packets {
        let abs = capture.origin + p.t.0;
        if !(0..=i64::from(u32::MAX) * 1_000_000 + 999_999).contains(&abs) {
            return Err(CaptureError::Timestamp(abs));
        }
        let frame = p.encode();
        put32(&mut out, (abs / 1_000_000) as u32);
        put32(&mut out, (abs % 1_000_000) as u32);
        put32(&mut out, frame.len() as u32);
        put32(&mut out, p.size.max(frame.len() as u32));
        out.extend_from_slice(&frame);
    }
    Ok(out)
}

/// RFC 1071 ones-complement sum over the concatenation of `parts`.
pub fn internet_checksum(parts: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut carry: Option<u8> = None;
    for part in parts {
        for &b in part.iter() {
            match carry.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => carry = Some(b),
            }
        }
    }
    if let Some(hi) = carry {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;

    // SYN 10.0.0.1:40000 -> 10.0.0.2:80, seq 1000, MSS option, 74-byte frame
    pub(crate) const SYN_FRAME: &str = "\
        0000000000020000000000010800\
        4500003c1c46400040060a74\
        0a0000010a000002\
        9c400050000003e800000000a002faf0\
        98940000\
        020405b40402080a000000000000000001030307";

    fn hex(s: &str) -> Vec<u8> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
    }

    #[test]
    fn checksum_of_rfc1071_example() {
        // RFC 1071 section 3 sample bytes
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(internet_checksum(&[&data]), !0xddf2);
    }

    #[test]
    fn decodes_syn_frame_fields() {
        let bytes = hex(SYN_FRAME);
        assert_eq!(bytes.len(), 74);
        let Frame::Tcp(f) = decode_frame(&bytes) else { panic!("not decoded") };
        assert_eq!(f.ip.src, Ipv4Addr::new(10, 0, 0, 1));
        assert_eq!(f.tcp.src_port, 40000);
        assert_eq!(f.tcp.dst_port, 80);
        assert_eq!(f.tcp.flags, flags::SYN);
        assert_eq!(f.tcp.seq, 1000);
        assert_eq!(f.tcp.options.len(), 20);
        assert_eq!(f.ip.checksum, f.ip.compute_checksum());
        assert!(f.tcp_checksum_ok());
        assert!(f.data.is_empty());
    }

    #[test]
    fn short_and_foreign_frames_stay_raw() {
        assert!(matches!(decode_frame(&[1, 2, 3]), Frame::Other(_)));
        let mut arp = vec![0u8; 42];
        arp[12] = 0x08;
        arp[13] = 0x06;
        assert!(matches!(decode_frame(&arp), Frame::Other(_)));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut b = vec![0u8; 24];
        b[0] = 0xde;
        assert!(matches!(decode_pcap(&b), Err(CaptureError::Format(_))));
        assert!(matches!(decode_pcap(&b[..10]), Err(CaptureError::Format(_))));
    }

    #[test]
    fn truncated_record_carries_partial_capture() {
        let cap =
            Capture::from_packets(vec![Packet { t: Timestamp(0), size: 74, frame: decode_frame(&hex(SYN_FRAME)) }]);
        let mut bytes = encode_pcap(&cap).unwrap();
        let one = bytes.len();
        bytes.extend_from_within(24..40);
        bytes.extend_from_slice(&[0u8; 10]);
        match decode_pcap(&bytes) {
            Err(CaptureError::Truncated { offset, partial }) => {
                assert_eq!(offset, one);
                assert_eq!(partial.packets.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nanosecond_timestamps_truncate_to_micros() {
        let frame = hex(SYN_FRAME);
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC_NSEC.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&65535u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        for ns in [999u32, 2_000_001_999] {
            b.extend_from_slice(&(100 + ns / 1_000_000_000).to_le_bytes());
            b.extend_from_slice(&(ns % 1_000_000_000).to_le_bytes());
            b.extend_from_slice(&(frame.len() as u32).to_le_bytes());
            b.extend_from_slice(&(frame.len() as u32).to_le_bytes());
            b.extend_from_slice(&frame);
        }
        let cap = decode_pcap(&b).unwrap();
        assert!(cap.header.nanosecond_source);
        assert_eq!(cap.origin, 100_000_000);
        assert_eq!(cap.packets[1].t, Timestamp(2_000_001));
    }

    #[test]
    fn big_endian_header_is_accepted() {
        let frame = hex(SYN_FRAME);
        let mut cap = Capture::from_packets(vec![Packet { t: Timestamp(5), size: 74, frame: decode_frame(&frame) }]);
        cap.header.endian = Endian::Big;
        cap.origin = 1_240_000_000_000_000;
        let bytes = encode_pcap(&cap).unwrap();
        assert_eq!(&bytes[..4], &[0xa1, 0xb2, 0xc3, 0xd4]);
        let back = decode_pcap(&bytes).unwrap();
        assert_eq!(back.header.endian, Endian::Big);
        assert_eq!(back.packets[0].frame, cap.packets[0].frame);
        assert_eq!(back.origin, cap.origin + 5);
    }

    #[test]
    fn negative_absolute_time_is_rejected() {
        let cap = Capture::from_packets(vec![Packet { t: Timestamp(-1), size: 3, frame: Frame::Other(vec![1, 2, 3]) }]);
        assert!(matches!(encode_pcap(&cap), Err(CaptureError::Timestamp(-1))));
    }
}

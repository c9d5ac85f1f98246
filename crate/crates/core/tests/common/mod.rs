//! Trace generators and property checks shared by the property tests and
//! the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::net::{Ipv4Addr, SocketAddrV4};

use asnm_core::capture::{decode_pcap, encode_pcap, flags, Capture, Packet, Timestamp};
use asnm_core::context::{mutual_flows, sliding_window, sliding_windows, HostPairIndex, Side as CtxSide};
use asnm_core::features::{math, Dir, ExtractOptions, Extractor, FeatureCatalog, FeatureValue, Kind};
use asnm_core::flows::{assemble_connections, Direction, TcpConnection};
use asnm_core::morph::{apply, ObfuscationSpec, Technique};
use asnm_core::synth::{merge, Conversation, Endpoint, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type Check = Result<(), String>;

pub const SECOND: i64 = 1_000_000;

fn endpoint(rng: &mut ChaCha20Rng, net: u8, hosts: u8, ports: &[u16]) -> Endpoint {
    let ip = Ipv4Addr::new(10, 0, net, rng.random_range(1..=hosts));
    Endpoint::from_addr(SocketAddrV4::new(ip, ports[rng.random_range(0..ports.len())]))
}

/// One random conversation starting at `start`.
pub fn conversation(rng: &mut ChaCha20Rng, start: i64) -> Vec<Packet> {
    let client_ports: Vec<u16> = (40000..40040).collect();
    let c = endpoint(rng, 0, 4, &client_ports);
    let s = endpoint(rng, 1, 3, &[80, 445, 22]);
    let mut conv = Conversation::new(c, s, Timestamp(start), rng.random(), rng.random());
    let orphan = rng.random_bool(0.05);
    if !orphan {
        conv.handshake(rng.random_range(100..50_000));
    }
    for _ in 0..rng.random_range(0..7) {
        let side = if rng.random_bool(0.5) { Side::Client } else { Side::Server };
        let gap = if rng.random_bool(0.03) { 700 * SECOND } else { rng.random_range(0..2 * SECOND) };
        conv.data(side, gap, rng.random_range(0..1400));
        if rng.random_bool(0.5) {
            let other = if side == Side::Client { Side::Server } else { Side::Client };
            conv.ack(other, rng.random_range(0..5000));
        }
    }
    match rng.random_range(0..3) {
        0 => {
            let first = if rng.random_bool(0.5) { Side::Client } else { Side::Server };
            conv.close(first, rng.random_range(0..10_000));
        }
        1 => {
            conv.reset(Side::Client, rng.random_range(0..10_000));
        }
        _ => {}
    }
    conv.finish()
}

/// `conns` conversations spread over roughly `span_secs`, time-ordered and
/// starting at zero.
pub fn random_trace(seed: u64, conns: usize, span_secs: i64) -> Vec<Packet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let parts = (0..conns).map(|_| {
        let start = rng.random_range(0..span_secs.max(1) * SECOND);
        conversation(&mut rng, start)
    });
    let mut all = merge(parts.collect());
    if let Some(t0) = all.first().map(|p| p.t.micros()) {
        for p in &mut all {
            p.t = Timestamp(p.t.micros() - t0);
        }
    }
    all
}

/// Fixed multi-connection trace with payload in both directions, used where
/// a single reference input is needed.
pub fn reference_trace() -> Vec<Packet> {
    random_trace(5, 8, 100)
}

/// One long conversation with `n` packets in total.
pub fn long_trace(seed: u64, n: usize) -> Vec<Packet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 40000));
    let s = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 1, 1), 80));
    let mut conv = Conversation::new(c, s, Timestamp(0), 1, 1);
    conv.handshake(1000);
    while conv.packets().len() < n {
        let side = if rng.random_bool(0.5) { Side::Client } else { Side::Server };
        conv.data(side, rng.random_range(0..20_000), rng.random_range(1..200));
    }
    conv.finish()
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn check_pcap_roundtrip(packets: &[Packet]) -> Check {
    let bytes = encode_pcap(&Capture::from_packets(packets.to_vec())).map_err(|e| e.to_string())?;
    let back = decode_pcap(&bytes).map_err(|e| e.to_string())?;
    ensure(back.packets == packets, || "decoded packets differ".into())?;
    let again = encode_pcap(&back).map_err(|e| e.to_string())?;
    ensure(again == bytes, || "re-encoded bytes differ".into())
}

/// Every packet lands in exactly one connection or in the residue.
pub fn check_partition(packets: &[Packet], timeout: f64) -> Check {
    let a = assemble_connections(packets, timeout);
    let mut seen = vec![0u32; packets.len()];
    for c in &a.connections {
        for (_, tp) in c.packets() {
            seen[tp.index] += 1;
        }
    }
    for &r in &a.residue {
        seen[r] += 1;
    }
    match seen.iter().position(|&n| n != 1) {
        Some(i) => Err(format!("packet {i} assigned {} times", seen[i])),
        None => Ok(()),
    }
}

/// Each connection opens with SYN, SYN-ACK acknowledging it, and ACK
/// acknowledging the SYN-ACK, all from the right sides.
pub fn check_handshakes(packets: &[Packet], timeout: f64) -> Check {
    for c in &assemble_connections(packets, timeout).connections {
        let [a, b, d] = c.handshake;
        ensure(a < b && b < d, || format!("connection {} handshake out of order", c.id))?;
        let f = |i: usize| packets[i].tcp().map(|f| f.tcp.clone()).ok_or(format!("packet {i} is not TCP"));
        let (syn, synack, ack) = (f(a)?, f(b)?, f(d)?);
        ensure(syn.flags & (flags::SYN | flags::ACK) == flags::SYN, || format!("{}: first is not SYN", c.id))?;
        ensure(synack.flags & (flags::SYN | flags::ACK) == flags::SYN | flags::ACK, || {
            format!("{}: no SYN-ACK", c.id)
        })?;
        ensure(synack.ack == syn.seq.wrapping_add(1), || format!("{}: SYN-ACK does not acknowledge", c.id))?;
        ensure(ack.flags & (flags::SYN | flags::ACK) == flags::ACK, || format!("{}: third is not ACK", c.id))?;
        ensure(ack.ack == synack.seq.wrapping_add(1), || format!("{}: ACK does not acknowledge", c.id))?;
        ensure(c.t_s == packets[a].t, || format!("{}: t_s is not the SYN time", c.id))?;
        ensure(c.t_e >= c.t_s, || format!("{}: ends before it starts", c.id))?;
        ensure(syn.src_port == c.p_c() && syn.dst_port == c.p_s(), || format!("{}: ports", c.id))?;
        for i in [a, b, d] {
            c.direction_of(i).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

pub fn check_timeout_monotone(packets: &[Packet], short: f64, long: f64) -> Check {
    let (n1, n2) =
        (assemble_connections(packets, short).connections.len(), assemble_connections(packets, long).connections.len());
    ensure(n2 <= n1, || format!("{n2} connections at timeout {long} but {n1} at {short}"))
}

pub fn connections(packets: &[Packet]) -> Vec<TcpConnection> {
    assemble_connections(packets, 600.0).connections
}

/// Growing tau never removes members; no window contains its center; the
/// indexed versions agree with the direct ones.
pub fn check_context(all: &[TcpConnection], taus: &[f64]) -> Check {
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    for c in all {
        let mut prev: BTreeSet<usize> = BTreeSet::new();
        for &tau in &sorted {
            let w = sliding_window(all, c.id, tau).map_err(|e| e.to_string())?;
            let m: BTreeSet<usize> = w.members.iter().copied().collect();
            ensure(!m.contains(&c.id), || format!("{} is in its own window", c.id))?;
            ensure(prev.is_subset(&m), || format!("window of {} shrank at tau {tau}", c.id))?;
            prev = m;
        }
    }
    for &tau in taus {
        let fast = sliding_windows(all, tau);
        for c in all {
            let slow = sliding_window(all, c.id, tau).map_err(|e| e.to_string())?;
            ensure(fast[c.id] == slow, || format!("indexed window of {} differs at tau {tau}", c.id))?;
        }
    }
    let idx = HostPairIndex::new(all);
    for c in all {
        for side in [CtxSide::Before, CtxSide::After] {
            for h in [1.0, 300.0] {
                let want = mutual_flows(all, c, h, side);
                ensure(idx.count(c, h, side) == want, || format!("mutual flows of {} differ", c.id))?;
            }
        }
    }
    Ok(())
}

/// Each time-bin family sums to the sizes of its direction's packets that
/// fall inside the family's period.
pub fn check_bin_conservation(packets: &[Packet]) -> Check {
    let catalog = FeatureCatalog::builtin();
    let conns = connections(packets);
    let ex = Extractor::new(&catalog, &conns, ExtractOptions::default());
    let rows = ex.extract_all();
    for (c, row) in conns.iter().zip(&rows) {
        let mut col = 0;
        for def in &catalog.entries {
            let w = def.kind.width();
            if let Kind::Bins { dir, period_secs, .. } = def.kind {
                let got: f64 = row.values[col..col + w].iter().filter_map(FeatureValue::as_f64).sum();
                let period = i64::from(period_secs) * SECOND;
                let want: f64 = c
                    .packets()
                    .iter()
                    .filter(|(d, _)| match dir {
                        Dir::In => *d == Direction::Inbound,
                        Dir::Out => *d == Direction::Outbound,
                        Dir::All => true,
                    })
                    .filter(|(_, tp)| (0..period).contains(&(tp.packet.t.micros() - c.t_s.micros())))
                    .map(|(_, tp)| f64::from(tp.packet.size))
                    .sum();
                ensure((got - want).abs() < 1e-6, || format!("{} on connection {}: {got} != {want}", def.id, c.id))?;
            }
            col += w;
        }
    }
    Ok(())
}

pub fn check_parseval(xs: &[f64]) -> Check {
    let spec = math::dft(xs);
    let time: f64 = xs.iter().take(math::DFT_LEN).map(|x| x * x).sum();
    let freq: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() / math::DFT_LEN as f64;
    let scale = time.abs().max(f64::MIN_POSITIVE);
    ensure((time - freq).abs() / scale <= 1e-6 || time == 0.0 && freq == 0.0, || format!("{time} vs {freq}"))
}

fn poly_samples(coeffs: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
        })
        .collect()
}

pub fn check_poly_recovery(coeffs: &[f64], n: usize) -> Check {
    let fit = math::polyfit(&poly_samples(coeffs, n), coeffs.len() - 1).ok_or("no fit")?;
    for (a, b) in fit.iter().zip(coeffs) {
        ensure((a - b).abs() <= 1e-6 * b.abs().max(1.0), || format!("recovered {fit:?}, want {coeffs:?}"))?;
    }
    Ok(())
}

/// Fitted curve matches the sampled polynomial at every sample point.
pub fn check_poly_values(coeffs: &[f64], n: usize) -> Check {
    let ys = poly_samples(coeffs, n);
    let fit = math::polyfit(&ys, coeffs.len() - 1).ok_or("no fit")?;
    let scale = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    ensure(poly_samples(&fit, n).iter().zip(&ys).all(|(a, b)| (a - b).abs() <= 1e-6 * scale), || {
        format!("fitted values drift for {coeffs:?}")
    })
}

/// Fields outside the mutation-sensitive set never change: every output
/// packet carries addresses, ports, IP id, TTL and protocol of some input.
pub fn check_field_discipline(input: &[Packet], output: &[Packet]) -> Check {
    let key = |p: &Packet| {
        if let Some(f) = p.tcp() {
            Some((
                f.eth.src,
                f.eth.dst,
                f.ip.src,
                f.ip.dst,
                f.ip.id,
                f.ip.ttl,
                f.ip.protocol,
                Some((f.tcp.src_port, f.tcp.dst_port)),
            ))
        } else {
            p.raw_fragment().map(|r| {
                let b = p.encode();
                let mac =
                    |o: usize| asnm_core::capture::MacAddr([b[o], b[o + 1], b[o + 2], b[o + 3], b[o + 4], b[o + 5]]);
                (mac(6), mac(0), r.src, r.dst, r.id, b[22], r.protocol, None)
            })
        }
    };
    let known: BTreeSet<_> = input.iter().filter_map(key).map(|k| (k.0 .0, k.1 .0, k.2, k.3, k.4, k.5, k.6)).collect();
    let ports: BTreeSet<_> = input.iter().filter_map(key).filter_map(|k| k.7).collect();
    for (i, p) in output.iter().enumerate() {
        let Some(k) = key(p) else { continue };
        ensure(known.contains(&(k.0 .0, k.1 .0, k.2, k.3, k.4, k.5, k.6)), || {
            format!("output packet {i} has new header fields")
        })?;
        if let Some(pp) = k.7 {
            ensure(ports.contains(&pp), || format!("output packet {i} has new ports"))?;
        }
        if let Some(f) = p.tcp() {
            let mut fixed = f.ip.clone();
            fixed.checksum = fixed.compute_checksum();
            ensure(fixed == f.ip, || format!("output packet {i} has a stale IP checksum"))?;
        }
    }
    Ok(())
}

pub fn is_rewriting(spec: &ObfuscationSpec) -> bool {
    spec.stages.iter().any(|s| matches!(s, Technique::Tunnel { .. }))
}

/// Connections that assemble before obfuscation still do afterwards; tunnel
/// modes produce exactly one carrier per connection.
pub fn check_assemblable(input: &[Packet], spec: &ObfuscationSpec) -> Check {
    let out = apply(input.to_vec(), spec);
    let before = assemble_connections(input, 600.0).connections;
    let after = assemble_connections(&out, 600.0).connections;
    if is_rewriting(spec) {
        return ensure(after.len() == before.len(), || {
            format!("{}: {} carriers for {} connections", spec.technique_id, after.len(), before.len())
        });
    }
    let keys = |cs: &[TcpConnection]| -> BTreeSet<(SocketAddrV4, SocketAddrV4)> {
        cs.iter().map(|c| (c.client, c.server)).collect()
    };
    let missing: Vec<_> = keys(&before).difference(&keys(&after)).copied().collect();
    ensure(missing.is_empty(), || format!("{}: lost connections {missing:?}", spec.technique_id))
}

pub fn check_morph_determinism(input: &[Packet], spec: &ObfuscationSpec) -> Check {
    ensure(apply(input.to_vec(), spec) == apply(input.to_vec(), spec), || {
        format!("{} is not reproducible", spec.technique_id)
    })
}

/// Whether some extracted value differs after obfuscation.
pub fn perturbs_features(input: &[Packet], spec: &ObfuscationSpec) -> bool {
    let catalog = FeatureCatalog::builtin();
    let extract = |p: &[Packet]| {
        let conns = connections(p);
        let ex = Extractor::new(&catalog, &conns, ExtractOptions::default());
        ex.extract_all().into_iter().map(|r| r.values).collect::<Vec<_>>()
    };
    extract(input) != extract(&apply(input.to_vec(), spec))
}

/// Fraction of packets dropped by a loss stage with `pct` over `n` packets.
pub fn observed_loss(n: usize, pct: f64, seed: u64) -> f64 {
    let trace = long_trace(seed, n);
    let spec = ObfuscationSpec {
        technique_id: "loss".into(),
        stages: vec![Technique::Loss { pct, correlation: 0.0 }],
        seed,
        protect_handshake: false,
    };
    1.0 - apply(trace.clone(), &spec).len() as f64 / trace.len() as f64
}

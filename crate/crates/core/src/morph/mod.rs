//! Non-payload obfuscation of packet traces.

mod ops;
mod spec;
pub mod tunnel;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::capture::Packet;

pub use ops::{
    corrupt, delay, delays, drop, duplicate, fragment, handshake_indices, reorder, reorder_selected, Correlated,
};
pub use spec::{preset, DelayDist, ObfuscationSpec, Technique, TunnelMode, DEFAULT_REORDER_GAP, MIN_MTU, PRESET_IDS};

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("unknown technique `{0}`")]
    UnknownTechnique(String),
    #[error("spec line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("cannot read spec: {0}")]
    Io(#[from] std::io::Error),
}

/// Generator for stage `index` of a run seeded with `seed`.
pub fn stage_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs every stage in order; the output is ordered by time.
pub fn apply(packets: Vec<Packet>, spec: &ObfuscationSpec) -> Vec<Packet> {
    spec.stages.iter().enumerate().fold(packets, |trace, (i, stage)| {
        apply_stage(trace, stage, spec.protect_handshake, &mut stage_rng(spec.seed, i))
    })
}

pub fn apply_stage(packets: Vec<Packet>, stage: &Technique, protect: bool, rng: &mut ChaCha20Rng) -> Vec<Packet> {
    let mut out = match *stage {
        Technique::Delay { dist, correlation } => delay(packets, dist, correlation, rng),
        Technique::Loss { pct, correlation } => drop(packets, pct, correlation, protect, rng),
        Technique::Corrupt { pct, correlation } => corrupt(packets, pct, correlation, protect, rng),
        Technique::Duplicate { pct, correlation } => duplicate(packets, pct, correlation, rng),
        Technique::Reorder { pct, gap, correlation } => reorder(packets, pct, gap, correlation, protect, rng),
        Technique::Fragment { mtu } => fragment(packets, mtu),
        Technique::Tunnel { mode, client, server } => tunnel::tunnel_trace(packets, mode, client, server, rng),
    };
    out.sort_by_key(|p| p.t);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::Timestamp;
    use crate::synth::{Conversation, Endpoint, Side};
    use std::net::{Ipv4Addr, SocketAddrV4};

    fn trace() -> Vec<Packet> {
        let c = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 40000));
        let s = Endpoint::from_addr(SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 2), 80));
        let mut conv = Conversation::new(c, s, Timestamp(0), 10, 20);
        conv.handshake(1000).data(Side::Client, 500, 300).data(Side::Server, 700, 1400).close(Side::Server, 100);
        conv.finish()
    }

    #[test]
    fn constant_delay_shifts_every_packet() {
        let t = trace();
        let out = apply(t.clone(), &ObfuscationSpec::preset("a", 0).unwrap());
        for (a, b) in t.iter().zip(&out) {
            assert_eq!(b.t.micros() - a.t.micros(), 1_000_000);
            assert_eq!(a.frame, b.frame);
        }
        let out = apply(t.clone(), &ObfuscationSpec::preset("b", 0).unwrap());
        assert!(t.iter().zip(&out).all(|(a, b)| b.t.micros() - a.t.micros() == 8_000_000));
    }

    #[test]
    fn zero_loss_is_identity() {
        let spec = ObfuscationSpec::parse("d pct=0\n", 4).unwrap();
        assert_eq!(apply(trace(), &spec), trace());
    }

    #[test]
    fn combination_replays_bit_identically() {
        let spec = ObfuscationSpec::preset("o", 77).unwrap();
        assert_eq!(apply(trace(), &spec), apply(trace(), &spec));
        let single = ObfuscationSpec { stages: vec![Technique::Fragment { mtu: 500 }], ..spec.clone() };
        assert_eq!(apply(trace(), &single), fragment(trace(), 500));
    }

    #[test]
    fn stage_streams_differ() {
        use rand::Rng;
        let a: u64 = stage_rng(1, 0).random();
        let b: u64 = stage_rng(1, 1).random();
        assert_ne!(a, b);
    }
}

//! Reconstruction of TCP connections from packet traces, extraction of
//! ASNM connection features, non-payload trace obfuscation, and a small
//! benchmarking harness for evasion experiments on labelled feature tables.

pub mod bench;
pub mod capture;
pub mod context;
pub mod dataset;
pub mod features;
pub mod flows;
pub mod morph;
pub mod synth;

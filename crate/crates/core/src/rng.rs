//! Deterministic random substreams derived from one master seed.
//!
//! Each stream is seeded by hashing a domain tag with its coordinates, so the
//! draws for one (trial, agent, type) never depend on how many other streams
//! exist or in which order they are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

fn derive(tag: &[u8], parts: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    for p in parts {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

/// Observation stream for agent `agent`, signal type `signal_type` in `trial`.
pub fn signal_stream(seed: u64, trial: u64, agent: usize, signal_type: usize) -> StreamRng {
    StreamRng::from_seed(derive(
        b"mvsl/signal",
        &[seed, trial, agent as u64, signal_type as u64],
    ))
}

/// 64-bit seed identifying the agent placement of one Monte Carlo trial.
pub fn placement_seed(seed: u64, trial: u64) -> u64 {
    let d = derive(b"mvsl/placement", &[seed, trial]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn placement_stream(placement_seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(placement_seed)
}

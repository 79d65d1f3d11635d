//! Planning and validation of sectored multi-probe anechoic chamber (SMPAC)
//! emulation for dynamic mmWave massive-MIMO channels.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chamber;
pub mod channel;
pub mod dominance;
pub mod dynamic;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod scheduler;
pub mod sweep;

pub use error::{Error, Result};

/// Mixes a global seed with cell coordinates.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(z << 6)
            .wrapping_add(z >> 2);
        z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z ^= z >> 31;
    }
    z
}

//! Per-replica random streams.
//!
//! Every replica gets its own ChaCha8 stream selected by the replica index, so
//! results do not depend on how replicas are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Stream for `replica` under the master `seed`.
#[must_use]
pub fn replica_rng(seed: u64, replica: u64) -> ReplicaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Stream for a named sub-purpose of a replica (e.g. initial data vs dynamics).
#[must_use]
pub fn replica_substream(seed: u64, replica: u64, purpose: u64) -> ReplicaRng {
    replica_rng(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15), replica)
}

/// Uniform variate in the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

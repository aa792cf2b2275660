//! Seeded random streams.
//!
//! Every consumer of randomness in a run gets its own ChaCha stream derived
//! from the run seed, so adding draws to one consumer never shifts another.
//! In particular the initial profiles depend only on the seed, which lets the
//! event engine, the sequential engine and the baseline start from identical
//! `U` and `V`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used by each consumer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Initial and rejoin profiles.
    Profiles = 0,
    /// Peer-list draws.
    Peers = 1,
    /// Message delays.
    Delays = 2,
    /// Rating samples of the sequential engines.
    Sampling = 3,
    /// Initial broadcast phases.
    Phases = 4,
    /// Synthetic data generation.
    Synthetic = 5,
}

/// The generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

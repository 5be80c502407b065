//! Seeded RNG streams.
//!
//! Every stochastic stage draws from its own ChaCha stream derived from one
//! master seed, so stages cannot perturb each other: adding an epoch never
//! changes how a dataset is generated, and estimator trials are independent
//! of each other by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameter initialization.
pub const STREAM_INIT: u64 = 1;
/// Minibatch shuffling.
pub const STREAM_SHUFFLE: u64 = 2;
/// Synthetic data generation and dataset splits.
pub const STREAM_DATA: u64 = 3;

/// A fixed stream of the master seed.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for (estimator, trial) pairs in comparison experiments: distinct
/// from all fixed streams and from every other pair.
pub fn estimator_stream(seed: u64, estimator: u64, trial: u64) -> ChaCha8Rng {
    stream(seed, ((estimator + 1) << 32) | trial)
}

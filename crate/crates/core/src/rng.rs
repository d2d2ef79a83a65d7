//! Reproducible random streams.
//!
//! Every stream is a ChaCha20 keystream. The key is expanded from the master
//! seed with `SeedableRng::seed_from_u64`, and the 64-bit ChaCha stream id is
//! the stream index. Stream `(seed, i)` is therefore a pure function of its two
//! integers: Monte Carlo replica `i` draws from stream `i` no matter which
//! thread runs it or in which order replicas complete.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Random source used throughout the crate.
pub type Stream = ChaCha20Rng;

/// Stream `index` of the family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

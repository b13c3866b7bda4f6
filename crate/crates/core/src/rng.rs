use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type FitRng = ChaCha8Rng;

/// Deterministic RNG for `(seed, stream)`; streams are independent of scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one (seed, stream) pair. Streams let per-item or
/// per-epoch draws be reproduced without replaying everything before them.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

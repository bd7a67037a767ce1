use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG stream `stream` under a base `seed`.
///
/// Streams are indexed rather than drawn sequentially so that work items
/// (replicates, Monte Carlo chunks) can run in any order or on any thread and
/// still see the same random numbers.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

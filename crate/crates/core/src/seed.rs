//! Seeded random streams. Every consumer gets its own ChaCha stream so that
//! changing one seed never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

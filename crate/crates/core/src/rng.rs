//! Reproducible random-number streams.
//!
//! Every bootstrap iteration gets its own ChaCha stream derived from the
//! run seed and the iteration index. Streams are independent by
//! construction, so results do not depend on which worker executes which
//! iteration, and a run is bit-reproducible at any parallelism degree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one bootstrap iteration: ChaCha8 keyed by the run seed,
/// on its own stream selected by the iteration counter.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

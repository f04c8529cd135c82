//! Deterministic per-task random streams.
//!
//! Every sampler takes an explicit RNG. Batches derive one stream per task
//! from `(master seed, task index)` so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream number `task` of the generator seeded by `seed`.
pub fn stream(seed: u64, task: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Child stream of a task, for nested sampling (e.g. attempt `j` of task `t`).
pub fn substream(seed: u64, task: u64, sub: u64) -> SimRng {
    let mixed = seed ^ sub.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    stream(mixed, task)
}

/// Open-interval uniform in (0, 1].
#[inline]
pub fn uniform_open0<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

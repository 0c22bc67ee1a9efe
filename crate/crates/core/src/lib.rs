//! Examiner / student / teacher co-evolution on a synthetic multi-hop
//! knowledge graph.
//!
//! An examiner policy builds multi-hop questions by walking a functional
//! knowledge graph and records the walk as a construction path. A student
//! policy learns to answer those questions through a noisy search tool with
//! group-relative policy optimization, while a teacher that additionally sees
//! the construction path supplies dense per-step guidance through a top-K
//! reverse KL term. The teacher tracks the student as an exponential moving
//! average of its parameters.
//!
//! All policies are tabular softmax models, so every probability, KL and
//! gradient in the training loop is computed exactly.

pub mod advantages;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod kg;
pub mod losses;
pub mod policy;
pub mod rewards;

pub use error::{Error, Result};

use rand_chacha::ChaCha8Rng;

/// Deterministic random source used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Builds an independent, reproducible random stream from a seed and a stream id.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

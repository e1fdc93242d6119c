//! Dense linear algebra, small MLPs with exact gradients, and Adam.

mod adam;
pub mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{dot, squared_distance, Matrix};
pub use mlp::{backward, forward, sigmoid, Activation, ForwardCache, Mlp, MlpParams, MlpSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },
    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(String),
    #[error("non-finite gradient in {block}")]
    NonFinite { block: String },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `ln(clamp(p))` and its derivative in `p` (zero where the clamp is active).
#[inline]
pub fn clamped_ln(p: f64) -> (f64, f64) {
    let c = clamp_prob(p);
    let d = if c == p { 1.0 / p } else { 0.0 };
    (c.ln(), d)
}

/// Deterministic generator for a `(seed, stream)` pair. Distinct streams give
/// independent sequences so pipeline stages do not perturb each other.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

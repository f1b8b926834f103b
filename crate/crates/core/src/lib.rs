//! Detection and localization of AI-competition rhetorical frames in news text.
//!
//! The crate is organized around a four-stage hierarchy:
//!
//! 1. [`gate`]: keyword test for whether a document discusses AI at all.
//! 2. [`classify`] over [`embed`] features: does the document contain a frame?
//! 3. [`classify`] or [`attention`]: which paragraphs contain a frame?
//! 4. [`attention`]: which tokens realize the frame (span extraction)?
//!
//! [`pipeline`] chains the stages, [`eval`] provides the cross-validation
//! protocol and metrics, and [`corpus`] / [`textprep`] handle data.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod binio;
pub mod classify;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gate;
pub mod gradcheck;
pub mod pipeline;
pub mod textprep;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded RNG used by every training entry point.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent sub-seed (splitmix64 step).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

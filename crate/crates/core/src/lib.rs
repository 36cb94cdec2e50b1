//! Synthetic temporal social networks, a decoder-only transformer that
//! forecasts each user's next evolution stage, and the graph metrics used to
//! judge those forecasts.
//!
//! The crate is `no_std` + `alloc` when the default `std` feature is off.
//! File formats, configuration files, and the command-line front end live in
//! the companion `egpt` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod egpt;
pub mod error;
pub mod features;
pub mod graphmetrics;
pub mod numerics;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};

/// Deterministic generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}

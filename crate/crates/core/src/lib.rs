//! Multi-target active domain adaptation lab.
//!
//! One labeled source domain, N unlabeled target domains, a staged
//! annotation budget. Training couples a classifier with an adversarial
//! domain discriminator (binary, all-way, or decomposed over a shared
//! source/union/per-target channel layout); active sampling ranges from
//! classical uncertainty scores to gradient-utility-weighted KMeans.
//! Everything is seeded and reproduces bit-for-bit.

pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};

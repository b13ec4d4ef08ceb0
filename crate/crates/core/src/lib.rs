//! Collision-free path planning for a planar two-link arm through the
//! latent space of a conditional GAN.
//!
//! The generator learns a map from the unit square onto the collision-free
//! part of joint space for a given obstacle mask, so any path drawn in the
//! latent square maps to a collision-free joint trajectory.

pub mod cgan;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod nn;
pub mod planner;
pub mod scenarios;
pub mod svg;

pub use error::{Error, Result};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version string embedded in every artifact this crate writes.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Short, stable hash of a configuration's JSON form.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configs serialize");
    hex::encode(&Sha256::digest(&json)[..8])
}

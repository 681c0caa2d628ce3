//! Encrypted deadbeat state observer that detects sparse sensor attacks on
//! ciphertexts.
//!
//! The layers, bottom-up:
//! - [`modring`]: centered arithmetic and linear algebra over Z_q.
//! - [`plantsim`]: closed-loop plant with additive sensor attacks.
//! - [`obsdesign`]: real-valued deadbeat observer bank and residue map.
//! - [`quantobs`]: the observer quantized onto Z_q, detection and recovery.
//! - [`lwe`]: additively homomorphic LWE encryption.
//! - [`zerodyn`]: per-channel normal form and output-zeroing cancellation.
//! - [`encobs`]: modified encryption, encrypted observer, residue disclosure.
//! - [`secviews`]: adversary views and their deterministic conversions.
//! - [`pipeline`]: end-to-end runs in reference, quantized and encrypted mode.

pub mod codec;
pub mod encobs;
pub mod error;
pub mod lwe;
pub mod modring;
pub mod obsdesign;
pub mod pipeline;
pub mod plantsim;
pub mod quantobs;
pub mod secviews;
pub mod zerodyn;

pub use error::{Error, Result};

//! Verifiable outsourced ML training at desk scale.
//!
//! A server trains models in deterministic fixed-point arithmetic while
//! emitting one blinded identifier per iteration; a client audits a random
//! sample of iterations through an R1CS constraint system, computes exact
//! detection probabilities, and settles through a simulated hash-locked
//! escrow.

pub mod backend;
pub mod circuits;
pub mod commitment;
pub mod dataio;
pub mod error;
pub mod field;
pub mod fixedpoint;
pub mod models;
pub mod payment;
pub mod prng;
pub mod protocol;
pub mod r1cs;

pub mod gadgets;

pub use error::{Error, Result};

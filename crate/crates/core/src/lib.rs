//! Exact and Monte Carlo laboratory for strictly stationary INAR(1)
//! processes with Poisson innovations.
//!
//! The crate is organised bottom-up:
//!
//! - [`dist`]: truncated distributions on the nonnegative integers with
//!   explicit tail mass, and seeded sampling.
//! - [`chains`]: the INAR(1) chain, pure-death chains, indicator chains,
//!   the superposition construction, and exact finite-window laws.
//! - [`dependence`]: maximal correlation, the event-based lambda
//!   coefficient, Markov-triplet residuals and tensor products of joints.
//! - [`mixing`]: interlaced window coefficients, gap certificates and
//!   decay-rate fits.
//! - [`verify`]: Monte Carlo and exact verification campaigns.

pub mod chains;
pub mod dependence;
pub mod dist;
pub mod error;
pub mod json;
pub mod mixing;
pub mod numeric;
pub mod verify;

pub use error::{Error, Result};

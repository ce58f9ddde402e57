//! Centroid-based error correction for gesture classifiers.
//!
//! A base classifier trained on many users is wrapped by a lightweight
//! corrector that learns, from a handful of labelled samples of a new
//! user, which inputs the base model gets wrong and what it confuses
//! them with.

pub mod base;
pub mod corrector;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};

//! Unsupervised domain adaptation with learned routing.
//!
//! Trains a source-domain classifier, adversarially aligns a target-domain
//! encoder against it, and fits a Mahalanobis-distance probe over
//! discriminator activations that decides, per test sample, which branch
//! should classify it. Everything is deterministic for a fixed seed: runs
//! produce bit-identical metrics whether the `parallel` feature is on or
//! off and regardless of thread count.

pub mod cell;
pub mod config;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod extractor;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod probe;
pub mod report;
pub mod rng;

pub use error::{Error, Result};

//! Distributed diffusion LMS over networks whose measurement noise is a
//! Gaussian Markov random field (GMRF).
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: communication and statistical-dependency graphs.
//! - [`gmrf`]: tree-structured covariance/precision construction and sampling.
//! - [`sigmodel`]: regressors, parameter processes and observations.
//! - [`diffusion`]: GMRF potential gradients and the ATC/CTA/general recursions.
//! - [`sparsity`]: thresholding operators and the ACS/ASC strategies.
//! - [`analysis`]: closed-form mean and mean-square theory.
//! - [`seeds`]: counter-hashed seed derivation for reproducible streams.

pub mod analysis;
pub mod diffusion;
mod error;
pub mod gmrf;
pub mod graph;
pub mod linalg;
pub mod seeds;
pub mod sigmodel;
pub mod sparsity;

pub use error::{Error, Result};

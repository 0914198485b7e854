//! Gradient-regularized latent space modulation.
//!
//! - [`autodiff`]: scalar graphs whose derivatives are themselves graph nodes.
//! - [`regularizer`]: gradient, Hessian-Frobenius and spectral penalties on latents.
//! - [`dynamics`]: latent gradient flow and the acceleration-penalized energy.
//! - [`model`] / [`train`]: a windowed character model with a latent bottleneck and its SGD trainer.
//! - [`corpus`]: synthetic structured documents, tokenization and structural tagging.
//! - [`metrics`]: perplexity, latent stability, structural error rates and friends.

pub mod autodiff;
pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod metrics;
pub mod model;
pub mod regularizer;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

//! Unsupervised domain invariant feature learning for binary image
//! classification.
//!
//! Three networks are trained together: a feature generator, a label
//! classifier on the generator's features, and a domain discriminator that
//! tries to tell source features from target features. The generator is
//! pushed toward features the discriminator scores at 0.5 for both domains,
//! so the label classifier trained on labeled source images carries over to
//! the unlabeled target domain.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit instantiation used by the experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
mod scalar;
pub mod selfcheck;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Parameters64 = nn::Parameters<f64>;
pub type TrainedModel64 = training::TrainedModel<f64>;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Parameters32 = nn::Parameters<f32>;

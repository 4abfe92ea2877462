//! Regression-guided neural networks.
//!
//! A moderated regression whose single interaction term multiplies the
//! focal predictor by a learned neural summary of every other predictor:
//!
//! ```text
//! y = c0 + sum_k c_k x_k + c_f x_f + c_int * f(M) * x_f
//! ```
//!
//! The summary `f` and the regression coefficients are trained jointly on
//! a weighted MSE. Each epoch a classical "twin" regression with the
//! learned index as the only moderator is refit on held-out data to judge
//! whether the interaction is real.
//!
//! # Module Structure
//!
//! - [`data`] - CSV ingestion, variable roles, standardization, splits
//! - [`linear`] - weighted least squares, t-tests, VIF, MMR, margins
//! - [`neural`] - GeLU MLP ensemble, batch norm, gradients, AdamW
//! - [`model`] - the composite model and its training loop
//! - [`twin`] - twin regression and model comparison
//! - [`explain`] - partial dependence and accumulated local effects
//! - [`synth`] - synthetic data from known moderation structures
//! - [`pipeline`] - split, preprocess, train and twin-evaluate in one call

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod explain;
pub mod linear;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod twin;

pub use error::{Error, Result};

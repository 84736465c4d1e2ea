//! Stochastic predictive network with parametric bias.
//!
//! A network maps joint-angle commands plus a small learnable "parametric
//! bias" vector to a Gaussian over the resulting sensor state (a camera
//! embedding and joint torques). Training fits the network weights and one
//! bias per data-collection trial jointly, so the bias space self-organizes
//! around the regimes the data was collected in. At run time the bias is
//! re-estimated online with frozen weights, and the model is inverted by
//! multi-start gradient descent to point the camera at whatever a text
//! query describes.
//!
//! Modules:
//!
//! - [`net`]: tanh MLP with analytic gradients, Adam and momentum SGD.
//! - [`model`]: the predictive model, normalization and its losses.
//! - [`trainer`]: joint weight/bias training and PCA of the bias table.
//! - [`updater`]: online bias adaptation from a FIFO of observations.
//! - [`control`]: view control by model inversion.
//! - [`sim`]: kinematic arm, gravity torques and a synthetic embedding oracle.
//! - [`experiments`]: file formats, scenarios, evaluation and the ablation grid.

pub mod control;
pub mod data;
pub mod error;
pub mod experiments;
pub mod model;
pub mod net;
pub mod sim;
pub mod trainer;
pub mod updater;

pub use error::{Error, Result};

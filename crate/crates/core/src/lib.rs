//! Color constancy by illuminant classification.
//!
//! Training illuminants are grouped with spherical k-means; a convolutional
//! network learns to classify image patches into those groups; the
//! illuminant of a new image is the probability-weighted sum of the group
//! centers, averaged over many patches. Classic statistics-based estimators
//! and a cross-validation harness are included for comparison.

pub mod augment;
pub mod baselines;
pub mod clustering;
pub mod dataset;
mod error;
pub mod estimator;
pub mod eval;
pub mod imaging;
pub mod network;

pub use error::{Error, Result};
pub use imaging::{angular_error, Illuminant, LinearImage};

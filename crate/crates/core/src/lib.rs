//! Projection pursuit driven by Gaussian mixture densities.
//!
//! A Gaussian mixture is fitted to (centred, optionally scaled) data by EM with
//! BIC model selection. Because any linear projection of a Gaussian mixture is
//! again a Gaussian mixture, the negentropy of a projection can be approximated
//! in closed form from the projected parameters alone. A real-coded hybrid
//! genetic algorithm then searches the sine-cosine angle encoding of orthonormal
//! bases for the projection with the largest approximated negentropy.
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the CLI and the file
//! formats use.

// `!(x > y)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod ga;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod negentropy;
pub mod projection;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` dataset.
pub type Dataset = data::Dataset<f64>;
/// `f64` preprocessing transform.
pub type Preprocessor = data::Preprocessor<f64>;
/// `f64` Gaussian mixture.
pub type GaussianMixture = gmm::GaussianMixture<f64>;
/// `f64` EM fit report.
pub type FitReport = gmm::FitReport<f64>;
/// `f64` projection basis.
pub type Basis = projection::Basis<f64>;
/// `f64` angle genome.
pub type AngleGenome = projection::AngleGenome<f64>;
/// `f64` negentropy estimate.
pub type NegentropyEstimate = negentropy::NegentropyEstimate<f64>;
/// `f64` projection pursuit result.
pub type PpResult = ga::PpResult<f64>;
/// `f64` estimator comparison report.
pub type ComparisonReport = metrics::ComparisonReport<f64>;

pub use data::PreprocessMode;
pub use ga::GaConfig;
pub use gmm::CovarianceModel;
pub use negentropy::{EstimatorKind, EstimatorSpec};

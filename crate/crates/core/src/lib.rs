//! Class distillation over precomputed embedding vectors.
//!
//! The toolkit learns a projection of embeddings under Mahalanobis
//! contrastive losses, models the target class as a multivariate Gaussian
//! maintained over a sliding window, and labels new instances by comparing
//! their normalised squared Mahalanobis distance against a Beta quantile.
//!
//! Module map:
//!
//! - [`linalg`]: packed symmetric matrices, Cholesky, Gaussian statistics,
//!   rank-1 appends and the sliding window.
//! - [`betadist`]: regularised incomplete Beta function and its inverse.
//! - [`mahalanobis`]: distances, the similarity kernel, the Beta decision
//!   rule and dev-set calibration.
//! - [`loss`]: Mahalanobis, Mahalanobis-mean and cosine contrastive losses
//!   with analytic gradients.
//! - [`trainer`]: projection-head training and the MLP ablation head.
//! - [`diagnostics`]: PCA, Henze-Zirkler, Anderson-Darling, Q-Q and
//!   distance reports.
//! - [`metrics`]: confusion-matrix metrics and ROC-AUC.
//! - [`data`]: dataset and model file formats, splitting, synthetic data.
//! - [`pipeline`]: split, train, threshold and evaluate in one call.
//! - [`cli`]: the command-line front-end used by the `classdistill` binary.

pub mod betadist;
pub mod cli;
pub mod data;
pub mod diagnostics;
mod error;
pub mod linalg;
pub mod loss;
pub mod mahalanobis;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};

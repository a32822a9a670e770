//! Generalized isotonic recursive partitioning.
//!
//! Fits a monotone function of multivariate covariates under any convex
//! differentiable loss by repeatedly splitting groups of points along the
//! partial order with minimum cuts. The sequence of partitions forms a
//! regularization path that ends at the isotonic optimum.

pub mod cut;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod loss;
pub mod model;
pub mod oracle;

pub use dataset::{Dataset, Observation, PartialOrder};
pub use engine::{certify, fit, fit_with_progress, CertificateReport, FitLimits, Path, PathRecord};
pub use error::{GirpError, Result};
pub use loss::{GroupWeight, Loss, LossModel, LossSpec};
pub use model::{evaluate, select_stopping, validation_curve, IsotonicModel, Metric, PathModelFile};

//! Parametric survival modelling with the adapted power generalised Weibull
//! (APGW) family and multi-parameter regression.
//!
//! - [`apgw`]: closed-form distribution functions, shape taxonomy, cure
//!   fractions.
//! - [`model`]: link functions, the `M(...)` lattice, datasets.
//! - [`likelihood`]: censored log-likelihood, score, observed information.
//! - [`optimizer`]: multi-start BFGS fitting.
//! - [`inference`]: standard errors, ratio curves, cure reports, model tables.
//! - [`simulate`]: random variates, censoring calibration, replication studies.
//! - [`io`]: CSV datasets and TOML configuration.

pub mod apgw;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optimizer;
pub mod simulate;
mod special;

pub use apgw::{ApgwParams, HazardShape};
pub use error::{Block, Error, Result};
pub use likelihood::{Likelihood, ObservedInformation};
pub use model::{ModelSpec, RegressionCoefficients, SurvivalDataset};
pub use optimizer::{fit, profile_refit, FitResult, OptimizerConfig};

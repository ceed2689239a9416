//! Bias-compensated soft feedback for iterative recovery of discrete sparse
//! vectors.
//!
//! * [`denoiser`]: scalar conditional-mean estimation and its unbiasing.
//! * [`lmmse`]: the per-element unbiased linear MMSE stage.
//! * [`recovery`]: the iterative IMS / xuIMS / nuIMS / TMS estimators.
//! * [`simkit`]: seeded instance generation and Monte Carlo campaigns.

pub mod denoiser;
pub mod error;
pub mod lmmse;
pub mod recovery;
pub mod simkit;

pub use error::{Error, Result};

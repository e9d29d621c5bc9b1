//! Linear soft-margin SVM trained in the dual.
//!
//! [`smo`] solves the binary dual problem; [`BinarySvm`] wraps one solution
//! with its support set and cached primal weights; [`OvrSvm`] combines one
//! binary model per class and optionally carries Platt sigmoids that turn
//! decision values into class probabilities.

mod binary;
mod checkpoint;
pub mod kernel;
mod ovr;
mod platt;
pub mod smo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::BinarySvm;
pub use kernel::KernelKind;
pub use ovr::OvrSvm;
pub use platt::{fit_sigmoid, PlattParams};

use crate::codec::CodecError;
use crate::data::SampleId;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("labels must contain both classes")]
    DegenerateLabels,
    #[error("solver stopped after {iterations} iterations with violation gap {gap:.3e}")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("sample id {0} is unknown to the model")]
    UnknownId(SampleId),
    #[error("model has no Platt calibration")]
    MissingCalibration,
    #[error("checkpoint: {0}")]
    Codec(#[from] CodecError),
}

/// Solver settings shared by every binary problem of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// KKT tolerance on the maximal violating pair.
    pub tol: f64,
    /// Iteration budget in multiples of the training-set size.
    pub max_passes: usize,
    /// Multipliers above this count as support vectors.
    pub alpha_tol: f64,
    pub kernel: KernelKind,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_passes: 100,
            alpha_tol: 1e-8,
            kernel: KernelKind::Linear,
        }
    }
}

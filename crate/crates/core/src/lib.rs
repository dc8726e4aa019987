//! Two-stage skin lesion diagnosis with Bayesian uncertainty and explanations.
//!
//! The pipeline segments a dermoscopic image with a Bayesian MultiResUNet,
//! gates the classifier input on the predicted mask, classifies the lesion
//! with a Bayesian CNN, and attaches Monte Carlo uncertainty estimates and
//! saliency explanations to every diagnosis.

pub mod classifier;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod saliency;
pub mod segnet;
pub mod synth;
pub mod types;
pub mod uncertainty;
pub mod util;
pub mod viz;
pub mod xai_eval;

pub use error::{Error, Result};
pub use types::{
    class_index, BinaryMask, Image, ProbabilityVector, TriageCounts, UncertaintyRecord,
    CLASS_LABELS,
};

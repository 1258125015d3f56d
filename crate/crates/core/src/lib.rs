//! Desk-scale simulator for cooperative multi-vehicle semantic communication.

pub mod channel;
pub mod classic_codec;
pub mod error;
pub mod image;
pub mod jscc;
pub mod kb;
pub mod modem_fec;
pub mod nn;
pub mod scalar;
pub mod semantic;

pub use error::{Error, Result};

/// Scalar used by the experiment harness and the concrete aliases below.
pub type Real = f32;
pub type RealTensor = nn::Tensor<Real>;
pub type RealParams = nn::ModelParams<Real>;
pub type RealJscc = jscc::JsccModel<Real>;
pub type RealCoopClassifier = semantic::pipeline::CoopClassifier<Real>;
pub type RealBackboneClassifier = semantic::ops::BackboneClassifier<Real>;

//! Minimal neural-network engine with explicit gradients, generic over the
//! scalar type.

mod descent;
pub mod gradcheck;
mod layers;
mod loss;
mod params;
mod sequential;
mod tensor;

pub use descent::{gradient_descent, sample_stream, DescentConfig, StepRule};
pub use layers::{Conv2d, Dense, Layer, PRelu, PRELU_INIT_SLOPE};
pub use loss::{cross_entropy, mse, softmax};
pub use params::{ModelParams, ParamArray, Trainable};
pub use sequential::{CoopDense, Sequential};
pub use tensor::Tensor;


#[cfg(test)]
mod gradcheck_tests;

//! Learned joint source-channel codec.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{checkpoint_header_len, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use model::{
    image_to_tensor, tensor_to_image, CompressionRatio, DecodeTrace, EncodeTrace, Head, JsccConfig, JsccModel,
    CLASSIFICATION_RATIO, RECONSTRUCTION_RATIO,
};
pub use train::{
    add_noise, backward, forward_loss, history_csv, loss_and_grad, sample_loss, train, LossKind, Sample, Target,
    TrainConfig,
};

/// Encodes one input into `k` unit-power complex symbols.
pub fn jscc_encode<T: crate::scalar::Scalar>(
    model: &JsccModel<T>,
    x: &crate::nn::Tensor<T>,
) -> crate::Result<crate::channel::SymbolBlock<T>> {
    model.encode(x)
}

/// Decodes one user's received block on its own.
pub fn jscc_decode<T: crate::scalar::Scalar>(
    model: &JsccModel<T>,
    y: &crate::channel::SymbolBlock<T>,
) -> crate::Result<crate::nn::Tensor<T>> {
    model.decode(y)
}

//! Semantic task layer: feature extraction, multi-modal and multi-user
//! fusion, cooperative decoding, task performers and metrics.

pub mod detect;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod registration;
pub mod scene;

pub use detect::{detect, detect_with, CropClassifier};
pub use metrics::{ap_at_iou, mean_ap, psnr, recall_at_iou, weighted_f1, ConfusionMatrix, DetBox};
pub use ops::{
    classify, cooperative_decode, extract_semantic, fuse_modalities, fuse_users, occlude, vote, FusionSpec, SemanticFeature,
    TwoTower,
};
pub use registration::{compose, register_views, register_views_guided};
pub use scene::{MultiModalSample, ViewSet};

#[cfg(test)]
mod tests;

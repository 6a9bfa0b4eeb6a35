//! Inference engine for the neural visibility predictor.

pub mod encoding;
pub mod head;
pub mod layers;
pub mod predictor;
pub mod unet;
pub mod weights;

pub use encoding::encode_direction;
pub use head::softmax;
pub use layers::{downsample, norm_act, sparse_conv3, upsample, NormStats};
pub use predictor::{
    invisibility_grad, invisibility_score, predict_visibility, FeatureCache, Logits, Precision, Predictor,
};
pub use unet::{unet_forward, UNet};
pub use weights::{load_weights, save_weights, Descriptor, ModelWeights, Tensor};

/// Feature rows over one octree level.
pub type FeatureMatrix<T = f32> = crate::tensor::Matrix<T>;

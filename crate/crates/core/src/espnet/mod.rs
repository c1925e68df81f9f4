//! A small ESP-style encoder-decoder for dense keypoint masks, with hand-written backward
//! passes, BCE training and thresholded inference.

mod infer;
mod loss;
mod model;
mod ops;
mod optim;
mod tensor;
mod train;
mod weights;

pub use infer::{infer_mask, infer_mask_at, mask_to_keypoints, predict_prob, ProbMap};
pub use loss::{bce_grad, bce_grad_flat, bce_loss, bce_loss_flat};
pub use model::{
    architecture, esp_module_backward, esp_module_forward, esp_module_forward_gated, espnet_backward, espnet_forward,
    espnet_forward_gated, images_to_tensor,
    init_weights, update_running_stats, validate_weights, DecoderSpec, EspCache, EspSpec, ForwardCache, Mode,
    ParamGrads, ReluGates, BRANCHES, DECODER, DILATIONS, ENCODER, STRIDE,
};
pub use ops::{
    concat_channels, conv2d_backward, conv2d_forward, norm_backward, norm_forward, relu, relu_backward, sigmoid,
    split_channels, upsample2x, upsample2x_backward, ConvGeometry, NormCache, NORM_EPS, NORM_MOMENTUM,
};
pub use optim::{cosine_lr, optimizer_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{matmul, Scalar, Tensor};
pub use train::{
    loss_log_to_csv, train, train_with_validation, write_loss_log, EpochLoss, TrainConfig, TrainOutcome,
};
pub use weights::{is_buffer, ModelWeights};

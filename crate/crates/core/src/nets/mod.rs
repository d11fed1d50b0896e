//! Small differentiable networks: the depth estimator, the Lambertian
//! surface translator with its discriminators, and a classifier, plus their
//! training loops.
//!
//! Everything runs on `f64` single-sample tensors; a minibatch is a set of
//! independent tapes whose parameter gradients are summed in sample order.

pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tape;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use model::{
    build_classifier, build_depth_net, build_discriminator, build_translator, ArchConfig, ModelKind, ModelParams,
    NormKind,
};
pub use optim::Adam;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
pub use train::{
    infer_depth, load_depth_samples, load_images, train_depth, train_lst, translate, Budget, DepthLoss, DepthSample,
    LstModels, TrainConfig,
};

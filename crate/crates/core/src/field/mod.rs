//! The implicit language field: pose encoding, MLP, training and file format.

mod encoding;
mod io;
mod model;
mod train;

pub use encoding::{encode_pose, PositionBounds, PositionalEncodingSpec};
pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use model::{FieldArchitecture, FieldModel, FieldOutput, Gradients, Linear, LinearGrad};
pub use train::{
    evaluate_loss, sample_loss_and_grad, train, EpochRecord, LossHistory, TrainConfig,
};

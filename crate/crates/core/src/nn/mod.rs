//! Convolutional encoder-decoder with hand-written backpropagation.

mod adam;
mod checkpoint;
pub mod layers;
mod model;
mod profile;
mod tensor;
mod train;

pub use adam::{AdamParams, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, LOSS_TAIL, MAGIC};
pub use layers::Exec;
pub use model::{Model, Trace};
pub use profile::{DecoderStage, EncoderStage, NetworkProfile, TensorSpec};
pub use tensor::Tensor;
pub use train::{infer, load_training_set, train, train_with, Sample, TrainConfig};

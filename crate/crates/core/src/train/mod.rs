//! Initialization, optimization, training loop and checkpoints.

mod checkpoint;
mod fit;
mod init;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint,
    TrainProgress,
};
pub use fit::{best_checkpoint_path, fit, mean_loss, train_step, EpochLog, StepResult, TrainConfig};
pub use init::init_uniform;
pub use optim::{nadam_step, Moments, Nadam, OptimState};

//! Encoder, decoder, soft masks, losses and optimization.

mod forward;
mod loss;
mod optim;
mod params;
mod train;

pub use forward::{argmax, sinusoid_table, Branches, Forward, Margins, Model, SoftMaskState};
pub use loss::{combine_soft_mask, reconstruction_loss, total_loss, LossReport};
pub use optim::{AdamW, LrSchedule};
pub use params::{BlockIdx, Layout, ModelParams, ModelSpec};
pub use train::{
    apply_gradients, clip_gradients, eval_mask_seed, predict, train_mask_seed, train_step, ClipGrads, StepInput,
};

//! Variational information-bottleneck objective and the joint training loop.
//!
//! The loss is `D + β·R`. `D` is the batch cross-entropy of the neural
//! estimator on received signals synthesized with fresh fading and noise;
//! `R` is the closed-form KL divergence from `p(y|w)` to `CN(0, I_N)`
//! averaged over the batch types.

mod batch;
mod objective;
mod system;
mod train;

pub use batch::TrainingBatch;
pub use objective::{
    distortion_estimate, hidden_activity, ib_objective, objective_gradients, rate_estimate, record_distortion,
    record_rate, ObjectiveValue, SystemGradients,
};
pub use system::{CodebookInit, Encoder, EpochRecord, LrSchedule, TrainConfig, TrainedSystem};
pub use train::{freeze_codebook, train};

#[cfg(test)]
mod tests;

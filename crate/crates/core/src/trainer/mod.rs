//! Training orchestration: schedules, optimizers, the adversarial loop and
//! the downstream classifier loop.

pub mod augment;
pub mod classifier;
pub mod gan;
pub mod optimizer;
pub mod schedules;

pub use augment::{augment_slice, AugmentRanges};
pub use classifier::{
    aggregate_subject_prediction, ClassifierEpochLog, ClassifierTrainer, LabeledSlice,
};
pub use gan::{EpochLog, GanTrainer, StepReport};
pub use optimizer::AdamW;
pub use schedules::{cosine_lr, exp_lr, noise_sigma_sq, smooth_real_labels};

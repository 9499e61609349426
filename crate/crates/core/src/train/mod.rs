//! Loss, optimizer, learning-rate schedule, augmentation and the
//! train/validate loop.

mod augment;
mod loss;
mod optim;
mod runner;
mod schedule;

pub use augment::{augment, Transform};
pub use loss::{bce_dice_loss, LossValue};
pub use optim::{sgd_step, OptimizerState};
pub use runner::{evaluate, predict, train, train_with, EpochRecord, EvalSummary, TrainConfig, TrainRunRecord};
pub use schedule::{poly_lr, ScheduleState};

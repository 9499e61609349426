use crate::error::{Error, Result};

/// Polynomial decay from `base_lr` to 0 over `max_iters` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub base_lr: f64,
    pub max_iters: usize,
    pub power: f64,
    pub current_iter: usize,
}

impl ScheduleState {
    pub const DEFAULT_POWER: f64 = 0.9;

    pub fn new(base_lr: f64, max_iters: usize) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::config("max_iters", "must be positive"));
        }
        if !(base_lr.is_finite() && base_lr >= 0.0) {
            return Err(Error::config(
                "lr",
                format!("must be a non-negative number, got {base_lr}"),
            ));
        }
        Ok(ScheduleState {
            base_lr,
            max_iters,
            power: Self::DEFAULT_POWER,
            current_iter: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        poly_lr(self)
    }

    /// Moves to the next iteration, saturating at `max_iters`.
    pub fn advance(&mut self) {
        self.current_iter = (self.current_iter + 1).min(self.max_iters);
    }
}

/// `base_lr · (1 − iter/max_iters)^power`.
pub fn poly_lr(state: &ScheduleState) -> f64 {
    let frac = state.current_iter.min(state.max_iters) as f64 / state.max_iters as f64;
    state.base_lr * (1.0 - frac).powf(state.power)
}

use serde::{Deserialize, Serialize};

use super::OptimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val: f64,
    pub epochs_since_improve: usize,
    pub patience: usize,
    /// Validation runs on training epochs that are multiples of this.
    pub val_every: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best_val: f64::INFINITY,
            epochs_since_improve: 0,
            patience: 5,
            val_every: 4,
        }
    }
}

impl EarlyStopState {
    pub fn new(patience: usize, val_every: usize) -> Result<Self, OptimError> {
        if patience < 1 || val_every < 1 {
            return Err(OptimError::InvalidConfig("patience and val_every must be at least 1"));
        }
        Ok(Self {
            patience,
            val_every,
            ..Default::default()
        })
    }

    /// Whether `epoch` (counted from 1) is a validation epoch.
    pub fn is_validation_epoch(&self, epoch: usize) -> bool {
        epoch > 0 && epoch.is_multiple_of(self.val_every)
    }

    pub fn update(&mut self, val_loss: f64) -> EarlyStop {
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        if self.epochs_since_improve >= self.patience {
            EarlyStop::Stop
        } else {
            EarlyStop::Continue
        }
    }

    /// True once at least one finite validation loss has been seen.
    pub fn improved(&self) -> bool {
        self.best_val.is_finite()
    }
}

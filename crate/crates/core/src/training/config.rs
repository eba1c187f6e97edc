use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which action cross-entropy drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// −Σ_l P^l Σ_k a_k log â^l_k: each leaf's cross-entropy weighted by its path probability.
    #[default]
    PathWeighted,
    /// Cross-entropy of the path-weighted mixture of leaf distributions.
    Mixture,
    /// Cross-entropy of the maximum-probability leaf only.
    MaxLeaf,
}

/// Log-linear ramp of the L1 weight from `start` to `end` over `epochs` epochs,
/// held at `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Ramp {
    pub start: f64,
    pub end: f64,
    pub epochs: usize,
}

impl L1Ramp {
    pub fn weight_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || epoch + 1 >= self.epochs {
            return self.end;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        (self.start.ln() + frac * (self.end.ln() - self.start.ln())).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight of the next-observation squared error.
    pub delta1: f64,
    /// Weight of the action-consistency KL term.
    pub delta2: f64,
    /// Split-balance penalty λ.
    pub lambda: f64,
    pub l1_weight: f64,
    pub l1_ramp: Option<L1Ramp>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Update iterations without validation improvement before stopping.
    pub patience: usize,
    /// Validation is scored every `eval_every` updates.
    pub eval_every: usize,
    /// A drop in validation negative log-likelihood larger than this also
    /// counts as progress for early stopping (infinity: AUROC only).
    pub val_loss_min_delta: f64,
    pub max_epochs: usize,
    /// Restart from a fresh initialization when the training loss has not
    /// dropped by more than `restart_min_decrease` after `restart_epochs`.
    pub restart_epochs: usize,
    pub restart_min_decrease: f64,
    pub max_restarts: usize,
    pub loss: LossVariant,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            delta1: 1e-2,
            delta2: 1e-3,
            lambda: 1e-1,
            l1_weight: 0.0,
            l1_ramp: None,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 50,
            eval_every: 10,
            val_loss_min_delta: 1e-4,
            max_epochs: 500,
            restart_epochs: 5,
            restart_min_decrease: 0.05,
            max_restarts: 2,
            loss: LossVariant::PathWeighted,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.delta1, self.delta2, self.lambda, self.l1_weight, self.learning_rate];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights and learning rate must be finite and non-negative".into()));
        }
        if !(self.val_loss_min_delta >= 0.0) {
            return Err(Error::Config("val_loss_min_delta must be non-negative".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("patience, batch_size and eval_every must be at least 1".into()));
        }
        if let Some(r) = self.l1_ramp {
            if !(r.start > 0.0 && r.end > 0.0) {
                return Err(Error::Config("L1 ramp endpoints must be positive".into()));
            }
        }
        Ok(())
    }

    /// L1 weight in effect during `epoch`.
    pub fn l1_at(&self, epoch: usize) -> f64 {
        self.l1_ramp.map_or(self.l1_weight, |r| r.weight_at(epoch))
    }
}

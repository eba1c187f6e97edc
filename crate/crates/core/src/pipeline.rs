//! End-to-end training on raw trajectories: validation split, normalization,
//! growth (or fixed-topology training) and model packaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{infer_action_count, prepare_all, split_validation, FeatureRanges, Normalizer, Trajectory};
use crate::error::{data, Error, Result};
use crate::growth::{grow, initialize_tree, GrowthConfig, GrowthEvent};
use crate::io::{ModelFile, ModelMetadata};
use crate::training::{train_fixed_topology, validation_score, EpochRecord, Scope, TrainingConfig};
use crate::tree::{Dims, GateKind, RecurrenceModel, TreePolicy, DEFAULT_HISTORY_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// History dimension M; 0 gives a static (memoryless) tree.
    pub history_dim: usize,
    pub recurrence: RecurrenceModel,
    pub gate: GateKind,
    /// Grow the tree; otherwise train a complete tree of `fixed_depth`.
    pub grow: bool,
    pub fixed_depth: usize,
    pub val_frac: f64,
    pub training: TrainingConfig,
    pub growth: GrowthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            history_dim: DEFAULT_HISTORY_DIM,
            recurrence: RecurrenceModel::MatrixHist,
            gate: GateKind::Linear,
            grow: true,
            fixed_depth: 2,
            val_frac: 0.1,
            training: TrainingConfig::default(),
            growth: GrowthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(Error::Config("val_frac must lie in (0, 1)".into()));
        }
        self.training.validate()?;
        self.growth.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub policy: TreePolicy,
    /// Before low-probability pruning (equal to `policy` for fixed topologies).
    pub unpruned: TreePolicy,
    pub growth_log: Vec<GrowthEvent>,
    pub epochs: Vec<EpochRecord>,
    pub ranges: FeatureRanges,
    pub val_score: f64,
    pub warnings: Vec<String>,
}

impl TrainedModel {
    pub fn model_file(&self, cfg: &RunConfig, seed: u64, feature_names: Vec<String>) -> ModelFile {
        let mut metadata = ModelMetadata {
            seed,
            training: Some(cfg.training.clone()),
            growth: cfg.grow.then(|| cfg.growth.clone()),
            feature_names,
            feature_ranges: Some(self.ranges.clone()),
            ..Default::default()
        };
        metadata.metrics.insert("val_auroc".into(), self.val_score);
        metadata.metrics.insert("param_count".into(), self.policy.param_count() as f64);
        metadata.metrics.insert("n_leaves".into(), self.policy.topology().n_leaves() as f64);
        ModelFile::from_policy(&self.policy, metadata)
    }
}

/// Trains on `trajs`, holding out `cfg.val_frac` for validation. All
/// randomness derives from `seed`.
pub fn train_on(trajs: &[Trajectory], cfg: &RunConfig, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    if trajs.len() < 2 {
        return Err(data("need at least two trajectories to hold out a validation set"));
    }
    let obs = trajs[0].obs_dim().ok_or_else(|| data(format!("trajectory {} is empty", trajs[0].id)))?;
    let actions = infer_action_count(trajs).max(2);
    for t in trajs {
        t.validate(obs, actions)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val) = split_validation(trajs, cfg.val_frac, &mut rng);
    let normalizer = Normalizer::fit(&train)?;
    let ranges = FeatureRanges::from_trajectories(&train)?;
    let train_p = prepare_all(&train, &normalizer);
    let val_p = prepare_all(&val, &normalizer);
    let dims = Dims { obs, actions, history: cfg.history_dim };

    let (policy, unpruned, growth_log, epochs, warnings) = if cfg.grow {
        let out = grow(&train_p, &val_p, dims, cfg.recurrence, cfg.gate, normalizer, &cfg.growth, &cfg.training, &mut rng)?;
        (out.policy, out.unpruned, out.log, out.epochs, out.warnings)
    } else {
        let init = initialize_tree(cfg.fixed_depth, dims, cfg.recurrence, cfg.gate, normalizer, &mut rng)?;
        let training = TrainingConfig { seed, ..cfg.training.clone() };
        let (p, report) = train_fixed_topology(&init, &train_p, &val_p, &training, Scope::All)?;
        (p.clone(), p, Vec::new(), report.epochs, report.failure.into_iter().collect())
    };
    let val_score = validation_score(&policy, &val_p)?;
    Ok(TrainedModel { policy, unpruned, growth_log, epochs, ranges, val_score, warnings })
}

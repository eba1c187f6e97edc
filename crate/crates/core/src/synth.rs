//! Synthetic partially observable patient environment with a scripted
//! expert who treats anyone testing positive within the last three steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{Error, Result};

pub const ACTION_TREAT: usize = 1;
pub const ACTION_WAIT: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub horizon: usize,
    pub p_init_diseased: f64,
    /// Probability a treated diseased patient is cured before the next step.
    pub treatment_efficacy: f64,
    /// P(positive test | diseased).
    pub test_precision: f64,
    /// P(positive test | healthy).
    pub false_alarm: f64,
    pub n_noise_dims: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 1000,
            horizon: 9,
            p_init_diseased: 0.8,
            treatment_efficacy: 0.4,
            test_precision: 0.99,
            false_alarm: 0.05,
            n_noise_dims: 10,
            window: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_init_diseased, self.treatment_efficacy, self.test_precision, self.false_alarm];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.window == 0 || self.horizon < self.window {
            return Err(Error::Config("need 1 ≤ window ≤ horizon".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        1 + self.n_noise_dims
    }
}

/// The expert rule over the most recent test results (oldest first).
pub fn expert_action(window: &[bool]) -> usize {
    if window.iter().any(|&pos| pos) {
        ACTION_TREAT
    } else {
        ACTION_WAIT
    }
}

fn patient<R: Rng>(cfg: &SynthConfig, id: usize, rng: &mut R) -> Trajectory {
    let mut diseased = rng.random_bool(cfg.p_init_diseased);
    let mut tests = Vec::with_capacity(cfg.horizon);
    let mut observations = Vec::with_capacity(cfg.horizon);
    let mut actions = Vec::with_capacity(cfg.horizon);
    let mut hidden = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        let positive = rng.random_bool(if diseased { cfg.test_precision } else { cfg.false_alarm });
        let mut z = Vec::with_capacity(cfg.obs_dim());
        z.push(if positive { 1.0 } else { 0.0 });
        z.extend((0..cfg.n_noise_dims).map(|_| -> f64 { StandardNormal.sample(rng) }));
        tests.push(positive);
        hidden.push(u8::from(diseased));
        let from = tests.len().saturating_sub(cfg.window);
        let a = expert_action(&tests[from..]);
        observations.push(z);
        actions.push(a);
        if diseased && a == ACTION_TREAT && rng.random_bool(cfg.treatment_efficacy) {
            diseased = false;
        }
    }
    Trajectory { id: format!("patient-{id}"), observations, actions, hidden: Some(hidden) }
}

/// Simulates `n_patients` independent trajectories. Each patient draws from
/// its own stream of the seeded generator, so patient i is the same no
/// matter how many others are generated.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    Ok((0..cfg.n_patients)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            patient(cfg, i, &mut rng)
        })
        .collect())
}

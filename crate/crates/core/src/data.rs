//! Demonstration data: trajectories of (observation, action) pairs and the
//! z-score normalization fitted on a training split.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{data, Result};

/// One demonstrated trajectory. Observations are raw (unnormalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Latent state per step, kept for diagnostics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<u8>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> Option<usize> {
        self.observations.first().map(Vec::len)
    }

    /// Checks lengths, dimensions, finiteness and action range.
    pub fn validate(&self, obs_dim: usize, n_actions: usize) -> Result<()> {
        if self.is_empty() {
            return Err(data(format!("trajectory {} is empty", self.id)));
        }
        if self.observations.len() != self.actions.len() {
            return Err(data(format!(
                "trajectory {}: {} observations but {} actions",
                self.id,
                self.observations.len(),
                self.actions.len()
            )));
        }
        for (t, z) in self.observations.iter().enumerate() {
            if z.len() != obs_dim {
                return Err(data(format!(
                    "trajectory {} step {}: observation has {} dims, expected {}",
                    self.id,
                    t,
                    z.len(),
                    obs_dim
                )));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(data(format!("trajectory {} step {}: non-finite observation", self.id, t)));
            }
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= n_actions) {
            return Err(data(format!(
                "trajectory {}: action {} outside 0..{}",
                self.id, a, n_actions
            )));
        }
        Ok(())
    }
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fits mean and standard deviation over every step of every trajectory.
    /// Constant dimensions get a unit standard deviation.
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let dim = trajectories
            .iter()
            .find_map(Trajectory::obs_dim)
            .ok_or_else(|| data("cannot fit normalization on an empty dataset"))?;
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for z in trajectories.iter().flat_map(|t| t.observations.iter()) {
            if z.len() != dim {
                return Err(data("ragged observation dimensions"));
            }
            n += 1;
            for i in 0..dim {
                let delta = z[i] - mean[i];
                mean[i] += delta / n as f64;
                m2[i] += delta * (z[i] - mean[i]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn normalize_value(&self, dim: usize, v: f64) -> f64 {
        (v - self.mean[dim]) / self.std[dim]
    }

    pub fn denormalize_value(&self, dim: usize, v: f64) -> f64 {
        v * self.std[dim] + self.mean[dim]
    }
}

/// A trajectory with observations already mapped into normalized space.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub z: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

impl Prepared {
    pub fn new(traj: &Trajectory, norm: &Normalizer) -> Self {
        Self {
            z: traj.observations.iter().map(|z| norm.normalize(z)).collect(),
            actions: traj.actions.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

pub fn prepare_all(trajs: &[Trajectory], norm: &Normalizer) -> Vec<Prepared> {
    trajs.iter().map(|t| Prepared::new(t, norm)).collect()
}

/// Random split into (train, validation) with `val_frac` of trajectories held out.
/// At least one trajectory lands on each side when there are two or more.
pub fn split_validation<R: Rng + ?Sized>(
    trajs: &[Trajectory],
    val_frac: f64,
    rng: &mut R,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let mut idx: Vec<usize> = (0..trajs.len()).collect();
    idx.shuffle(rng);
    let mut n_val = (trajs.len() as f64 * val_frac).round() as usize;
    if trajs.len() >= 2 {
        n_val = n_val.clamp(1, trajs.len() - 1);
    }
    let val = idx[..n_val].iter().map(|&i| trajs[i].clone()).collect();
    let train = idx[n_val..].iter().map(|&i| trajs[i].clone()).collect();
    (train, val)
}

/// Number of action classes implied by the labels (max label + 1).
pub fn infer_action_count(trajs: &[Trajectory]) -> usize {
    trajs
        .iter()
        .flat_map(|t| t.actions.iter())
        .max()
        .map_or(0, |&a| a + 1)
}

/// Per-dimension (min, max) of raw observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRanges {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let dim = trajs
            .iter()
            .find_map(Trajectory::obs_dim)
            .ok_or_else(|| data("cannot compute feature ranges of an empty dataset"))?;
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for z in trajs.iter().flat_map(|t| t.observations.iter()) {
            for i in 0..dim {
                min[i] = min[i].min(z[i]);
                max[i] = max[i].max(z[i]);
            }
        }
        Ok(Self { min, max })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(obs: Vec<Vec<f64>>, actions: Vec<usize>) -> Trajectory {
        Trajectory { id: "t".into(), observations: obs, actions, hidden: None }
    }

    #[test]
    fn normalizer_matches_population_stats() {
        let t = traj(vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![0, 1]);
        let n = Normalizer::fit(&[t]).unwrap();
        assert_eq!(n.mean, vec![2.0, 5.0]);
        assert_eq!(n.std, vec![1.0, 1.0]);
        assert_eq!(n.normalize(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(n.denormalize(&[1.0, 0.0]), vec![3.0, 5.0]);
    }

    #[test]
    fn validate_rejects_bad_input() {
        assert!(traj(vec![vec![f64::NAN]], vec![0]).validate(1, 2).is_err());
        assert!(traj(vec![vec![0.0]], vec![2]).validate(1, 2).is_err());
        assert!(traj(vec![vec![0.0, 1.0]], vec![0]).validate(1, 2).is_err());
        assert!(traj(vec![], vec![]).validate(1, 2).is_err());
        assert!(traj(vec![vec![0.0]], vec![1]).validate(1, 2).is_ok());
    }

    #[test]
    fn split_keeps_everything() {
        use rand::SeedableRng;
        let trajs: Vec<_> = (0..10)
            .map(|i| Trajectory { id: i.to_string(), observations: vec![vec![0.0]], actions: vec![0], hidden: None })
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (tr, va) = split_validation(&trajs, 0.1, &mut rng);
        assert_eq!(tr.len(), 9);
        assert_eq!(va.len(), 1);
    }
}

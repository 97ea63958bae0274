//! Gaussian residual policy with a separate value network.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::env::Mode;
use super::nn::Mlp;
use super::AdaptError;

pub const POLICY_VERSION: u32 = 1;

const OBS_CLIP: f64 = 10.0;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Running mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    /// Merges a batch of observations into the running statistics.
    pub fn update(&mut self, batch: &[&[f64]]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        let mut mean = vec![0.0; dim];
        for x in batch {
            mean.iter_mut().zip(x.iter()).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for x in batch {
            var.iter_mut()
                .zip(x.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + var[i] * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s))| ((v - m) / (s.sqrt() + 1e-8)).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPolicy {
    pub version: u32,
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
    pub normalizer: ObsNormalizer,
}

impl ResidualPolicy {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        Self {
            version: POLICY_VERSION,
            actor: Mlp::new(&sizes(action_dim), 0.01, rng),
            critic: Mlp::new(&sizes(1), 1.0, rng),
            log_std: vec![init_log_std; action_dim],
            normalizer: ObsNormalizer::new(obs_dim),
        }
    }

    pub fn observation_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn mean(&self, observation: &[f64]) -> Vec<f64> {
        self.actor.predict(&self.normalizer.normalize(observation))
    }

    pub fn value(&self, observation: &[f64]) -> f64 {
        self.critic.predict(&self.normalizer.normalize(observation))[0]
    }

    /// Log density of `action` under a diagonal Gaussian.
    pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(log_std)
            .zip(action)
            .map(|((m, s), a)| {
                let z = (a - m) / s.exp();
                -0.5 * z * z - s - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Residual, its log probability and the value estimate.
    pub fn act(&self, observation: &[f64], mode: Mode, rng: &mut impl Rng) -> (Vec<f64>, f64, f64) {
        let x = self.normalizer.normalize(observation);
        let mean = self.actor.predict(&x);
        let value = self.critic.predict(&x)[0];
        let action: Vec<f64> = match mode {
            Mode::Mean => mean.clone(),
            Mode::Sample => mean
                .iter()
                .zip(&self.log_std)
                .map(|(m, s)| {
                    let n: f64 = StandardNormal.sample(rng);
                    m + s.exp() * n
                })
                .collect(),
        };
        let lp = Self::log_prob(&mean, &self.log_std, &action);
        (action, lp, value)
    }

    pub fn is_finite(&self) -> bool {
        self.actor
            .params()
            .iter()
            .chain(self.critic.params())
            .chain(&self.log_std)
            .all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AdaptError> {
        let p: Self = serde_json::from_str(text)
            .map_err(|e| AdaptError::Config(format!("bad checkpoint: {e}")))?;
        if p.version != POLICY_VERSION {
            return Err(AdaptError::Config(format!(
                "checkpoint version {} is not supported (expected {POLICY_VERSION})",
                p.version
            )));
        }
        if p.log_std.len() != p.action_dim() || p.normalizer.mean.len() != p.observation_dim() {
            return Err(AdaptError::Config(
                "checkpoint dimensions are inconsistent".into(),
            ));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AdaptError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdaptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

//! Proximal policy optimization of the residual policy.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{Env, Episode, Mode};
use super::nn::{clip_grad_norm, Adam};
use super::policy::ResidualPolicy;
use super::AdaptError;

/// Environment variable holding the rollout worker count.
pub const WORKERS_ENV: &str = "DEXTRANSFER_WORKERS";

/// Rollout workers: `DEXTRANSFER_WORKERS` when set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub reward_scale: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub episodes_per_iteration: usize,
    pub iterations: usize,
    /// Deterministic evaluation period, iterations.
    pub eval_every: usize,
    /// Consecutive successful evaluations that stop training early; 0 disables.
    pub early_stop: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            gae_lambda: 0.95,
            clip: 0.3,
            batch_size: 64,
            epochs: 4,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            entropy_coef: 0.0,
            value_coef: 0.5,
            hidden: vec![256, 256],
            init_log_std: -1.6,
            episodes_per_iteration: 16,
            iterations: 200,
            eval_every: 5,
            early_stop: 3,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AdaptError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(AdaptError::Config(
                "gamma and gae_lambda must lie in [0, 1]".into(),
            ));
        }
        if !(self.clip > 0.0
            && self.learning_rate > 0.0
            && self.max_grad_norm > 0.0
            && self.reward_scale > 0.0)
        {
            return Err(AdaptError::Config(
                "clip, learning_rate, max_grad_norm and reward_scale must be positive".into(),
            ));
        }
        if self.batch_size == 0
            || self.epochs == 0
            || self.episodes_per_iteration == 0
            || self.eval_every == 0
        {
            return Err(AdaptError::Config(
                "batch_size, epochs, episodes_per_iteration and eval_every must be at least 1"
                    .into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(AdaptError::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

/// One training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub iteration: usize,
    pub success: bool,
    pub held: bool,
    pub final_distance: f64,
    pub total_reward: f64,
}

impl EvalSummary {
    fn of(iteration: usize, e: &Episode) -> Self {
        Self {
            iteration,
            success: e.success,
            held: e.held,
            final_distance: e.final_distance,
            total_reward: e.total_reward(),
        }
    }

    fn better_than(&self, other: &EvalSummary) -> bool {
        (self.held, self.success, -self.final_distance)
            > (other.held, other.success, -other.final_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub held_rate: f64,
    pub approach: f64,
    pub grasp: f64,
    pub lift: f64,
    pub ce_rate: f64,
    pub ht_rate: f64,
    pub mean_final_distance: f64,
    #[serde(flatten)]
    pub update: UpdateStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Policy with the best deterministic evaluation.
    pub policy: ResidualPolicy,
    pub best: EvalSummary,
    pub log: Vec<IterationLog>,
}

/// Generalized advantage estimates and returns of one episode, which
/// terminates after its last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

fn episode_seed(seed: u64, iteration: usize, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iteration as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (episode as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Optimizer state of the actor (with the log standard deviation) and the critic.
#[derive(Debug, Clone)]
pub struct Optimizers {
    actor: Adam,
    critic: Adam,
}

impl Optimizers {
    pub fn new(policy: &ResidualPolicy, lr: f64) -> Self {
        Self {
            actor: Adam::new(policy.actor.params().len() + policy.log_std.len(), lr),
            critic: Adam::new(policy.critic.params().len(), lr),
        }
    }
}

/// Clipped-surrogate update over `samples` for the configured epochs.
pub fn ppo_update(
    policy: &mut ResidualPolicy,
    opt: &mut Optimizers,
    samples: &[Sample],
    cfg: &PpoConfig,
    rng: &mut impl rand::Rng,
) -> UpdateStats {
    if samples.is_empty() {
        return UpdateStats::default();
    }
    let n = samples.len() as f64;
    let mean_adv = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let std_adv = (samples
        .iter()
        .map(|s| (s.advantage - mean_adv).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let adv: Vec<f64> = samples
        .iter()
        .map(|s| (s.advantage - mean_adv) / (std_adv + 1e-8))
        .collect();
    let inputs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| policy.normalizer.normalize(&s.observation))
        .collect();

    let n_actor = policy.actor.params().len();
    let dim = policy.action_dim();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let m = chunk.len() as f64;
            let mut g_actor = vec![0.0; n_actor + dim];
            let mut g_critic = vec![0.0; policy.critic.params().len()];
            let mut batch = UpdateStats::default();
            for &i in chunk {
                let s = &samples[i];
                let trace = policy.actor.forward(&inputs[i]);
                let mean = trace.output().to_vec();
                let lp = ResidualPolicy::log_prob(&mean, &policy.log_std, &s.action);
                let ratio = (lp - s.log_prob).exp();
                let a = adv[i];
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
                batch.policy_loss -= (ratio * a).min(clipped * a) / m;
                let active = if a >= 0.0 {
                    ratio < 1.0 + cfg.clip
                } else {
                    ratio > 1.0 - cfg.clip
                };
                if !active {
                    batch.clip_fraction += 1.0 / m;
                } else {
                    // d(-ratio·A)/d logp = -ratio·A
                    let dlp = -ratio * a / m;
                    let mut g_mean = vec![0.0; dim];
                    for d in 0..dim {
                        let sigma = policy.log_std[d].exp();
                        let z = (s.action[d] - mean[d]) / sigma;
                        g_mean[d] = dlp * z / sigma;
                        g_actor[n_actor + d] += dlp * (z * z - 1.0);
                    }
                    policy
                        .actor
                        .backward(&trace, &g_mean, &mut g_actor[..n_actor]);
                }
                let vt = policy.critic.forward(&inputs[i]);
                let err = vt.output()[0] - s.ret;
                batch.value_loss += err * err / m;
                policy
                    .critic
                    .backward(&vt, &[cfg.value_coef * 2.0 * err / m], &mut g_critic);
            }
            for d in 0..dim {
                g_actor[n_actor + d] -= cfg.entropy_coef;
            }
            batch.entropy = policy
                .log_std
                .iter()
                .map(|s| s + 0.5 + 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum();
            clip_grad_norm(&mut g_actor, cfg.max_grad_norm);
            clip_grad_norm(&mut g_critic, cfg.max_grad_norm);
            let mut params: Vec<f64> = policy
                .actor
                .params()
                .iter()
                .chain(&policy.log_std)
                .copied()
                .collect();
            opt.actor.step(&mut params, &g_actor);
            policy
                .actor
                .params_mut()
                .copy_from_slice(&params[..n_actor]);
            policy.log_std.copy_from_slice(&params[n_actor..]);
            opt.critic.step(policy.critic.params_mut(), &g_critic);
            stats.policy_loss += batch.policy_loss;
            stats.value_loss += batch.value_loss;
            stats.entropy += batch.entropy;
            stats.clip_fraction += batch.clip_fraction;
            batches += 1.0;
        }
    }
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.clip_fraction /= batches;
    stats
}

#[derive(Serialize)]
struct LogHeader<'a> {
    kind: &'static str,
    seed: u64,
    observation_dim: usize,
    action_dim: usize,
    workers: usize,
    #[serde(flatten)]
    config: &'a PpoConfig,
}

#[derive(Serialize)]
struct LogLine<'a> {
    kind: &'static str,
    #[serde(flatten)]
    entry: &'a IterationLog,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn summarize(iteration: usize, episodes: &[Episode], update: UpdateStats) -> IterationLog {
    let steps = || {
        episodes
            .iter()
            .flat_map(|e| e.steps.iter().map(|s| &s.reward))
    };
    let rate =
        |f: &dyn Fn(&Episode) -> bool| mean(episodes.iter().map(|e| if f(e) { 1.0 } else { 0.0 }));
    IterationLog {
        iteration,
        mean_return: mean(episodes.iter().map(Episode::total_reward)),
        success_rate: rate(&|e| e.success),
        held_rate: rate(&|e| e.held),
        approach: mean(steps().map(|r| r.approach)),
        grasp: mean(steps().map(|r| r.grasp)),
        lift: mean(steps().map(|r| r.lift)),
        ce_rate: mean(steps().map(|r| if r.ce { 1.0 } else { 0.0 })),
        ht_rate: mean(steps().map(|r| if r.ht { 1.0 } else { 0.0 })),
        mean_final_distance: mean(episodes.iter().map(|e| e.final_distance)),
        update,
        eval: None,
    }
}

/// Trains a residual policy on `env`; deterministic for a given `seed`
/// regardless of the worker count.
pub fn train_residual_policy(
    env: &Env,
    cfg: &PpoConfig,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome, AdaptError> {
    cfg.validate()?;
    let workers = worker_count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AdaptError::Config(format!("cannot start rollout workers: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = ResidualPolicy::new(
        env.observation_dim(),
        env.action_dim(),
        &cfg.hidden,
        cfg.init_log_std,
        &mut rng,
    );
    let mut opt = Optimizers::new(&policy, cfg.learning_rate);
    if let Some(w) = log.as_deref_mut() {
        let header = LogHeader {
            kind: "header",
            seed,
            observation_dim: env.observation_dim(),
            action_dim: env.action_dim(),
            workers,
            config: cfg,
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
    }

    let evaluate = |p: &ResidualPolicy, iteration: usize| -> Result<EvalSummary, AdaptError> {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        Ok(EvalSummary::of(
            iteration,
            &env.run(Some(p), Mode::Mean, &mut r)?,
        ))
    };
    let mut best_policy = policy.clone();
    let mut best = evaluate(&policy, 0)?;
    let mut streak = 0;
    let mut entries = Vec::new();

    for iteration in 1..=cfg.iterations {
        let episodes: Vec<Episode> = pool.install(|| {
            (0..cfg.episodes_per_iteration)
                .into_par_iter()
                .map(|e| {
                    let mut r = ChaCha8Rng::seed_from_u64(episode_seed(seed, iteration, e));
                    env.run(Some(&policy), Mode::Sample, &mut r)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;

        let mut samples = Vec::new();
        for e in &episodes {
            let rewards: Vec<f64> = e
                .steps
                .iter()
                .map(|s| s.reward.total * cfg.reward_scale)
                .collect();
            if rewards.iter().any(|r| !r.is_finite()) {
                return Err(AdaptError::Diverged {
                    iteration,
                    reason: "non-finite reward".into(),
                });
            }
            let values: Vec<f64> = e.steps.iter().map(|s| s.value).collect();
            let (adv, ret) = gae(&rewards, &values, cfg.gamma, cfg.gae_lambda);
            for ((s, a), r) in e.steps.iter().zip(adv).zip(ret) {
                samples.push(Sample {
                    observation: s.observation.clone(),
                    action: s.residual.clone(),
                    log_prob: s.log_prob,
                    advantage: a,
                    ret: r,
                });
            }
        }

        let update = ppo_update(&mut policy, &mut opt, &samples, cfg, &mut rng);
        if !update.policy_loss.is_finite() || !update.value_loss.is_finite() || !policy.is_finite()
        {
            return Err(AdaptError::Diverged {
                iteration,
                reason: "non-finite loss".into(),
            });
        }
        let observations: Vec<&[f64]> = samples.iter().map(|s| s.observation.as_slice()).collect();
        policy.normalizer.update(&observations);

        let mut entry = summarize(iteration, &episodes, update);
        if iteration % cfg.eval_every == 0 || iteration == cfg.iterations {
            let eval = evaluate(&policy, iteration)?;
            if eval.better_than(&best) {
                best = eval;
                best_policy = policy.clone();
            }
            streak = if eval.held { streak + 1 } else { 0 };
            entry.eval = Some(eval);
        }
        if let Some(w) = log.as_deref_mut() {
            let line = LogLine {
                kind: "iteration",
                entry: &entry,
            };
            writeln!(
                w,
                "{}",
                serde_json::to_string(&line).expect("log line serializes")
            )?;
        }
        entries.push(entry);
        if cfg.early_stop > 0 && streak >= cfg.early_stop {
            break;
        }
    }
    Ok(TrainOutcome {
        policy: best_policy,
        best,
        log: entries,
    })
}

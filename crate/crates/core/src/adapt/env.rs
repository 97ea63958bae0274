//! Residual-control episodes from the pre-grasp state to the goal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{geodesic_distance, Pose, Vec3};
use crate::hand::{THUMB, WRIST_DOF};
use crate::sim::{SimError, World, WorldState};

use super::policy::ResidualPolicy;
use super::reward::{reward, RewardComponents, RewardInput, RewardState};
use super::{normalize_action, rescale_action, AdaptError, EpisodeConfig};

/// How the policy picks residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sample from the Gaussian policy.
    Sample,
    /// Use the policy mean.
    Mean,
}

/// One transition of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub observation: Vec<f64>,
    /// Raw residual drawn from the policy, before clamping.
    pub residual: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub control: Vec<f64>,
    pub reward: RewardComponents,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    /// World states after every step.
    pub states: Vec<WorldState>,
    /// Object distance to the target after the last step, m.
    pub final_distance: f64,
    /// The object ends within the success radius of the target.
    pub success: bool,
    /// The object stays within the success radius through the grace window.
    pub held: bool,
    /// The simulation diverged and the episode was cut short.
    pub diverged: bool,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward.total).sum()
    }
}

/// Simulated episode from the pre-grasp state.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    world: &'a World,
    a_primary: &'a [Vec<f64>],
    config: &'a EpisodeConfig,
    limits: Vec<(f64, f64)>,
    center: Vec<f64>,
    thumb: Option<usize>,
}

impl<'a> Env<'a> {
    pub fn new(
        world: &'a World,
        a_primary: &'a [Vec<f64>],
        config: &'a EpisodeConfig,
    ) -> Result<Self, AdaptError> {
        let model = world.model();
        if !model.is_floating() {
            return Err(AdaptError::NoWrist);
        }
        if config.goal_step >= a_primary.len() || config.pregrasp_step >= config.goal_step {
            return Err(AdaptError::PregraspAfterGoal {
                pregrasp: config.pregrasp_step,
                goal: config.goal_step,
            });
        }
        Ok(Self {
            world,
            a_primary,
            config,
            limits: model.limits(),
            center: config.pregrasp.q[..WRIST_DOF].to_vec(),
            thumb: model.robot_finger(THUMB),
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        self.config
    }

    pub fn action_dim(&self) -> usize {
        self.world.model().dof()
    }

    pub fn observation_dim(&self) -> usize {
        let m = self.config.contacts.len();
        let tips = self.world.model().fingertips().len();
        self.world.model().dof() + 3 * m + 3 * tips + 7 + 7 + 3 * m + 2
    }

    pub fn reset(&self) -> WorldState {
        self.world
            .initial_state(self.config.pregrasp.clone(), self.config.object_start)
    }

    /// Primary control index replayed at episode step `k`.
    pub fn control_index(&self, k: usize) -> usize {
        (self.config.pregrasp_step + 1 + k).min(self.config.goal_step)
    }

    /// Primary control of step `k` in normalized action units.
    pub fn primary_action(&self, k: usize) -> Vec<f64> {
        normalize_action(
            &self.a_primary[self.control_index(k)],
            &self.center,
            &self.config.rho,
            &self.limits,
        )
    }

    /// Joint targets after adding the clamped residual to the primary action.
    pub fn control(&self, k: usize, residual: &[f64]) -> Vec<f64> {
        let d = self.config.delta_max;
        let a: Vec<f64> = self
            .primary_action(k)
            .iter()
            .zip(residual)
            .map(|(p, r)| (p + r.clamp(-d, d)).clamp(-1.0, 1.0))
            .collect();
        rescale_action(&a, &self.center, &self.config.rho, &self.limits)
    }

    fn world_contacts(&self, object: &Pose) -> Vec<Vec3> {
        self.config
            .contacts
            .iter()
            .map(|c| object.transform_point(&c.point))
            .collect()
    }

    pub fn observe(&self, state: &WorldState, k: usize) -> Result<Vec<f64>, AdaptError> {
        let fk = self.world.model().forward_kinematics(&state.hand.q)?;
        let object = &state.object.pose;
        let target = &self.config.o_target;
        let contacts = self.world_contacts(object);
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend_from_slice(&state.hand.q);
        contacts.iter().for_each(|c| obs.extend(c.iter()));
        fk.fingertips.iter().for_each(|t| obs.extend(t.iter()));
        for pose in [object, target] {
            obs.extend(pose.position.iter());
            obs.extend(pose.rotation.wxyz());
        }
        for (c, m) in contacts.iter().zip(&self.config.contacts) {
            obs.extend((fk.fingertips[m.fingertip] - c).iter());
        }
        obs.push(geodesic_distance(&object.rotation, &target.rotation));
        obs.push(k as f64 / self.config.horizon() as f64);
        Ok(obs)
    }

    /// Reward of `state`, reached at the end of a step.
    pub fn reward(
        &self,
        state: &WorldState,
        running: &mut RewardState,
    ) -> Result<RewardComponents, AdaptError> {
        let kin = self.world.model().kinematics(&state.hand.q)?;
        let fk = self.world.model().forward_kinematics(&state.hand.q)?;
        let object = &state.object.pose;
        let tips: Vec<Vec3> = self
            .config
            .contacts
            .iter()
            .map(|c| fk.fingertips[c.fingertip])
            .collect();
        let contacts = self.world_contacts(object);
        let distal: Vec<f64> = self
            .world
            .distal_distances(&kin, object)
            .iter()
            .map(|d| d.distance)
            .collect();
        let input = RewardInput {
            tips: &tips,
            contacts: &contacts,
            distal: &distal,
            thumb: self.thumb,
            q: &state.hand.q,
            q_target: &self.config.q_target,
            object,
            target: &self.config.o_target,
            start_height: self.config.object_start.position.z,
        };
        Ok(reward(&input, &self.config.reward, running))
    }

    fn distance_to_target(&self, state: &WorldState) -> f64 {
        (state.object.pose.position - self.config.o_target.position).norm()
    }

    /// Runs a full episode. Without a policy the residual is zero, which
    /// replays the primary controls.
    pub fn run(
        &self,
        policy: Option<&ResidualPolicy>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Episode, AdaptError> {
        let horizon = self.config.horizon();
        let mut state = self.reset();
        let mut running = RewardState::new();
        let mut steps = Vec::with_capacity(horizon);
        let mut states = Vec::with_capacity(horizon);
        let mut held = true;
        let mut diverged = false;
        let grace_start = horizon - self.config.grace_steps;
        for k in 0..horizon {
            let observation = self.observe(&state, k)?;
            let (residual, log_prob, value) = match policy {
                Some(p) => p.act(&observation, mode, rng),
                None => (vec![0.0; self.action_dim()], 0.0, 0.0),
            };
            let control = self.control(k, &residual);
            state = match self.world.step(&state, &control) {
                Ok(s) => s,
                Err(SimError::Diverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let reward = self.reward(&state, &mut running)?;
            if k >= grace_start && self.distance_to_target(&state) > self.config.success_radius {
                held = false;
            }
            steps.push(EpisodeStep {
                observation,
                residual,
                log_prob,
                value,
                control,
                reward,
            });
            states.push(state.clone());
        }
        let final_distance = if diverged {
            f64::INFINITY
        } else {
            self.distance_to_target(&state)
        };
        let success = final_distance <= self.config.success_radius;
        Ok(Episode {
            steps,
            states,
            final_distance,
            success,
            held: held && success,
            diverged,
        })
    }
}

//! Contact optimization: grasp configuration and residual-policy PPO training
//! under a hierarchical reward.

mod env;
pub mod nn;
mod policy;
mod ppo;
pub mod reward;

pub use env::{Env, Episode, EpisodeStep, Mode};
pub use policy::{ObsNormalizer, ResidualPolicy, POLICY_VERSION};
pub use ppo::{
    gae, ppo_update, train_residual_policy, worker_count, EvalSummary, IterationLog, Optimizers,
    PpoConfig, Sample, TrainOutcome, UpdateStats, WORKERS_ENV,
};
pub use reward::{ClosestInit, RewardComponents, RewardConstants, RewardInput, RewardState};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo::ContactSet;
use crate::geom::{Pose, Vec3};
use crate::hand::{HandError, HandModel, HandState, THUMB, WRIST_DOF};
use crate::retarget::ControlPlan;
use crate::sim::{Replay, SimError};

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("no contact-free step in the primary trajectory")]
    NoContactFreeStep,
    #[error("no contact-free step brings the guide fingertip within {0} m of its grasp point")]
    ThresholdNotReached(f64),
    #[error("guide finger {0} has no grasp point")]
    GuideWithoutContact(usize),
    #[error("the hand has no fingertip mapped to any grasp point")]
    NoMappedContacts,
    #[error("the hand needs a floating wrist for action rescaling")]
    NoWrist,
    #[error("object trajectory is empty")]
    EmptyTrajectory,
    #[error("pre-grasp step {pregrasp} does not precede the goal step {goal}")]
    PregraspAfterGoal { pregrasp: usize, goal: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error("cannot write training log: {0}")]
    Io(#[from] std::io::Error),
}

/// When a contact-free primary step qualifies as the pre-grasp state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "distance")]
pub enum Trigger {
    /// The step minimizing the guide fingertip's distance to its grasp point.
    Nearest,
    /// The first step whose distance is at most the given value, m.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSettings {
    /// Human finger whose robot fingertip guides pre-grasp selection.
    pub guide_finger: usize,
    pub trigger: Trigger,
    /// Wrist neighborhood radius: meters for translations, radians for rotations.
    pub rho: [f64; WRIST_DOF],
    /// Residual clamp in normalized action units.
    pub delta_max: f64,
    pub grace_steps: usize,
    /// Object displacement that defines the goal frame, m.
    pub goal_displacement: f64,
    /// Object-to-target distance counted as success, m.
    pub success_radius: f64,
    pub reward: RewardConstants,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self {
            guide_finger: THUMB,
            trigger: Trigger::Nearest,
            rho: [0.05, 0.05, 0.05, 0.3, 0.3, 0.3],
            delta_max: 0.2,
            grace_steps: 60,
            goal_displacement: 0.1,
            success_radius: 0.05,
            reward: RewardConstants::default(),
        }
    }
}

impl AdaptSettings {
    pub fn validate(&self) -> Result<(), AdaptError> {
        if !self.rho.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return Err(AdaptError::Config(
                "rho must be positive in every dimension".into(),
            ));
        }
        if !(self.delta_max > 0.0 && self.delta_max <= 1.0) {
            return Err(AdaptError::Config("delta_max must lie in (0, 1]".into()));
        }
        if self.guide_finger >= crate::hand::HUMAN_FINGERS {
            return Err(AdaptError::Config(format!(
                "guide finger {} does not exist",
                self.guide_finger
            )));
        }
        Ok(())
    }
}

/// A grasp point assigned to a robot fingertip, in the object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappedContact {
    pub fingertip: usize,
    pub point: Vec3,
}

/// Everything an RL episode needs besides the world and the primary plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub pregrasp: HandState,
    pub pregrasp_step: usize,
    /// Object pose when the episode starts.
    pub object_start: Pose,
    pub goal_frame: usize,
    pub goal_step: usize,
    pub o_target: Pose,
    pub contacts: Vec<MappedContact>,
    pub rho: [f64; WRIST_DOF],
    pub delta_max: f64,
    pub reward: RewardConstants,
    /// Retargeted joint vector at the grasp frame.
    pub q_target: Vec<f64>,
    pub grace_steps: usize,
    pub success_radius: f64,
}

impl EpisodeConfig {
    /// Control steps of one episode.
    pub fn horizon(&self) -> usize {
        self.goal_step - self.pregrasp_step + self.grace_steps
    }
}

/// Pre-grasp index among contact-free steps, given the guide fingertip's
/// distance to its grasp point at every step.
pub fn select_pregrasp(
    distances: &[f64],
    contact: &[bool],
    trigger: Trigger,
) -> Result<usize, AdaptError> {
    let free = || {
        distances
            .iter()
            .zip(contact)
            .enumerate()
            .filter(|(_, (_, c))| !**c)
    };
    if free().next().is_none() {
        return Err(AdaptError::NoContactFreeStep);
    }
    match trigger {
        Trigger::Nearest => Ok(free()
            .min_by(|a, b| a.1 .0.total_cmp(b.1 .0))
            .map(|(i, _)| i)
            .expect("non-empty")),
        Trigger::Threshold(d) => free()
            .find(|(_, (dist, _))| **dist <= d)
            .map(|(i, _)| i)
            .ok_or(AdaptError::ThresholdNotReached(d)),
    }
}

/// First frame whose object position deviates at least `displacement` from
/// the first frame; falls back to the farthest frame with a warning.
///
/// Returns the frame, its pose and whether the fallback was used.
pub fn compute_goal(poses: &[Pose], displacement: f64) -> Result<(usize, Pose, bool), AdaptError> {
    let first = poses.first().ok_or(AdaptError::EmptyTrajectory)?;
    let dev = |p: &Pose| (p.position - first.position).norm();
    if let Some(t) = poses.iter().position(|p| dev(p) >= displacement) {
        return Ok((t, poses[t], false));
    }
    let (t, _) = poses
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
            if dev(p) > best.1 {
                (i, dev(p))
            } else {
                best
            }
        });
    warn!("object never moves {displacement} m; using the farthest pose (frame {t}) as the goal");
    Ok((t, poses[t], true))
}

/// Maps a normalized action in `[-1, 1]` to joint targets: wrist dimensions
/// around `center` within `rho`, finger dimensions onto their joint range.
pub fn rescale_action(
    a: &[f64],
    center: &[f64],
    rho: &[f64; WRIST_DOF],
    limits: &[(f64, f64)],
) -> Vec<f64> {
    a.iter()
        .enumerate()
        .map(|(i, &v)| {
            if i < WRIST_DOF {
                center[i] + v * rho[i]
            } else {
                let (lo, hi) = limits[i];
                lo + 0.5 * (v + 1.0) * (hi - lo)
            }
        })
        .collect()
}

/// Inverse of [`rescale_action`], clamped to `[-1, 1]`.
pub fn normalize_action(
    u: &[f64],
    center: &[f64],
    rho: &[f64; WRIST_DOF],
    limits: &[(f64, f64)],
) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(i, &v)| {
            let a = if i < WRIST_DOF {
                (v - center[i]) / rho[i]
            } else {
                let (lo, hi) = limits[i];
                2.0 * (v - lo) / (hi - lo) - 1.0
            };
            a.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Hand and object states of the open-loop primary replay, one per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryTrajectory {
    pub hand: Vec<HandState>,
    pub object: Vec<Pose>,
    pub contact_flags: Vec<bool>,
}

impl PrimaryTrajectory {
    pub fn from_replay(replay: &Replay) -> Self {
        Self {
            hand: replay.primary.clone(),
            object: replay.states.iter().map(|s| s.object.pose).collect(),
            contact_flags: replay.contact_flags.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.hand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hand.is_empty()
    }
}

/// Grasp points of the demonstration assigned to robot fingertips.
pub fn map_contacts(model: &HandModel, contacts: &ContactSet) -> Vec<MappedContact> {
    let mut out: Vec<MappedContact> = model
        .correspondence()
        .into_iter()
        .filter_map(|(h, r)| {
            let k = contacts.finger_ids.iter().position(|f| *f == h)?;
            Some(MappedContact {
                fingertip: r,
                point: Vec3::from(contacts.points[k]),
            })
        })
        .collect();
    out.sort_by_key(|c| c.fingertip);
    out
}

/// Derives the episode configuration from the replayed primary trajectory.
pub fn configure_episode(
    model: &HandModel,
    plan: &ControlPlan,
    primary: &PrimaryTrajectory,
    demo_object: &[Pose],
    contacts: &ContactSet,
    settings: &AdaptSettings,
) -> Result<EpisodeConfig, AdaptError> {
    settings.validate()?;
    if !model.is_floating() {
        return Err(AdaptError::NoWrist);
    }
    let mapped = map_contacts(model, contacts);
    if mapped.is_empty() {
        return Err(AdaptError::NoMappedContacts);
    }
    let guide_tip = model
        .robot_finger(settings.guide_finger)
        .ok_or(AdaptError::GuideWithoutContact(settings.guide_finger))?;
    let guide = mapped
        .iter()
        .find(|c| c.fingertip == guide_tip)
        .ok_or(AdaptError::GuideWithoutContact(settings.guide_finger))?;
    let distances = primary
        .hand
        .iter()
        .zip(&primary.object)
        .map(|(h, o)| {
            let fk = model.forward_kinematics(&h.q)?;
            Ok((fk.fingertips[guide_tip] - o.transform_point(&guide.point)).norm())
        })
        .collect::<Result<Vec<f64>, HandError>>()?;
    let pregrasp_step = select_pregrasp(&distances, &primary.contact_flags, settings.trigger)?;
    let (goal_frame, o_target, _) = compute_goal(demo_object, settings.goal_displacement)?;
    let goal_step = plan.step_of_frame(goal_frame);
    if goal_step <= pregrasp_step {
        return Err(AdaptError::PregraspAfterGoal {
            pregrasp: pregrasp_step,
            goal: goal_step,
        });
    }
    let grasp_frame = contacts.grasp_frame.min(plan.q_knots.len() - 1);
    Ok(EpisodeConfig {
        pregrasp: primary.hand[pregrasp_step].clone(),
        pregrasp_step,
        object_start: primary.object[pregrasp_step],
        goal_frame,
        goal_step,
        o_target,
        contacts: mapped,
        rho: settings.rho,
        delta_max: settings.delta_max,
        reward: settings.reward.clone(),
        q_target: plan.q_knots[grasp_frame].clone(),
        grace_steps: settings.grace_steps,
        success_radius: settings.success_radius,
    })
}

//! Manipulation-phase wrist trajectory under rigid hand–object attachment,
//! tracked with PD control.

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{geodesic_distance, Pose};
use crate::hand::{HandError, WRIST_DOF};
use crate::sim::{SimError, World, WorldState};

#[derive(Debug, Error)]
pub enum WristError {
    #[error("object trajectory is empty")]
    EmptyTrajectory,
    #[error("world state deviates from the plan start by {position:.2e} m and {rotation:.2e} rad")]
    StartMismatch { position: f64, rotation: f64 },
    #[error("finger hold posture has {got} entries but the hand has {expected} joints")]
    HoldDimension { expected: usize, got: usize },
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Wrist targets that keep the grasp-time wrist-to-object transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationPlan {
    pub t_grasp: Pose,
    pub o_grasp: Pose,
    /// Object poses to follow, starting with `o_grasp`.
    pub object: Vec<Pose>,
    /// Wrist pose per object pose.
    pub targets: Vec<Pose>,
    /// Joint targets held during manipulation; the wrist entries are ignored.
    pub finger_hold: Vec<f64>,
}

impl ManipulationPlan {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// `T_t = o_t ∘ (T_grasp⁻¹ ∘ o_grasp)⁻¹` for every pose of `object`, whose
/// first element is `o_grasp`.
pub fn plan_wrist(
    object: &[Pose],
    t_grasp: Pose,
    finger_hold: Vec<f64>,
) -> Result<ManipulationPlan, WristError> {
    let o_grasp = *object.first().ok_or(WristError::EmptyTrajectory)?;
    let grip = t_grasp.inverse().compose(&o_grasp).inverse();
    let targets = object
        .iter()
        .map(|o| {
            if *o == o_grasp {
                t_grasp
            } else {
                o.compose(&grip)
            }
        })
        .collect();
    Ok(ManipulationPlan {
        t_grasp,
        o_grasp,
        object: object.to_vec(),
        targets,
        finger_hold,
    })
}

/// Shifts `demo` so it starts at `o_grasp` instead of `o_goal`: positions
/// move by the world offset and rotations by the world-frame rotation
/// difference. Returns `o_grasp` followed by the shifted poses.
pub fn rebase_object_trajectory(demo: &[Pose], o_goal: &Pose, o_grasp: &Pose) -> Vec<Pose> {
    let offset = o_grasp.position - o_goal.position;
    let turn = o_goal.rotation.inverse() * o_grasp.rotation;
    std::iter::once(*o_grasp)
        .chain(
            demo.iter()
                .map(|p| Pose::new(p.position + offset, p.rotation * turn)),
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Factor applied to the wrist proportional gains.
    pub gain_scale: f64,
    /// Time without any hand–object contact that counts as a drop, s.
    pub drop_time: f64,
    /// Start tolerance on the object pose: meters and radians.
    pub start_tolerance: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            gain_scale: 2.0,
            drop_time: 0.25,
            start_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracking {
    /// World state after each plan step past the first.
    pub states: Vec<WorldState>,
    pub controls: Vec<Vec<f64>>,
    /// Executed object poses, one per plan pose, starting at the grasp state.
    pub object: Vec<Pose>,
    pub dropped: bool,
    /// First step of the contact gap that became a drop.
    pub drop_step: Option<usize>,
}

/// Feeds the planned wrist targets to `world`'s PD actuators, with scaled
/// wrist gains, starting from `start`.
pub fn track_manipulation(
    plan: &ManipulationPlan,
    world: &World,
    start: &WorldState,
    config: &TrackingConfig,
) -> Result<Tracking, WristError> {
    let model = world.model();
    let dof = model.dof();
    if plan.finger_hold.len() != dof {
        return Err(WristError::HoldDimension {
            expected: dof,
            got: plan.finger_hold.len(),
        });
    }
    let position = (start.object.pose.position - plan.o_grasp.position).norm();
    let rotation = geodesic_distance(&start.object.pose.rotation, &plan.o_grasp.rotation);
    if position > config.start_tolerance || rotation > config.start_tolerance {
        return Err(WristError::StartMismatch { position, rotation });
    }
    let world = world.with_actuator(
        world
            .actuator()
            .with_scaled_gains(0..WRIST_DOF, config.gain_scale),
    )?;
    let act = world.actuator();
    let dt = world.config().dt;
    let gravity = world.config().gravity();
    let drop_steps = (config.drop_time / dt).round() as usize;

    let mut hint = start.hand.q[..WRIST_DOF].to_vec();
    let mut wrist = Vec::with_capacity(plan.len());
    for t in &plan.targets {
        let w = model.wrist_joints(t, &hint)?;
        hint.copy_from_slice(&w);
        wrist.push(w);
    }

    let mut state = start.clone();
    let mut states = Vec::with_capacity(plan.len());
    let mut controls = Vec::with_capacity(plan.len());
    let mut object = vec![state.object.pose];
    let mut gap = 0;
    let mut drop_step = None;
    for k in 1..plan.len() {
        let load = model.gravity_load(&state.hand.q, &gravity)?;
        let mut control = plan.finger_hold.clone();
        for i in 0..WRIST_DOF {
            let velocity = (wrist[k][i] - wrist[k - 1][i]) / dt;
            control[i] = wrist[k][i] + (act.kd[i] * velocity + load[i]) / act.kp[i];
        }
        state = world.step(&state, &control)?;
        if state.hand_contact() {
            gap = 0;
        } else {
            gap += 1;
            if gap > drop_steps && drop_step.is_none() {
                drop_step = Some(k + 1 - gap);
            }
        }
        object.push(state.object.pose);
        controls.push(control);
        states.push(state.clone());
    }
    Ok(Tracking {
        states,
        controls,
        object,
        dropped: drop_step.is_some(),
        drop_step,
    })
}

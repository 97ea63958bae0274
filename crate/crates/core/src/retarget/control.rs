//! Conversion of a smooth joint trajectory into position targets for PD actuators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SmoothTrajectory, SplineError};
use crate::geom::Vec3;
use crate::hand::{HandError, HandModel, HandState, JointKind};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("joint {joint} has non-positive proportional gain {kp}")]
    ZeroGain { joint: usize, kp: f64 },
    #[error("control frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("actuator model covers {actuators} joints but the hand has {dof}")]
    Dimension { actuators: usize, dof: usize },
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Per-joint second-order PD actuator: `armature·q̈ = kp(target − q) − kd·q̇ − G(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorModel {
    pub armature: Vec<f64>,
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl ActuatorModel {
    /// Critically damped defaults: stiff wrist slides, softer finger joints.
    pub fn default_for(model: &HandModel) -> Self {
        let mut armature = Vec::new();
        let mut kp = Vec::new();
        let mut kd = Vec::new();
        for j in model.joints() {
            let (a, k): (f64, f64) = match j.kind {
                JointKind::Prismatic => (0.05, 200.0),
                JointKind::Revolute => (0.005, 20.0),
            };
            armature.push(a);
            kp.push(k);
            kd.push(2.0 * (k * a).sqrt());
        }
        Self { armature, kp, kd }
    }

    /// Massless, undamped plant used as the identity actuator.
    pub fn ideal(dof: usize, kp: f64) -> Self {
        Self {
            armature: vec![0.0; dof],
            kp: vec![kp; dof],
            kd: vec![0.0; dof],
        }
    }

    pub fn dof(&self) -> usize {
        self.kp.len()
    }

    pub fn validate(&self, dof: usize) -> Result<(), ControlError> {
        if self.kp.len() != dof || self.kd.len() != dof || self.armature.len() != dof {
            return Err(ControlError::Dimension {
                actuators: self.kp.len(),
                dof,
            });
        }
        if let Some((joint, &kp)) = self
            .kp
            .iter()
            .enumerate()
            .find(|(_, k)| !(**k > 0.0 && k.is_finite()))
        {
            return Err(ControlError::ZeroGain { joint, kp });
        }
        Ok(())
    }

    /// Scaled copy of the gains of joints `range`.
    pub fn with_scaled_gains(&self, range: std::ops::Range<usize>, factor: f64) -> Self {
        let mut out = self.clone();
        for i in range {
            out.kp[i] *= factor;
            out.kd[i] *= factor.sqrt();
        }
        out
    }
}

/// Sample times, PD targets and reference states of a control sequence.
pub type ControlSequence = (Vec<f64>, Vec<Vec<f64>>, Vec<HandState>);

/// Samples `q(t)` at `frequency` and converts the feedforward effort into
/// PD position targets `q + (armature·q̈ + kd·q̇ + G(q)) / kp`.
///
/// Returns the sample times, the targets and the sampled reference states.
pub fn to_control_sequence(
    trajectory: &SmoothTrajectory,
    model: &HandModel,
    actuator: &ActuatorModel,
    frequency: f64,
    gravity: &Vec3,
) -> Result<ControlSequence, ControlError> {
    if !frequency.is_finite() || frequency <= 0.0 {
        return Err(ControlError::Frequency(frequency));
    }
    actuator.validate(model.dof())?;
    if trajectory.dof() != model.dof() {
        return Err(HandError::Dimension {
            expected: model.dof(),
            got: trajectory.dof(),
        }
        .into());
    }
    let t0 = trajectory.start_time();
    let span = trajectory.end_time() - t0;
    let count = (span * frequency + 1e-9).floor() as usize + 1;
    let mut times = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let mut reference = Vec::with_capacity(count);
    for k in 0..count {
        let t = (t0 + k as f64 / frequency).min(trajectory.end_time());
        let q = trajectory.position(t);
        let qd = trajectory.velocity(t);
        let qdd = trajectory.acceleration(t);
        let load = model.gravity_load(&q, gravity)?;
        let target = (0..q.len())
            .map(|i| {
                let effort = actuator.armature[i] * qdd[i] + actuator.kd[i] * qd[i] + load[i];
                q[i] + effort / actuator.kp[i]
            })
            .collect();
        times.push(t);
        targets.push(target);
        reference.push(HandState { q, q_dot: qd });
    }
    Ok((times, targets, reference))
}

/// Retargeted joint trajectory with its smooth fit and primary controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    /// Frame rate of the retargeted knots.
    pub fps: f64,
    /// Retargeted joint trajectory `Q`.
    pub q_knots: Vec<Vec<f64>>,
    pub trajectory: SmoothTrajectory,
    /// Control frequency `F`.
    pub frequency: f64,
    pub times: Vec<f64>,
    /// Primary control sequence.
    pub a_primary: Vec<Vec<f64>>,
    /// Sampled smooth reference `(q(t), q'(t))`.
    pub reference: Vec<HandState>,
    /// Primary trajectory recorded by replaying `a_primary`.
    #[serde(default)]
    pub primary: Vec<HandState>,
    #[serde(default)]
    pub contact_flags: Vec<bool>,
}

impl ControlPlan {
    pub fn build(
        model: &HandModel,
        q_knots: Vec<Vec<f64>>,
        fps: f64,
        actuator: &ActuatorModel,
        frequency: f64,
        gravity: &Vec3,
    ) -> Result<Self, ControlError> {
        let trajectory = SmoothTrajectory::fit(&q_knots, fps)?;
        let (times, a_primary, reference) =
            to_control_sequence(&trajectory, model, actuator, frequency, gravity)?;
        Ok(Self {
            fps,
            q_knots,
            trajectory,
            frequency,
            times,
            a_primary,
            reference,
            primary: Vec::new(),
            contact_flags: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.a_primary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_primary.is_empty()
    }

    /// Control step closest to demo frame `frame`.
    pub fn step_of_frame(&self, frame: usize) -> usize {
        let t = frame as f64 / self.fps;
        ((t * self.frequency).round() as usize).min(self.len().saturating_sub(1))
    }

    /// Demo frame closest to control step `step`.
    pub fn frame_of_step(&self, step: usize) -> usize {
        let t = step as f64 / self.frequency;
        ((t * self.fps).round() as usize).min(self.q_knots.len().saturating_sub(1))
    }
}

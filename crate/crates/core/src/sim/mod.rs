//! Penalty-contact world: a PD-servoed floating hand and one free rigid object
//! resting on a ground plane.

mod contact;

pub use contact::{point_distance, segment_distance, PieceDistance};

use std::io::Write;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo::ObjectGeometry;
use crate::geom::{Pose, Rotation, Vec3};
use crate::hand::{HandError, HandModel, HandState, Kinematics};
use crate::retarget::{ActuatorModel, ControlError, ControlPlan};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("control has {got} entries but the hand has {expected} joints")]
    ControlDimension { expected: usize, got: usize },
    #[error("control entry {index} is not finite")]
    NonFiniteControl { index: usize },
    #[error("simulation diverged at step {step}: kinetic energy {energy:.3e} J")]
    Diverged { step: usize, energy: f64 },
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("cannot write trajectory dump: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Control period in seconds.
    pub dt: f64,
    /// Integration substeps per control period.
    pub substeps: usize,
    pub gravity: [f64; 3],
    /// Normal penalty stiffness per contact point, N/m.
    pub stiffness: f64,
    /// Normal penalty damping per contact point, N·s/m.
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Ground plane `z = 0` under the object.
    pub ground: bool,
    /// Kinetic energy of the object that aborts the simulation, J.
    pub divergence_energy: f64,
    /// Contact sample points along each capsule core.
    pub capsule_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 120.0,
            substeps: 20,
            gravity: [0.0, 0.0, -9.81],
            stiffness: 5e3,
            damping: 50.0,
            friction: 1.0,
            ground: true,
            divergence_energy: 1e3,
            capsule_samples: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dt) {
            return Err(SimError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !positive(self.stiffness) {
            return Err(SimError::Config(format!(
                "stiffness must be positive, got {}",
                self.stiffness
            )));
        }
        if !(self.damping >= 0.0 && self.friction >= 0.0) {
            return Err(SimError::Config(
                "damping and friction must be non-negative".into(),
            ));
        }
        if self.substeps == 0 || self.capsule_samples == 0 {
            return Err(SimError::Config(
                "substeps and capsule_samples must be at least 1".into(),
            ));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(SimError::Config("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }
}

/// Free rigid body state; velocities are those of the center of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Pose,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

/// Body touching the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Body {
    Ground,
    Link(usize),
}

/// One active penalty contact on the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub body: Body,
    /// Collision feature on `body`: primitive and sample index, or hull vertex.
    pub feature: (usize, usize),
    pub point: Vec3,
    /// Direction in which the normal force pushes the object.
    pub normal: Vec3,
    /// Total force applied to the object, N.
    pub force: Vec3,
    pub depth: f64,
    /// Friction anchor in the object frame.
    anchor_object: Vec3,
    /// Friction anchor in the touching body's frame.
    anchor_body: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub hand: HandState,
    pub object: ObjectState,
    pub step: usize,
    pub contacts: Vec<Contact>,
}

impl WorldState {
    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }

    pub fn hand_contact(&self) -> bool {
        self.contacts
            .iter()
            .any(|c| matches!(c.body, Body::Link(_)))
    }

    pub fn is_finite(&self) -> bool {
        self.hand
            .q
            .iter()
            .chain(&self.hand.q_dot)
            .all(|v| v.is_finite())
            && self.object.pose.is_finite()
            && self.object.linear_velocity.iter().all(|v| v.is_finite())
            && self.object.angular_velocity.iter().all(|v| v.is_finite())
    }
}

/// Distance between a fingertip's distal link and the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistalDistance {
    pub fingertip: usize,
    pub link: usize,
    /// Signed distance in meters, negative when penetrating.
    pub distance: f64,
    pub on_hand: Vec3,
    pub on_object: Vec3,
}

/// Point sample of a hand collision primitive.
#[derive(Debug, Clone, Copy)]
struct HandSample {
    link: usize,
    feature: (usize, usize),
    local: Vec3,
    radius: f64,
}

/// Static scene description; states are passed in and out so a world can be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct World {
    model: HandModel,
    object: ObjectGeometry,
    config: SimConfig,
    actuator: ActuatorModel,
    gravity: Vec3,
    inertia_body: Matrix3<f64>,
    samples: Vec<HandSample>,
    /// Bounding sphere of the object in its frame.
    bound_center: Vec3,
    bound_radius: f64,
}

impl World {
    pub fn new(
        model: HandModel,
        object: ObjectGeometry,
        config: SimConfig,
        actuator: ActuatorModel,
    ) -> Result<Self, SimError> {
        config.validate()?;
        actuator.validate(model.dof())?;
        let (lo, hi) = object.bounds();
        let ext = hi - lo;
        let m = object.mass();
        let inertia_body = Matrix3::from_diagonal(&Vec3::new(
            m / 12.0 * (ext.y * ext.y + ext.z * ext.z),
            m / 12.0 * (ext.x * ext.x + ext.z * ext.z),
            m / 12.0 * (ext.x * ext.x + ext.y * ext.y),
        ));
        let bound_center = 0.5 * (lo + hi);
        let bound_radius = 0.5 * ext.norm();
        let mut samples = Vec::new();
        let k = config.capsule_samples;
        for (l, link) in model.links().iter().enumerate() {
            for (p, prim) in link.collision.iter().enumerate() {
                let [a, b] = prim.core();
                let n = if a == b { 1 } else { k };
                for s in 0..n {
                    let t = if n == 1 {
                        0.0
                    } else {
                        s as f64 / (n - 1) as f64
                    };
                    samples.push(HandSample {
                        link: l,
                        feature: (p, s),
                        local: a + (b - a) * t,
                        radius: prim.radius(),
                    });
                }
            }
        }
        let gravity = config.gravity();
        Ok(Self {
            model,
            object,
            config,
            actuator,
            gravity,
            inertia_body,
            samples,
            bound_center,
            bound_radius,
        })
    }

    pub fn model(&self) -> &HandModel {
        &self.model
    }

    pub fn object(&self) -> &ObjectGeometry {
        &self.object
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn actuator(&self) -> &ActuatorModel {
        &self.actuator
    }

    /// Same scene with different actuator gains.
    pub fn with_actuator(&self, actuator: ActuatorModel) -> Result<Self, SimError> {
        actuator.validate(self.model.dof())?;
        Ok(Self {
            actuator,
            ..self.clone()
        })
    }

    /// Hand and object at rest, no contacts.
    pub fn initial_state(&self, hand: HandState, object_pose: Pose) -> WorldState {
        WorldState {
            hand,
            object: ObjectState {
                pose: object_pose,
                linear_velocity: Vec3::zeros(),
                angular_velocity: Vec3::zeros(),
            },
            step: 0,
            contacts: Vec::new(),
        }
    }

    pub fn kinetic_energy(&self, object: &ObjectState) -> f64 {
        let r = object.pose.rotation.to_matrix();
        let inertia = r * self.inertia_body * r.transpose();
        let w = &object.angular_velocity;
        0.5 * self.object.mass() * object.linear_velocity.norm_squared()
            + 0.5 * w.dot(&(inertia * w))
    }

    /// Advances one control period with joint position targets `control`.
    pub fn step(&self, state: &WorldState, control: &[f64]) -> Result<WorldState, SimError> {
        let dof = self.model.dof();
        if control.len() != dof {
            return Err(SimError::ControlDimension {
                expected: dof,
                got: control.len(),
            });
        }
        if let Some(index) = control.iter().position(|u| !u.is_finite()) {
            return Err(SimError::NonFiniteControl { index });
        }
        let mut next = state.clone();
        next.step += 1;
        let h = self.config.dt / self.config.substeps as f64;
        let load = self.model.gravity_load(&state.hand.q, &self.gravity)?;
        let limits = self.model.limits();
        for _ in 0..self.config.substeps {
            let kin = self.model.kinematics(&next.hand.q)?;
            let contacts = self.contacts(&next, &kin, &next.contacts);
            let mut force = self.gravity * self.object.mass();
            let mut torque = Vec3::zeros();
            let com = next.object.pose.transform_point(&self.object.com());
            for c in &contacts {
                force += c.force;
                torque += (c.point - com).cross(&c.force);
            }
            next.contacts = contacts;
            self.integrate_hand(&mut next.hand, control, load.as_slice(), &limits, h);
            self.integrate_object(&mut next.object, &force, &torque, h);
        }
        let energy = self.kinetic_energy(&next.object);
        if energy.is_nan() || energy > self.config.divergence_energy || !next.is_finite() {
            return Err(SimError::Diverged {
                step: next.step,
                energy,
            });
        }
        Ok(next)
    }

    fn integrate_hand(
        &self,
        hand: &mut HandState,
        control: &[f64],
        load: &[f64],
        limits: &[(f64, f64)],
        h: f64,
    ) {
        let act = &self.actuator;
        for i in 0..hand.q.len() {
            let (q, qd) = (hand.q[i], hand.q_dot[i]);
            let (mut q_new, mut qd_new) = if act.armature[i] > 0.0 {
                let acc =
                    (act.kp[i] * (control[i] - q) - act.kd[i] * qd - load[i]) / act.armature[i];
                let v = qd + acc * h;
                (q + v * h, v)
            } else {
                let target = control[i] - load[i] / act.kp[i];
                (target, (target - q) / h)
            };
            let (lo, hi) = limits[i];
            if q_new < lo || q_new > hi {
                q_new = q_new.clamp(lo, hi);
                qd_new = 0.0;
            }
            hand.q[i] = q_new;
            hand.q_dot[i] = qd_new;
        }
    }

    fn integrate_object(&self, obj: &mut ObjectState, force: &Vec3, torque: &Vec3, h: f64) {
        let m = self.object.mass();
        let local_com = self.object.com();
        let rot = obj.pose.rotation.to_matrix();
        let inertia = rot * self.inertia_body * rot.transpose();
        let w = obj.angular_velocity;
        let gyro = w.cross(&(inertia * w));
        let inv = inertia.try_inverse().unwrap_or_else(Matrix3::zeros);
        obj.linear_velocity += force / m * h;
        obj.angular_velocity += inv * (torque - gyro) * h;
        let com = obj.pose.transform_point(&local_com) + obj.linear_velocity * h;
        let spin = obj.angular_velocity * h;
        let rotation = if spin == Vec3::zeros() {
            obj.pose.rotation
        } else {
            Rotation::from_scaled_axis(&spin) * obj.pose.rotation
        };
        obj.pose = Pose::new(com - rotation.rotate(&local_com), rotation);
    }

    fn object_point_velocity(&self, obj: &ObjectState, p: &Vec3) -> Vec3 {
        let com = obj.pose.transform_point(&self.object.com());
        obj.linear_velocity + obj.angular_velocity.cross(&(p - com))
    }

    /// Active contacts at the current configuration; friction anchors carry
    /// over from `previous` contacts with the same feature.
    fn contacts(&self, state: &WorldState, kin: &Kinematics, previous: &[Contact]) -> Vec<Contact> {
        let obj = &state.object;
        let to_object = obj.pose.inverse();
        let mut out = Vec::new();
        if self.config.ground {
            for (i, v) in self.ground_vertices().enumerate() {
                let p = obj.pose.transform_point(v);
                if p.z >= 0.0 {
                    continue;
                }
                let key = (Body::Ground, (i, 0));
                let v_obj = self.object_point_velocity(obj, &p);
                out.push(self.resolve(
                    key,
                    p,
                    Vec3::z(),
                    -p.z,
                    -v_obj,
                    &Pose::identity(),
                    obj,
                    previous,
                ));
            }
        }
        for s in &self.samples {
            let frame = &kin.link_frames[s.link];
            let world = frame.transform_point(&s.local);
            let local = to_object.transform_point(&world);
            if (local - self.bound_center).norm() > self.bound_radius + s.radius {
                continue;
            }
            let best = self
                .object
                .pieces()
                .iter()
                .map(|hull| point_distance(hull, &local))
                .min_by(|a, b| a.distance.total_cmp(&b.distance));
            let Some(d) = best else { continue };
            let depth = s.radius - d.distance;
            if depth <= 0.0 {
                continue;
            }
            let point = obj.pose.transform_point(&d.on_piece);
            let normal = -obj.pose.transform_vector(&d.normal);
            let v_hand = self
                .model
                .point_velocity(kin, s.link, &point, &state.hand.q_dot);
            let v_rel = v_hand - self.object_point_velocity(obj, &point);
            let key = (Body::Link(s.link), s.feature);
            out.push(self.resolve(key, point, normal, depth, v_rel, frame, obj, previous));
        }
        out
    }

    fn ground_vertices(&self) -> impl Iterator<Item = &Vec3> {
        self.object.pieces().iter().flat_map(|h| h.extreme_points())
    }

    /// Penalty force for one penetrating feature. `v_rel` is the velocity of
    /// the touching body relative to the object at `point`.
    #[allow(clippy::too_many_arguments)]
    fn resolve(
        &self,
        key: (Body, (usize, usize)),
        point: Vec3,
        normal: Vec3,
        depth: f64,
        v_rel: Vec3,
        body_frame: &Pose,
        obj: &ObjectState,
        previous: &[Contact],
    ) -> Contact {
        let cfg = &self.config;
        let rate = v_rel.dot(&normal);
        let fn_mag = (cfg.stiffness * depth + cfg.damping * rate).max(0.0);
        let (mut anchor_object, anchor_body) =
            match previous.iter().find(|c| (c.body, c.feature) == key) {
                Some(c) => (c.anchor_object, c.anchor_body),
                None => (
                    obj.pose.inverse().transform_point(&point),
                    body_frame.inverse().transform_point(&point),
                ),
            };
        let tangential = |v: Vec3| v - normal * v.dot(&normal);
        let drift = tangential(
            body_frame.transform_point(&anchor_body) - obj.pose.transform_point(&anchor_object),
        );
        let spring = drift * cfg.stiffness;
        let mut ft = spring + tangential(v_rel) * cfg.damping;
        let limit = cfg.friction * fn_mag;
        let ft_norm = ft.norm();
        if ft_norm > limit {
            ft *= if ft_norm > 0.0 { limit / ft_norm } else { 0.0 };
            // Slide the anchor so the spring alone carries the friction bound.
            let keep = if spring.norm() > 0.0 {
                (limit / spring.norm()).min(1.0)
            } else {
                0.0
            };
            let slid = body_frame.transform_point(&anchor_body) - drift * keep;
            anchor_object = obj.pose.inverse().transform_point(&slid);
        }
        Contact {
            body: key.0,
            feature: key.1,
            point,
            normal,
            force: normal * fn_mag + ft,
            depth,
            anchor_object,
            anchor_body,
        }
    }

    /// Signed distance of every fingertip's distal link to the object.
    pub fn collision_query(&self, state: &WorldState) -> Result<Vec<DistalDistance>, SimError> {
        let kin = self.model.kinematics(&state.hand.q)?;
        Ok(self.distal_distances(&kin, &state.object.pose))
    }

    pub fn distal_distances(&self, kin: &Kinematics, object_pose: &Pose) -> Vec<DistalDistance> {
        let to_object = object_pose.inverse();
        (0..self.model.fingertips().len())
            .map(|f| {
                let link = self.model.distal_link(f);
                let frame = &kin.link_frames[link];
                let mut best = DistalDistance {
                    fingertip: f,
                    link,
                    distance: f64::INFINITY,
                    on_hand: Vec3::zeros(),
                    on_object: Vec3::zeros(),
                };
                for prim in &self.model.links()[link].collision {
                    let [a, b] = prim
                        .core()
                        .map(|p| to_object.transform_point(&frame.transform_point(&p)));
                    for hull in self.object.pieces() {
                        let d = segment_distance(hull, &a, &b);
                        let distance = d.distance - prim.radius();
                        if distance < best.distance {
                            best.distance = distance;
                            best.on_object = object_pose.transform_point(&d.on_piece);
                            best.on_hand = object_pose
                                .transform_point(&(d.on_core - d.normal * prim.radius()));
                        }
                    }
                }
                best
            })
            .collect()
    }

    /// Executes `plan.a_primary` open loop from `start`, returning the primary
    /// trajectory, per-step hand–object contact flags and the final state.
    pub fn replay(&self, plan: &ControlPlan, start: &WorldState) -> Result<Replay, SimError> {
        let mut state = start.clone();
        let mut primary = Vec::with_capacity(plan.len());
        let mut contact_flags = Vec::with_capacity(plan.len());
        let mut states = Vec::with_capacity(plan.len());
        for control in &plan.a_primary {
            state = self.step(&state, control)?;
            primary.push(state.hand.clone());
            contact_flags.push(state.hand_contact());
            states.push(state.clone());
        }
        Ok(Replay {
            primary,
            contact_flags,
            states,
            last: state,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub primary: Vec<HandState>,
    pub contact_flags: Vec<bool>,
    pub states: Vec<WorldState>,
    pub last: WorldState,
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub time: f64,
    pub q: Vec<f64>,
    pub object: Pose,
    pub object_velocity: Vec3,
    pub hand_contacts: usize,
    pub ground_contacts: usize,
    pub hand_force: f64,
}

impl StepSummary {
    pub fn of(state: &WorldState, dt: f64) -> Self {
        let hand: Vec<&Contact> = state
            .contacts
            .iter()
            .filter(|c| matches!(c.body, Body::Link(_)))
            .collect();
        Self {
            step: state.step,
            time: state.time(dt),
            q: state.hand.q.clone(),
            object: state.object.pose,
            object_velocity: state.object.linear_velocity,
            hand_contacts: hand.len(),
            ground_contacts: state.contacts.len() - hand.len(),
            hand_force: hand.iter().map(|c| c.force.norm()).sum(),
        }
    }
}

/// Writes one JSON summary per state.
pub fn write_jsonl(path: impl AsRef<Path>, states: &[WorldState], dt: f64) -> Result<(), SimError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in states {
        let line = serde_json::to_string(&StepSummary::of(s, dt)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

//! Dexterous hand kinematics: the hand description file, forward kinematics,
//! palm orientation and the human-to-robot fingertip correspondence.

pub mod file;

pub use file::HandFile;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geom::{Pose, Rotation, Vec3};

/// Number of fingers tracked on the human hand (thumb first).
pub const HUMAN_FINGERS: usize = 5;
/// Human finger index of the thumb.
pub const THUMB: usize = 0;
/// Joint slots used by a floating-base wrist: 3 prismatic then 3 revolute.
pub const WRIST_DOF: usize = 6;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("failed to read hand file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed hand description: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("joint `{joint}`: {reason}")]
    Joint { joint: String, reason: String },
    #[error("link `{link}`: {reason}")]
    Link { link: String, reason: String },
    #[error("site `{site}`: {reason}")]
    Site { site: String, reason: String },
    #[error("correspondence: {0}")]
    Correspondence(String),
    #[error("expected {expected} joint values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("palm sites are collinear; the palm plane is undefined")]
    DegeneratePalm,
    #[error("model has no floating-base wrist")]
    NoFloatingBase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the child link frame.
    pub axis: Vec3,
    pub parent: Option<usize>,
    pub child: usize,
    pub limits: (f64, f64),
}

/// Collision primitive in its link frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
}

impl Primitive {
    pub fn radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. } | Primitive::Capsule { radius, .. } => radius,
        }
    }

    /// Core segment endpoints (coincident for spheres) in the link frame.
    pub fn core(&self) -> [Vec3; 2] {
        match *self {
            Primitive::Sphere { center, .. } => [Vec3::from(center), Vec3::from(center)],
            Primitive::Capsule { a, b, .. } => [Vec3::from(a), Vec3::from(b)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    /// Pose of the joint frame relative to the parent link frame.
    pub offset: Pose,
    pub collision: Vec<Primitive>,
    pub mass: f64,
    pub com: Vec3,
    /// Joint driving this link, `None` for the root.
    pub parent_joint: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Site {
    pub name: String,
    pub link: usize,
    pub position: Vec3,
}

/// Joint configuration and velocity of a hand.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HandState {
    pub q: Vec<f64>,
    pub q_dot: Vec<f64>,
}

impl HandState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            q_dot: vec![0.0; n],
        }
    }
}

/// World-frame kinematic quantities at one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub link_frames: Vec<Pose>,
    /// World axis of every joint.
    pub joint_axes: Vec<Vec3>,
    /// World point on every joint axis.
    pub joint_origins: Vec<Vec3>,
}

/// Result of forward kinematics.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub fingertips: Vec<Vec3>,
    pub palm_sites: [Vec3; 3],
    pub kinematics: Kinematics,
}

#[derive(Debug, Clone)]
pub struct HandModel {
    name: String,
    base: Pose,
    floating: bool,
    joints: Vec<Joint>,
    links: Vec<Link>,
    /// Links in parent-before-child order.
    order: Vec<usize>,
    /// Joints on the path from the root to each link.
    chains: Vec<Vec<usize>>,
    fingertips: Vec<Site>,
    palm_sites: [Site; 3],
    palm_normal_sign: f64,
    /// Human finger -> robot fingertip index.
    correspondence: [Option<usize>; HUMAN_FINGERS],
}

impl HandModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HandError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HandError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HandError> {
        let file: HandFile = serde_json::from_str(text)?;
        file.build()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        name: String,
        floating: bool,
        joints: Vec<Joint>,
        links: Vec<Link>,
        order: Vec<usize>,
        fingertips: Vec<Site>,
        palm_sites: [Site; 3],
        palm_normal_sign: f64,
        correspondence: [Option<usize>; HUMAN_FINGERS],
    ) -> Self {
        let mut chains = vec![Vec::new(); links.len()];
        for &l in &order {
            if let Some(j) = links[l].parent_joint {
                let mut chain = match joints[j].parent {
                    Some(p) => chains[p].clone(),
                    None => Vec::new(),
                };
                chain.push(j);
                chains[l] = chain;
            }
        }
        Self {
            name,
            base: Pose::identity(),
            floating,
            joints,
            links,
            order,
            chains,
            fingertips,
            palm_sites,
            palm_normal_sign,
            correspondence,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degrees of freedom `D`, counting the virtual wrist joints.
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn is_floating(&self) -> bool {
        self.floating
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn fingertips(&self) -> &[Site] {
        &self.fingertips
    }

    pub fn palm_sites(&self) -> &[Site; 3] {
        &self.palm_sites
    }

    pub fn base(&self) -> &Pose {
        &self.base
    }

    /// Same hand mounted at a different world pose.
    pub fn with_base(&self, base: Pose) -> Self {
        Self {
            base,
            ..self.clone()
        }
    }

    /// Robot fingertip index for a human finger, if mapped.
    pub fn robot_finger(&self, human_finger: usize) -> Option<usize> {
        self.correspondence.get(human_finger).copied().flatten()
    }

    /// `(human finger, robot fingertip)` pairs in human finger order.
    pub fn correspondence(&self) -> Vec<(usize, usize)> {
        self.correspondence
            .iter()
            .enumerate()
            .filter_map(|(h, r)| r.map(|r| (h, r)))
            .collect()
    }

    /// Link carrying a fingertip site, i.e. the distal phalanx of that finger.
    pub fn distal_link(&self, fingertip: usize) -> usize {
        self.fingertips[fingertip].link
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.joints.iter().map(|j| j.limits).collect()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.limits.0, j.limits.1);
        }
    }

    pub fn mid_range(&self) -> Vec<f64> {
        self.joints
            .iter()
            .map(|j| 0.5 * (j.limits.0 + j.limits.1))
            .collect()
    }

    fn check_dim(&self, q: &[f64]) -> Result<(), HandError> {
        if q.len() != self.dof() {
            return Err(HandError::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn kinematics(&self, q: &[f64]) -> Result<Kinematics, HandError> {
        self.check_dim(q)?;
        let n = self.links.len();
        let mut link_frames = vec![Pose::identity(); n];
        let mut joint_axes = vec![Vec3::zeros(); self.joints.len()];
        let mut joint_origins = vec![Vec3::zeros(); self.joints.len()];
        for &l in &self.order {
            let link = &self.links[l];
            let parent_frame = match link.parent_joint.and_then(|j| self.joints[j].parent) {
                Some(p) => link_frames[p],
                None => self.base,
            };
            let joint_frame = parent_frame.compose(&link.offset);
            link_frames[l] = match link.parent_joint {
                None => joint_frame,
                Some(j) => {
                    let joint = &self.joints[j];
                    joint_axes[j] = joint_frame.transform_vector(&joint.axis);
                    joint_origins[j] = joint_frame.position;
                    joint_frame.compose(&joint_motion(joint, q[j]))
                }
            };
        }
        Ok(Kinematics {
            link_frames,
            joint_axes,
            joint_origins,
        })
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<FkResult, HandError> {
        let kinematics = self.kinematics(q)?;
        let site = |s: &Site| kinematics.link_frames[s.link].transform_point(&s.position);
        let fingertips = self.fingertips.iter().map(site).collect();
        let palm_sites = [
            site(&self.palm_sites[0]),
            site(&self.palm_sites[1]),
            site(&self.palm_sites[2]),
        ];
        Ok(FkResult {
            fingertips,
            palm_sites,
            kinematics,
        })
    }

    /// Unit normal of the plane through the index MCP, ring MCP and wrist sites.
    pub fn palm_orientation(&self, q: &[f64]) -> Result<Vec3, HandError> {
        let fk = self.forward_kinematics(q)?;
        self.palm_normal(&fk.palm_sites)
    }

    pub fn palm_normal(&self, sites: &[Vec3; 3]) -> Result<Vec3, HandError> {
        let [index, ring, wrist] = sites;
        let e1 = index - wrist;
        let e2 = ring - wrist;
        let n = e1.cross(&e2);
        let scale = e1.norm() * e2.norm();
        if scale == 0.0 || n.norm() <= 1e-9 * scale {
            return Err(HandError::DegeneratePalm);
        }
        Ok(n.normalize() * self.palm_normal_sign)
    }

    /// 3×D Jacobian of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, kin: &Kinematics, link: usize, point: &Vec3) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.dof());
        for &j in &self.chains[link] {
            let col = match self.joints[j].kind {
                JointKind::Revolute => kin.joint_axes[j].cross(&(point - kin.joint_origins[j])),
                JointKind::Prismatic => kin.joint_axes[j],
            };
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        jac
    }

    /// World velocity of a point rigidly attached to `link`.
    pub fn point_velocity(
        &self,
        kin: &Kinematics,
        link: usize,
        point: &Vec3,
        q_dot: &[f64],
    ) -> Vec3 {
        self.chains[link].iter().fold(Vec3::zeros(), |acc, &j| {
            let col = match self.joints[j].kind {
                JointKind::Revolute => kin.joint_axes[j].cross(&(point - kin.joint_origins[j])),
                JointKind::Prismatic => kin.joint_axes[j],
            };
            acc + col * q_dot[j]
        })
    }

    /// Generalized gravity load `G(q)`: the joint effort that statically
    /// balances the link weights under acceleration `gravity`.
    pub fn gravity_load(&self, q: &[f64], gravity: &Vec3) -> Result<DVector<f64>, HandError> {
        let kin = self.kinematics(q)?;
        let mut load = DVector::zeros(self.dof());
        for (l, link) in self.links.iter().enumerate() {
            if link.mass == 0.0 {
                continue;
            }
            let com = kin.link_frames[l].transform_point(&link.com);
            let jac = self.point_jacobian(&kin, l, &com);
            load -= jac.transpose() * (gravity * link.mass);
        }
        Ok(load)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// World pose of the floating wrist (before the root link offset).
    pub fn wrist_pose(&self, q: &[f64]) -> Result<Pose, HandError> {
        if !self.floating {
            return Err(HandError::NoFloatingBase);
        }
        self.check_dim(q)?;
        let local = Pose::new(
            Vec3::new(q[0], q[1], q[2]),
            Rotation::from_euler_xyz(q[3], q[4], q[5]),
        );
        Ok(self.base.compose(&local))
    }

    /// Wrist joint values realizing `pose`, choosing the Euler branch and
    /// angle wrap closest to `hint`.
    pub fn wrist_joints(&self, pose: &Pose, hint: &[f64]) -> Result<[f64; WRIST_DOF], HandError> {
        if !self.floating {
            return Err(HandError::NoFloatingBase);
        }
        let local = self.base.inverse().compose(pose);
        let (a, b, c) = local.rotation.euler_xyz();
        let pi = std::f64::consts::PI;
        let branches = [(a, b, c), (a + pi, pi - b, c + pi)];
        let mut best = (f64::INFINITY, [0.0; 3]);
        for (a, b, c) in branches {
            let cand = [
                unwrap_near(a, hint[3]),
                unwrap_near(b, hint[4]),
                unwrap_near(c, hint[5]),
            ];
            let d: f64 = cand
                .iter()
                .zip(&hint[3..6])
                .map(|(x, h)| (x - h).powi(2))
                .sum();
            if d < best.0 {
                best = (d, cand);
            }
        }
        let p = local.position;
        Ok([p.x, p.y, p.z, best.1[0], best.1[1], best.1[2]])
    }
}

fn joint_motion(joint: &Joint, value: f64) -> Pose {
    match joint.kind {
        JointKind::Revolute => Pose::from_rotation(Rotation::from_axis_angle(&joint.axis, value)),
        JointKind::Prismatic => Pose::from_translation(joint.axis * value),
    }
}

fn unwrap_near(angle: f64, hint: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    angle + tau * ((hint - angle) / tau).round()
}

#[cfg(test)]
mod tests;

//! Scripted human demonstrations synthesized from the human reference hand.
//!
//! A demo approaches a cube from above with open fingers, closes the grip,
//! then moves the cube with the hand rigidly attached. Human fingertip
//! keypoints sit at the finger-pad centers, one pad thickness off the
//! surface, as motion-capture markers do.

use std::f64::consts::PI;

use crate::demo::{DemoFrame, DemoSequence, HumanHand, ObjectGeometry};
use crate::geom::{Pose, Rotation, Vec3};
use crate::hand::{HandModel, HUMAN_FINGERS, WRIST_DOF};

use super::hands;

pub const CUBE_SIDE: f64 = 0.06;
pub const CUBE_MASS: f64 = 0.1;
pub const FPS: f64 = 120.0;

/// Keypoint offset from the surface at the tightest grip.
const PAD: f64 = 0.010;
/// Grip offset once the hand settles before moving the object.
const PAD_SETTLED: f64 = 0.0105;
/// Height of the palm plane above the cube top while grasping.
const PALM_CLEARANCE: f64 = 0.035;
/// Height of the fingertip keypoints above the ground while grasping.
const TIP_HEIGHT: f64 = 0.025;
const APPROACH_HEIGHT: f64 = 0.10;

const REACH: usize = 60;
const CLOSE: usize = 50;
const SETTLE: usize = 10;
const MOVE: usize = 90;
const HOLD: usize = 30;

/// Minimum-jerk blend of `[0, 1]`.
fn blend(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn cube_points(side: f64) -> Vec<Vec3> {
    let h = side / 2.0;
    let mut v = Vec::with_capacity(8);
    for x in [-h, h] {
        for y in [-h, h] {
            for z in [-h, h] {
                v.push(Vec3::new(x, y, z));
            }
        }
    }
    v
}

/// The bundled cube, its frame at the geometric center.
pub fn cube() -> ObjectGeometry {
    ObjectGeometry::new(vec![cube_points(CUBE_SIDE)], Vec3::zeros(), CUBE_MASS)
        .expect("cube is a valid hull")
}

/// Two-link planar inverse kinematics in a finger's flexion plane: returns
/// root and distal flexion placing the tip `inward` toward the opposite
/// side and `down` below the root.
fn finger_ik(l1: f64, l2: f64, inward: f64, down: f64) -> [f64; 2] {
    let c2 =
        ((inward * inward + down * down - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let t2 = c2.acos();
    let t1 = inward.atan2(down) - (l2 * t2.sin()).atan2(l1 + l2 * t2.cos());
    [t1, t2]
}

struct HumanRig {
    model: HandModel,
    /// Per finger: joint indices, root position, segment lengths and the side it closes toward.
    fingers: Vec<([usize; 2], Vec3, [f64; 2], f64)>,
}

impl HumanRig {
    fn new() -> Self {
        let model = hands::human_reference()
            .build()
            .expect("bundled human hand is valid");
        let names = ["thumb", "index", "middle", "ring", "little"];
        let fingers = names
            .iter()
            .map(|name| {
                let idx = |k: usize| {
                    model
                        .joints()
                        .iter()
                        .position(|j| j.name == format!("{name}_j{k}"))
                        .expect("finger joint exists")
                };
                let j = [idx(0), idx(1)];
                let root_link = model.joints()[j[0]].child;
                let distal = model.joints()[j[1]].child;
                let root = model.links()[root_link].offset.position;
                let l1 = -model.links()[distal].offset.position.z;
                let tip = model
                    .fingertips()
                    .iter()
                    .find(|s| s.link == distal)
                    .expect("tip site");
                let l2 = -tip.position.z;
                let side = if root.y < 0.0 { 1.0 } else { -1.0 };
                (j, root, [l1, l2], side)
            })
            .collect();
        Self { model, fingers }
    }

    /// Finger joints reaching the cube faces `pad` off the surface, with the
    /// palm `PALM_CLEARANCE` above the cube top.
    fn grip(&self, pad: f64) -> Vec<[f64; 2]> {
        let palm_z = CUBE_SIDE + PALM_CLEARANCE;
        self.fingers
            .iter()
            .map(|(_, root, [l1, l2], side)| {
                let face_y = -side * (CUBE_SIDE / 2.0 + pad);
                let inward = side * (face_y - root.y);
                finger_ik(*l1, *l2, inward, palm_z - TIP_HEIGHT)
            })
            .collect()
    }

    fn open(&self) -> Vec<[f64; 2]> {
        vec![[-0.45, 0.25]; self.fingers.len()]
    }

    fn hand(&self, wrist: &Pose, fingers: &[[f64; 2]]) -> HumanHand {
        let mut q = vec![0.0; self.model.dof()];
        let w = self
            .model
            .wrist_joints(wrist, &[0.0; WRIST_DOF])
            .expect("floating hand");
        q[..WRIST_DOF].copy_from_slice(&w);
        for ((j, ..), a) in self.fingers.iter().zip(fingers) {
            q[j[0]] = a[0];
            q[j[1]] = a[1];
        }
        let fk = self
            .model
            .forward_kinematics(&q)
            .expect("dimension matches");
        let mut tips = [Vec3::zeros(); HUMAN_FINGERS];
        for (h, r) in self.model.correspondence() {
            tips[h] = fk.fingertips[r];
        }
        HumanHand {
            fingertips: tips,
            palm_normal: self
                .model
                .palm_normal(&fk.palm_sites)
                .expect("palm is not degenerate"),
        }
    }
}

fn lerp_fingers(a: &[[f64; 2]], b: &[[f64; 2]], s: f64) -> Vec<[f64; 2]> {
    a.iter()
        .zip(b)
        .map(|(x, y)| [x[0] + (y[0] - x[0]) * s, x[1] + (y[1] - x[1]) * s])
        .collect()
}

/// Grasps the cube and applies `motion(s)` for `s` in `[0, 1]`: a
/// displacement and a rotation about the cube center.
pub fn grasp_and_move(motion: impl Fn(f64) -> (Vec3, Rotation)) -> DemoSequence {
    let rig = HumanRig::new();
    let object0 = Pose::from_translation(Vec3::new(0.0, 0.0, CUBE_SIDE / 2.0));
    let wrist_grasp = Pose::from_translation(Vec3::new(0.0, 0.0, CUBE_SIDE + PALM_CLEARANCE));
    let wrist_start = Pose::from_translation(wrist_grasp.position + Vec3::z() * APPROACH_HEIGHT);
    let open = rig.open();
    let tight = rig.grip(PAD);
    let settled = rig.grip(PAD_SETTLED);
    let mut frames = Vec::new();
    for t in 0..REACH {
        let s = blend(t as f64 / (REACH - 1) as f64);
        let wrist = wrist_start.interpolate(&wrist_grasp, s);
        frames.push(DemoFrame {
            hand: rig.hand(&wrist, &open),
            object: object0,
        });
    }
    for t in 1..=CLOSE {
        let s = blend(t as f64 / CLOSE as f64);
        frames.push(DemoFrame {
            hand: rig.hand(&wrist_grasp, &lerp_fingers(&open, &tight, s)),
            object: object0,
        });
    }
    for t in 1..=SETTLE {
        let s = blend(t as f64 / SETTLE as f64);
        frames.push(DemoFrame {
            hand: rig.hand(&wrist_grasp, &lerp_fingers(&tight, &settled, s)),
            object: object0,
        });
    }
    let attach = object0.inverse().compose(&wrist_grasp);
    for t in 1..=MOVE + HOLD {
        let s = blend(t as f64 / MOVE as f64);
        let (d, r) = motion(s);
        let object = Pose::new(object0.position + d, r * object0.rotation);
        frames.push(DemoFrame {
            hand: rig.hand(&object.compose(&attach), &settled),
            object,
        });
    }
    DemoSequence::new(FPS, frames, cube()).expect("scripted demo is valid")
}

/// Lift the cube 0.15 m straight up.
pub fn lift_box() -> DemoSequence {
    grasp_and_move(|s| (Vec3::z() * 0.15 * s, Rotation::identity()))
}

/// Lift the cube 0.12 m while turning it a quarter turn about the vertical.
pub fn lift_turn() -> DemoSequence {
    grasp_and_move(|s| (Vec3::z() * 0.12 * s, Rotation::rot_z(0.5 * PI * s)))
}

/// Lift the cube 0.12 m while tilting it 30° about the world x axis.
pub fn lift_tilt() -> DemoSequence {
    grasp_and_move(|s| {
        let lift = (2.0 * s).min(1.0);
        let tilt = (2.0 * s - 1.0).max(0.0);
        (Vec3::z() * 0.12 * lift, Rotation::rot_x(PI / 6.0 * tilt))
    })
}

/// Names and builders of the bundled demonstrations.
pub fn bundled_demos() -> Vec<(&'static str, DemoSequence)> {
    vec![
        ("lift_box", lift_box()),
        ("lift_turn", lift_turn()),
        ("lift_tilt", lift_tilt()),
    ]
}

//! Bundled hand descriptions, built programmatically.
//!
//! Every hand shares one layout: the palm lies in the root link's `z = 0`
//! plane, fingers hang along `-z`, the thumb sits on the `-y` side and the
//! other fingers on the `+y` side. Positive flexion closes a finger toward
//! the opposite side, and the palm normal points along `-z`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::geom::Pose;
use crate::hand::file::{FloatingBaseFile, JointFile, LinkFile, SiteFile};
use crate::hand::{HandFile, JointKind, Primitive};

const FLEX: [f64; 2] = [-0.8, 1.6];
const ABD: [f64; 2] = [-0.4, 0.4];

/// One joint of a finger followed by the link it moves.
#[derive(Clone, Copy)]
struct Segment {
    axis: [f64; 3],
    limits: [f64; 2],
    /// Length of the moved link along `-z`; zero for co-located joints.
    length: f64,
    radius: f64,
    mass: f64,
}

struct Finger {
    name: &'static str,
    root: [f64; 3],
    segments: Vec<Segment>,
    human: Option<usize>,
}

fn flex(side: f64, length: f64, radius: f64) -> Segment {
    Segment {
        axis: [side, 0.0, 0.0],
        limits: FLEX,
        length,
        radius,
        mass: 0.6 * length,
    }
}

fn abduct() -> Segment {
    Segment {
        axis: [0.0, 1.0, 0.0],
        limits: ABD,
        length: 0.0,
        radius: 0.0,
        mass: 0.0,
    }
}

struct HandShape {
    name: &'static str,
    palm_half: [f64; 3],
    palm_mass: f64,
    palm_sites: [[f64; 3]; 3],
    fingers: Vec<Finger>,
}

fn build(shape: HandShape) -> HandFile {
    let [hx, hy, hz] = shape.palm_half;
    let palm = LinkFile {
        name: "palm".into(),
        offset: Pose::identity(),
        collision: vec![
            Primitive::Capsule {
                a: [-hx, -hy * 0.5, hz],
                b: [hx, -hy * 0.5, hz],
                radius: hz,
            },
            Primitive::Capsule {
                a: [-hx, hy * 0.5, hz],
                b: [hx, hy * 0.5, hz],
                radius: hz,
            },
        ],
        mass: shape.palm_mass,
        com: [0.0, 0.0, hz],
    };
    let mut links = vec![palm];
    let mut joints = Vec::new();
    let mut tips = Vec::new();
    let mut correspondence = BTreeMap::new();
    for finger in &shape.fingers {
        let mut parent = "palm".to_string();
        let mut offset = finger.root;
        for (k, seg) in finger.segments.iter().enumerate() {
            let link = format!("{}_{}", finger.name, k);
            let collision = if seg.length > 0.0 {
                vec![Primitive::Capsule {
                    a: [0.0, 0.0, 0.0],
                    b: [0.0, 0.0, -seg.length],
                    radius: seg.radius,
                }]
            } else {
                Vec::new()
            };
            links.push(LinkFile {
                name: link.clone(),
                offset: Pose::from_translation(offset.into()),
                collision,
                mass: seg.mass,
                com: [0.0, 0.0, -0.5 * seg.length],
            });
            joints.push(JointFile {
                name: format!("{}_j{}", finger.name, k),
                kind: JointKind::Revolute,
                axis: seg.axis,
                parent,
                child: link.clone(),
                limits: seg.limits,
            });
            parent = link;
            offset = [0.0, 0.0, -seg.length];
        }
        let tip = format!("{}_tip", finger.name);
        tips.push(SiteFile {
            name: tip.clone(),
            link: parent,
            position: offset,
        });
        if let Some(h) = finger.human {
            correspondence.insert(h.to_string(), tip);
        }
    }
    let site = |name: &str, p: [f64; 3]| SiteFile {
        name: name.into(),
        link: "palm".into(),
        position: p,
    };
    HandFile {
        name: shape.name.into(),
        floating_base: Some(FloatingBaseFile {
            limits: [
                [-1.0, 1.0],
                [-1.0, 1.0],
                [-0.2, 1.5],
                [-2.0 * PI, 2.0 * PI],
                [-PI, PI],
                [-2.0 * PI, 2.0 * PI],
            ],
        }),
        palm_normal_sign: -1.0,
        links,
        joints,
        fingertip_sites: tips,
        palm_sites: [
            site("index_mcp", shape.palm_sites[0]),
            site("ring_mcp", shape.palm_sites[1]),
            site("wrist", shape.palm_sites[2]),
        ],
        correspondence,
    }
}

/// Three-finger gripper-like hand used by fast tests: `D = 12`.
pub fn toy3() -> HandFile {
    build(HandShape {
        name: "toy3",
        palm_half: [0.035, 0.045, 0.01],
        palm_mass: 0.3,
        palm_sites: [[0.02, 0.045, 0.0], [-0.02, 0.045, 0.0], [0.05, 0.0, 0.0]],
        fingers: vec![
            Finger {
                name: "thumb",
                root: [0.0, -0.045, 0.0],
                segments: vec![flex(1.0, 0.05, 0.008), flex(1.0, 0.04, 0.006)],
                human: Some(0),
            },
            Finger {
                name: "index",
                root: [0.02, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.05, 0.008), flex(-1.0, 0.04, 0.006)],
                human: Some(1),
            },
            Finger {
                name: "middle",
                root: [-0.02, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.05, 0.008), flex(-1.0, 0.04, 0.006)],
                human: Some(2),
            },
        ],
    })
}

/// Four-finger hand with an Allegro-like joint budget: `D = 16`.
pub fn allegro_like() -> HandFile {
    let r = 0.012;
    build(HandShape {
        name: "allegro_like",
        palm_half: [0.05, 0.045, 0.012],
        palm_mass: 0.4,
        palm_sites: [[0.04, 0.045, 0.0], [-0.04, 0.045, 0.0], [0.08, 0.0, 0.0]],
        fingers: vec![
            Finger {
                name: "thumb",
                root: [0.02, -0.045, 0.0],
                segments: vec![
                    abduct(),
                    flex(1.0, 0.0, r),
                    flex(1.0, 0.055, r),
                    flex(1.0, 0.05, r),
                ],
                human: Some(0),
            },
            Finger {
                name: "index",
                root: [0.04, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.055, r), flex(-1.0, 0.05, r)],
                human: Some(1),
            },
            Finger {
                name: "middle",
                root: [0.0, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.055, r), flex(-1.0, 0.05, r)],
                human: Some(2),
            },
            Finger {
                name: "ring",
                root: [-0.04, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.055, r), flex(-1.0, 0.05, r)],
                human: Some(3),
            },
        ],
    })
}

/// Four-finger hand with a Leap-like joint budget: `D = 16`.
pub fn leap_like() -> HandFile {
    let r = 0.011;
    build(HandShape {
        name: "leap_like",
        palm_half: [0.048, 0.04, 0.012],
        palm_mass: 0.35,
        palm_sites: [[0.038, 0.04, 0.0], [-0.038, 0.04, 0.0], [0.075, 0.0, 0.0]],
        fingers: vec![
            Finger {
                name: "thumb",
                root: [0.01, -0.04, 0.0],
                segments: vec![flex(1.0, 0.03, r), flex(1.0, 0.045, r), flex(1.0, 0.04, r)],
                human: Some(0),
            },
            Finger {
                name: "index",
                root: [0.038, 0.04, 0.0],
                segments: vec![abduct(), flex(-1.0, 0.05, r), flex(-1.0, 0.045, r)],
                human: Some(1),
            },
            Finger {
                name: "middle",
                root: [0.0, 0.04, 0.0],
                segments: vec![flex(-1.0, 0.05, r), flex(-1.0, 0.045, r)],
                human: Some(2),
            },
            Finger {
                name: "ring",
                root: [-0.038, 0.04, 0.0],
                segments: vec![flex(-1.0, 0.05, r), flex(-1.0, 0.045, r)],
                human: Some(3),
            },
        ],
    })
}

/// Five-finger anthropomorphic hand with an Adroit-like joint budget: `D = 24`.
pub fn adroit_like() -> HandFile {
    let r = 0.009;
    build(HandShape {
        name: "adroit_like",
        palm_half: [0.045, 0.04, 0.01],
        palm_mass: 0.3,
        palm_sites: [[0.033, 0.04, 0.0], [-0.011, 0.04, 0.0], [0.07, 0.0, 0.0]],
        fingers: vec![
            Finger {
                name: "thumb",
                root: [0.02, -0.04, 0.0],
                segments: vec![
                    abduct(),
                    flex(1.0, 0.03, r),
                    abduct(),
                    flex(1.0, 0.035, r),
                    flex(1.0, 0.03, r),
                ],
                human: Some(0),
            },
            Finger {
                name: "index",
                root: [0.033, 0.04, 0.0],
                segments: vec![
                    flex(-1.0, 0.04, r),
                    flex(-1.0, 0.025, r),
                    flex(-1.0, 0.02, r),
                ],
                human: Some(1),
            },
            Finger {
                name: "middle",
                root: [0.011, 0.04, 0.0],
                segments: vec![
                    flex(-1.0, 0.045, r),
                    flex(-1.0, 0.027, r),
                    flex(-1.0, 0.02, r),
                ],
                human: Some(2),
            },
            Finger {
                name: "ring",
                root: [-0.011, 0.04, 0.0],
                segments: vec![
                    flex(-1.0, 0.042, r),
                    flex(-1.0, 0.025, r),
                    flex(-1.0, 0.02, r),
                ],
                human: Some(3),
            },
            Finger {
                name: "little",
                root: [-0.033, 0.035, 0.0],
                segments: vec![
                    abduct(),
                    flex(-1.0, 0.035, r),
                    flex(-1.0, 0.02, r),
                    flex(-1.0, 0.018, r),
                ],
                human: Some(4),
            },
        ],
    })
}

/// Human-proportioned reference hand used to synthesize demonstrations.
/// Not a robot: it only provides a consistent human keypoint layout.
pub fn human_reference() -> HandFile {
    let r = 0.008;
    build(HandShape {
        name: "human_reference",
        palm_half: [0.045, 0.045, 0.01],
        palm_mass: 0.0,
        palm_sites: [[0.02, 0.045, 0.0], [-0.025, 0.045, 0.0], [0.06, 0.0, 0.0]],
        fingers: vec![
            Finger {
                name: "thumb",
                root: [0.0, -0.045, 0.0],
                segments: vec![flex(1.0, 0.045, r), flex(1.0, 0.035, r)],
                human: Some(0),
            },
            Finger {
                name: "index",
                root: [0.02, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.045, r), flex(-1.0, 0.035, r)],
                human: Some(1),
            },
            Finger {
                name: "middle",
                root: [-0.02, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.045, r), flex(-1.0, 0.035, r)],
                human: Some(2),
            },
            Finger {
                name: "ring",
                root: [-0.045, 0.045, 0.0],
                segments: vec![flex(-1.0, 0.045, r), flex(-1.0, 0.035, r)],
                human: Some(3),
            },
            Finger {
                name: "little",
                root: [-0.065, 0.04, 0.0],
                segments: vec![flex(-1.0, 0.04, r), flex(-1.0, 0.03, r)],
                human: Some(4),
            },
        ],
    })
}

/// Names and builders of the bundled robot hands.
pub fn bundled_hands() -> Vec<(&'static str, HandFile)> {
    vec![
        ("toy3", toy3()),
        ("allegro_like", allegro_like()),
        ("leap_like", leap_like()),
        ("adroit_like", adroit_like()),
    ]
}

//! Demonstration files: human fingertip/palm trajectories with the object
//! pose per frame, plus contact extraction.

mod object;

pub use object::{ObjectGeometry, SurfacePoint};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{HullError, Pose, Rotation, Vec3};
use crate::hand::HUMAN_FINGERS;

/// Length of a human hand frame: five fingertip positions and the palm normal.
pub const HAND_DIM: usize = 3 * HUMAN_FINGERS + 3;
/// Fingertip-to-surface distance below which a fingertip is in contact.
pub const CONTACT_THRESHOLD: f64 = 0.05;
/// Default fraction of the bounding-box height by which the center of mass is lowered.
pub const DEFAULT_COM_LOWERING: f64 = 0.2;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("failed to access demo file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed demo file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("frame {frame}: {reason}")]
    Frame { frame: usize, reason: String },
    #[error("demo needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("fps must be finite and positive, got {0}")]
    Fps(f64),
    #[error("object geometry: {0}")]
    Geometry(String),
    #[error("object piece {piece}: {source}")]
    Piece { piece: usize, source: HullError },
    #[error("grasp frame {frame} out of range for horizon {horizon}")]
    FrameOutOfRange { frame: usize, horizon: usize },
    #[error(
        "only {found} fingertip(s) within {threshold} m of the object; at least 2 are required"
    )]
    InsufficientContacts { found: usize, threshold: f64 },
}

/// Human hand state `h_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanHand {
    pub fingertips: [Vec3; HUMAN_FINGERS],
    pub palm_normal: Vec3,
}

impl HumanHand {
    pub fn from_slice(h: &[f64]) -> Self {
        let v = |i: usize| Vec3::new(h[3 * i], h[3 * i + 1], h[3 * i + 2]);
        Self {
            fingertips: std::array::from_fn(v),
            palm_normal: v(HUMAN_FINGERS),
        }
    }

    pub fn to_array(&self) -> [f64; HAND_DIM] {
        let mut out = [0.0; HAND_DIM];
        for (i, p) in self
            .fingertips
            .iter()
            .chain(std::iter::once(&self.palm_normal))
            .enumerate()
        {
            out[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
        out
    }

    /// Same hand expressed after applying `t` to the world.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            fingertips: self.fingertips.map(|p| t.transform_point(&p)),
            palm_normal: t.transform_vector(&self.palm_normal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoFrame {
    pub hand: HumanHand,
    pub object: Pose,
}

/// A validated human demonstration.
#[derive(Debug, Clone)]
pub struct DemoSequence {
    fps: f64,
    frames: Vec<DemoFrame>,
    object: ObjectGeometry,
}

/// Contact points on the object surface, in the object frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub points: Vec<[f64; 3]>,
    /// Human finger that produced each point.
    pub finger_ids: Vec<usize>,
    pub grasp_frame: usize,
}

impl ContactSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Raw file layout. A `null` number reaches validation with its frame index.
#[derive(Serialize, Deserialize)]
struct RawPose {
    pos: Vec<Option<f64>>,
    quat: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    hand: Vec<Option<f64>>,
    object: RawPose,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    pieces: Vec<Vec<[f64; 3]>>,
    com: [f64; 3],
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDemo {
    fps: f64,
    frames: Vec<RawFrame>,
    object_geometry: RawGeometry,
}

fn finite(
    values: &[Option<f64>],
    frame: usize,
    what: &str,
    len: usize,
) -> Result<Vec<f64>, DemoError> {
    if values.len() != len {
        return Err(DemoError::Frame {
            frame,
            reason: format!("{what} has {} values, expected {len}", values.len()),
        });
    }
    values
        .iter()
        .map(|v| v.filter(|x| x.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| DemoError::Frame {
            frame,
            reason: format!("{what} contains a non-finite value"),
        })
}

impl DemoSequence {
    pub fn new(
        fps: f64,
        frames: Vec<DemoFrame>,
        object: ObjectGeometry,
    ) -> Result<Self, DemoError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(DemoError::Fps(fps));
        }
        if frames.len() < 2 {
            return Err(DemoError::TooShort(frames.len()));
        }
        for (t, f) in frames.iter().enumerate() {
            let hand_ok = f.hand.to_array().iter().all(|v| v.is_finite());
            if !hand_ok {
                return Err(DemoError::Frame {
                    frame: t,
                    reason: "hand contains a non-finite value".into(),
                });
            }
            if !f.object.is_finite() {
                return Err(DemoError::Frame {
                    frame: t,
                    reason: "object pose contains a non-finite value".into(),
                });
            }
        }
        Ok(Self {
            fps,
            frames,
            object,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DemoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DemoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DemoError> {
        let raw: RawDemo = serde_json::from_str(text)?;
        let mut frames = Vec::with_capacity(raw.frames.len());
        for (t, f) in raw.frames.iter().enumerate() {
            let hand = finite(&f.hand, t, "hand", HAND_DIM)?;
            let pos = finite(&f.object.pos, t, "object position", 3)?;
            let quat = finite(&f.object.quat, t, "object quaternion", 4)?;
            let rotation =
                Rotation::from_wxyz([quat[0], quat[1], quat[2], quat[3]]).ok_or_else(|| {
                    DemoError::Frame {
                        frame: t,
                        reason: "object quaternion is zero".into(),
                    }
                })?;
            frames.push(DemoFrame {
                hand: HumanHand::from_slice(&hand),
                object: Pose::new(Vec3::new(pos[0], pos[1], pos[2]), rotation),
            });
        }
        let g = raw.object_geometry;
        let pieces = g
            .pieces
            .iter()
            .map(|p| p.iter().map(|v| Vec3::from(*v)).collect())
            .collect();
        let object = ObjectGeometry::new(pieces, Vec3::from(g.com), g.mass)?;
        Self::new(raw.fps, frames, object)
    }

    pub fn to_json(&self) -> String {
        let raw = RawDemo {
            fps: self.fps,
            frames: self
                .frames
                .iter()
                .map(|f| RawFrame {
                    hand: f.hand.to_array().iter().map(|v| Some(*v)).collect(),
                    object: RawPose {
                        pos: f.object.position.iter().map(|v| Some(*v)).collect(),
                        quat: f.object.rotation.wxyz().iter().map(|v| Some(*v)).collect(),
                    },
                })
                .collect(),
            object_geometry: RawGeometry {
                pieces: self
                    .object
                    .pieces()
                    .iter()
                    .map(|h| h.points().iter().map(|p| [p.x, p.y, p.z]).collect())
                    .collect(),
                com: self.object.com().into(),
                mass: self.object.mass(),
            },
        };
        serde_json::to_string(&raw).expect("demo serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DemoError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| DemoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Number of frames `T`.
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[DemoFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &DemoFrame {
        &self.frames[t]
    }

    pub fn object(&self) -> &ObjectGeometry {
        &self.object
    }

    /// Copy with replaced object geometry.
    pub fn with_object(&self, object: ObjectGeometry) -> Self {
        Self {
            object,
            ..self.clone()
        }
    }

    pub fn object_poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.object).collect()
    }

    /// Sum over fingertips of the distance to the object surface at frame `t`.
    pub fn fingertip_distance_sum(&self, t: usize) -> f64 {
        let f = &self.frames[t];
        let inv = f.object.inverse();
        f.hand
            .fingertips
            .iter()
            .map(|p| {
                self.object
                    .surface_query(&inv.transform_point(p))
                    .distance
                    .abs()
            })
            .sum()
    }

    /// Frame minimizing the summed fingertip-object distance (first on ties).
    pub fn default_grasp_frame(&self) -> usize {
        let mut best = (f64::INFINITY, 0);
        for t in 0..self.horizon() {
            let d = self.fingertip_distance_sum(t);
            if d < best.0 {
                best = (d, t);
            }
        }
        best.1
    }

    /// Contact points of the fingertips within the contact threshold at `grasp_frame`.
    pub fn extract_contacts(&self, grasp_frame: usize) -> Result<ContactSet, DemoError> {
        if grasp_frame >= self.horizon() {
            return Err(DemoError::FrameOutOfRange {
                frame: grasp_frame,
                horizon: self.horizon(),
            });
        }
        let f = &self.frames[grasp_frame];
        let inv = f.object.inverse();
        let mut points = Vec::new();
        let mut finger_ids = Vec::new();
        for (i, tip) in f.hand.fingertips.iter().enumerate() {
            let s = self.object.surface_query(&inv.transform_point(tip));
            if s.distance.abs() < CONTACT_THRESHOLD {
                points.push(s.point.into());
                finger_ids.push(i);
            }
        }
        if points.len() < 2 {
            return Err(DemoError::InsufficientContacts {
                found: points.len(),
                threshold: CONTACT_THRESHOLD,
            });
        }
        Ok(ContactSet {
            points,
            finger_ids,
            grasp_frame,
        })
    }
}

/// Validates the convex pieces and lowers the center of mass by `lambda`
/// times the bounding-box height.
pub fn preprocess_object(
    pieces: Vec<Vec<Vec3>>,
    com: Vec3,
    mass: f64,
    lambda: f64,
) -> Result<ObjectGeometry, DemoError> {
    ObjectGeometry::new(pieces, com, mass)?.with_lowered_com(lambda)
}

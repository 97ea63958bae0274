//! Rigid-body math shared by every stage.

mod gjk;
mod hull;

pub use gjk::{closest_points, ClosestPoints, SupportMap};
pub use hull::{ConvexHull, HullError, Plane};

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// A 3D rotation stored as a unit quaternion.
///
/// Equality is rotation equality: `q` and `-q` compare equal.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from `(w, x, y, z)`, normalizing it unless it is
    /// already unit to machine precision (so stored values round-trip).
    ///
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(q: [f64; 4]) -> Option<Self> {
        if q.iter().any(|c| !c.is_finite()) {
            return None;
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if norm < 1e-12 {
            return None;
        }
        if (norm - 1.0).abs() <= 1e-15 {
            return Some(Self(UnitQuaternion::new_unchecked(quat)));
        }
        Some(Self(UnitQuaternion::new_unchecked(quat / norm)))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, 1e-15) {
            Some(axis) => Self(UnitQuaternion::from_axis_angle(&axis, angle)),
            None => Self::identity(),
        }
    }

    /// Rotation whose axis-angle vector is `v` (angle = |v|).
    pub fn from_scaled_axis(v: &Vec3) -> Self {
        Self(UnitQuaternion::from_scaled_axis(*v))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    /// Intrinsic X-Y-Z Euler composition `Rx(a) * Ry(b) * Rz(c)`.
    pub fn from_euler_xyz(a: f64, b: f64, c: f64) -> Self {
        Self::rot_x(a) * Self::rot_y(b) * Self::rot_z(c)
    }

    /// Inverse of [`Rotation::from_euler_xyz`], with `b` in `[-pi/2, pi/2]`.
    pub fn euler_xyz(&self) -> (f64, f64, f64) {
        let m = self.to_matrix();
        // R = Rx Ry Rz: m[(0,2)] = sin b, m[(1,2)] = -sin a cos b, m[(2,2)] = cos a cos b,
        // m[(0,1)] = -cos b sin c, m[(0,0)] = cos b cos c.
        let sb = m[(0, 2)].clamp(-1.0, 1.0);
        let b = sb.asin();
        if sb.abs() < 1.0 - 1e-12 {
            let a = (-m[(1, 2)]).atan2(m[(2, 2)]);
            let c = (-m[(0, 1)]).atan2(m[(0, 0)]);
            (a, b, c)
        } else {
            // Gimbal lock: only a +/- c is determined; put everything into a.
            let a = m[(2, 1)].atan2(m[(1, 1)]);
            (a, b, 0.0)
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    /// Axis-angle vector of the rotation (shortest representative).
    pub fn scaled_axis(&self) -> Vec3 {
        let q = self.0.quaternion();
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let s = v.norm();
        if s < 1e-300 {
            return Vec3::zeros();
        }
        v * (2.0 * s.atan2(w) / s)
    }

    /// Spherical interpolation along the shortest arc.
    pub fn slerp(&self, other: &Rotation, t: f64) -> Rotation {
        let delta = self.inverse() * *other;
        *self * Rotation::from_scaled_axis(&(delta.scaled_axis() * t))
    }

    pub fn as_unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl PartialEq for Rotation {
    fn eq(&self, other: &Self) -> bool {
        let a = self.0.coords;
        let b = other.0.coords;
        a == b || a == -b
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        let q = self.0.quaternion() * rhs.0.quaternion();
        Rotation(UnitQuaternion::new_normalize(q))
    }
}

impl From<UnitQuaternion<f64>> for Rotation {
    fn from(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wxyz().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let q = <[f64; 4]>::deserialize(d)?;
        Rotation::from_wxyz(q)
            .ok_or_else(|| serde::de::Error::custom("quaternion must be finite and non-zero"))
    }
}

/// Angle between the rotations, in radians within `[0, pi]`.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    let [w1, x1, y1, z1] = a.wxyz();
    let [w2, x2, y2, z2] = b.wxyz();
    // Relative rotation a⁻¹b, expanded so identical inputs cancel exactly.
    let w = w1 * w2 + x1 * x2 + y1 * y2 + z1 * z2;
    let v = Vec3::new(
        (w1 * x2 - w2 * x1) - (y1 * z2 - z1 * y2),
        (w1 * y2 - w2 * y1) - (z1 * x2 - x1 * z2),
        (w1 * z2 - w2 * z1) - (x1 * y2 - y1 * x2),
    );
    2.0 * v.norm().atan2(w.abs())
}

/// Great-circle angle between two directions, in `[0, pi]`.
pub fn direction_angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Rotation,
}

impl Pose {
    pub fn new(position: Vec3, rotation: Rotation) -> Self {
        Self { position, rotation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, Rotation::identity())
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Self::new(Vec3::zeros(), rotation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation.rotate(&other.position),
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            position: -inv.rotate(&self.position),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.rotation.rotate(p)
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.to_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Linear interpolation of position with slerp of orientation.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        Pose {
            position: self.position + (other.position - self.position) * t,
            rotation: self.rotation.slerp(&other.rotation, t),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.rotation.wxyz().iter().all(|c| c.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// On-disk pose layout: `{"pos": [x, y, z], "quat": [w, x, y, z]}`.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    pos: [f64; 3],
    quat: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            pos: self.position.into(),
            quat: self.rotation.wxyz(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let rotation = Rotation::from_wxyz(repr.quat)
            .ok_or_else(|| serde::de::Error::custom("quaternion must be finite and non-zero"))?;
        Ok(Pose::new(Vec3::from(repr.pos), rotation))
    }
}

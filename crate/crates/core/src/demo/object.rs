use crate::geom::{closest_points, ClosestPoints, ConvexHull, Vec3};

use super::DemoError;

/// Object collision geometry in the object frame.
#[derive(Debug, Clone)]
pub struct ObjectGeometry {
    pieces: Vec<ConvexHull>,
    com: Vec3,
    mass: f64,
}

/// Closest surface point and signed distance (negative inside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub distance: f64,
    pub point: Vec3,
}

impl ObjectGeometry {
    pub fn new(pieces: Vec<Vec<Vec3>>, com: Vec3, mass: f64) -> Result<Self, DemoError> {
        if pieces.is_empty() {
            return Err(DemoError::Geometry("object has no convex pieces".into()));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(DemoError::Geometry(format!(
                "mass must be positive, got {mass}"
            )));
        }
        if !com.iter().all(|c| c.is_finite()) {
            return Err(DemoError::Geometry("center of mass is not finite".into()));
        }
        let hulls = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let hull =
                    ConvexHull::new(p).map_err(|source| DemoError::Piece { piece: i, source })?;
                if let Some(v) = p.iter().find(|v| !hull.contains(v, 1e-9)) {
                    return Err(DemoError::Geometry(format!(
                        "piece {i}: vertex {v:?} lies outside its hull"
                    )));
                }
                Ok(hull)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            pieces: hulls,
            com,
            mass,
        })
    }

    pub fn pieces(&self) -> &[ConvexHull] {
        &self.pieces
    }

    pub fn com(&self) -> Vec3 {
        self.com
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn with_com(&self, com: Vec3) -> Self {
        Self {
            com,
            ..self.clone()
        }
    }

    /// Copy with the center of mass lowered by `lambda` times the
    /// bounding-box height.
    pub fn with_lowered_com(&self, lambda: f64) -> Result<Self, DemoError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(DemoError::Geometry(format!(
                "com lowering fraction must lie in [0, 1], got {lambda}"
            )));
        }
        let (lo, hi) = self.bounds();
        Ok(self.with_com(self.com - Vec3::z() * (lambda * (hi.z - lo.z))))
    }

    pub fn with_mass(&self, mass: f64) -> Self {
        Self {
            mass,
            ..self.clone()
        }
    }

    /// Axis-aligned bounds over all pieces.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.pieces.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), h| {
                let (l, u) = h.bounds();
                (lo.inf(&l), hi.sup(&u))
            },
        )
    }

    /// Closest point on the union of the pieces to `p` (object frame).
    pub fn surface_query(&self, p: &Vec3) -> SurfacePoint {
        let mut best = SurfacePoint {
            distance: f64::INFINITY,
            point: *p,
        };
        for hull in &self.pieces {
            let s = piece_query(hull, p);
            if s.distance < best.distance {
                best = s;
            }
        }
        best
    }
}

fn piece_query(hull: &ConvexHull, p: &Vec3) -> SurfacePoint {
    match closest_points(hull, p) {
        ClosestPoints::Separated { distance, on_a, .. } => SurfacePoint {
            distance,
            point: on_a,
        },
        ClosestPoints::Intersecting => {
            let (d, face) = hull.max_plane_distance(p);
            let plane = hull.planes()[face];
            SurfacePoint {
                distance: d.min(0.0),
                point: p - plane.normal * d,
            }
        }
    }
}

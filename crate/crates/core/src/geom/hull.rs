use thiserror::Error;

use super::gjk::SupportMap;
use super::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HullError {
    #[error("convex piece needs at least 4 vertices, got {0}")]
    TooFewPoints(usize),
    #[error("convex piece contains non-finite coordinates")]
    NonFinite,
    #[error("convex piece is degenerate (all vertices {0})")]
    Degenerate(&'static str),
}

/// Half-space `normal · x <= offset`, with unit outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Convex hull of a point set, kept as outward triangles plus their planes.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    points: Vec<Vec3>,
    extreme: Vec<usize>,
    faces: Vec<[usize; 3]>,
    planes: Vec<Plane>,
}

impl ConvexHull {
    /// Incremental hull construction.
    pub fn new(points: &[Vec3]) -> Result<Self, HullError> {
        if points.len() < 4 {
            return Err(HullError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(HullError::NonFinite);
        }
        let extent = points
            .iter()
            .map(|p| (p - points[0]).norm())
            .fold(0.0, f64::max);
        let eps = 1e-11 * extent.max(1e-3);

        // Initial tetrahedron from well-separated points.
        let i0 = 0;
        let i1 = argmax(points, |p| (p - points[i0]).norm_squared());
        let dir = points[i1] - points[i0];
        if dir.norm() <= eps {
            return Err(HullError::Degenerate("coincident"));
        }
        let i2 = argmax(points, |p| dir.cross(&(p - points[i0])).norm_squared());
        let n = dir.cross(&(points[i2] - points[i0]));
        if n.norm() <= eps * dir.norm() {
            return Err(HullError::Degenerate("collinear"));
        }
        let n = n.normalize();
        let i3 = argmax(points, |p| n.dot(&(p - points[i0])).abs());
        if n.dot(&(points[i3] - points[i0])).abs() <= eps {
            return Err(HullError::Degenerate("coplanar"));
        }

        let inside = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
        let mut faces: Vec<[usize; 3]> = Vec::new();
        for f in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            faces.push(orient_outward(points, f, &inside));
        }
        let mut planes: Vec<Plane> = faces.iter().map(|f| face_plane(points, f)).collect();

        for (idx, p) in points.iter().enumerate() {
            if [i0, i1, i2, i3].contains(&idx) {
                continue;
            }
            let visible: Vec<bool> = planes
                .iter()
                .map(|pl| pl.signed_distance(p) > eps)
                .collect();
            if !visible.iter().any(|&v| v) {
                continue;
            }
            let mut edges: Vec<(usize, usize)> = Vec::new();
            for (f, vis) in faces.iter().zip(&visible) {
                if *vis {
                    edges.extend([(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]);
                }
            }
            let horizon: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|&(a, b)| !edges.contains(&(b, a)))
                .collect();
            let mut kept_faces = Vec::with_capacity(faces.len());
            let mut kept_planes = Vec::with_capacity(faces.len());
            for ((f, pl), vis) in faces.iter().zip(&planes).zip(&visible) {
                if !*vis {
                    kept_faces.push(*f);
                    kept_planes.push(*pl);
                }
            }
            for (a, b) in horizon {
                let f = [a, b, idx];
                kept_planes.push(face_plane(points, &f));
                kept_faces.push(f);
            }
            faces = kept_faces;
            planes = kept_planes;
        }

        let mut extreme: Vec<usize> = faces.iter().flatten().copied().collect();
        extreme.sort_unstable();
        extreme.dedup();

        Ok(Self {
            points: points.to_vec(),
            extreme,
            faces,
            planes,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    /// Indices of input points that are hull vertices.
    pub fn extreme_points(&self) -> impl Iterator<Item = &Vec3> {
        self.extreme.iter().map(|&i| &self.points[i])
    }

    /// Largest plane violation; `<= 0` inside, and equals minus the depth
    /// to the boundary for interior points.
    pub fn max_plane_distance(&self, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, pl) in self.planes.iter().enumerate() {
            let d = pl.signed_distance(p);
            if d > best.0 {
                best = (d, i);
            }
        }
        best
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.max_plane_distance(p).0 <= tol
    }

    pub fn volume(&self) -> f64 {
        let c = self.points[self.extreme[0]];
        self.faces
            .iter()
            .map(|f| {
                let (a, b, d) = (
                    self.points[f[0]] - c,
                    self.points[f[1]] - c,
                    self.points[f[2]] - c,
                );
                a.dot(&b.cross(&d)) / 6.0
            })
            .sum()
    }

    /// Axis-aligned bounds of the hull vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in self.extreme_points() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

impl SupportMap for ConvexHull {
    fn support(&self, dir: &Vec3) -> Vec3 {
        let mut best = self.points[self.extreme[0]];
        let mut best_dot = best.dot(dir);
        for &i in &self.extreme[1..] {
            let d = self.points[i].dot(dir);
            if d > best_dot {
                best_dot = d;
                best = self.points[i];
            }
        }
        best
    }
}

fn argmax(points: &[Vec3], score: impl Fn(&Vec3) -> f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let s = score(p);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

fn orient_outward(points: &[Vec3], f: [usize; 3], inside: &Vec3) -> [usize; 3] {
    let n = (points[f[1]] - points[f[0]]).cross(&(points[f[2]] - points[f[0]]));
    if n.dot(&(inside - points[f[0]])) > 0.0 {
        [f[0], f[2], f[1]]
    } else {
        f
    }
}

fn face_plane(points: &[Vec3], f: &[usize; 3]) -> Plane {
    let n = (points[f[1]] - points[f[0]])
        .cross(&(points[f[2]] - points[f[0]]))
        .normalize();
    Plane {
        normal: n,
        offset: n.dot(&points[f[0]]),
    }
}

//! Gilbert-Johnson-Keerthi distance between convex support-mapped shapes.

use super::Vec3;

pub trait SupportMap {
    /// Point of the shape furthest along `dir`.
    fn support(&self, dir: &Vec3) -> Vec3;
}

impl SupportMap for Vec3 {
    fn support(&self, _dir: &Vec3) -> Vec3 {
        *self
    }
}

/// A line segment, the core of a capsule.
impl SupportMap for [Vec3; 2] {
    fn support(&self, dir: &Vec3) -> Vec3 {
        if self[0].dot(dir) >= self[1].dot(dir) {
            self[0]
        } else {
            self[1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosestPoints {
    /// The shapes overlap (or touch within tolerance).
    Intersecting,
    Separated {
        distance: f64,
        on_a: Vec3,
        on_b: Vec3,
    },
}

#[derive(Clone, Copy)]
struct Vertex {
    w: Vec3,
    a: Vec3,
    b: Vec3,
}

const MAX_ITERATIONS: usize = 64;
const REL_TOL: f64 = 1e-12;
const ABS_TOL: f64 = 1e-14;

/// Closest points between shapes `a` and `b`, both expressed in the same frame.
pub fn closest_points<A, B>(a: &A, b: &B) -> ClosestPoints
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let start_dir = Vec3::x();
    let first = make_vertex(a, b, &start_dir);
    let mut simplex: Vec<Vertex> = vec![first];
    let mut v = first.w;
    let mut best = (v.norm_squared(), first.a, first.b);

    for _ in 0..MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv <= ABS_TOL * ABS_TOL {
            return ClosestPoints::Intersecting;
        }
        let w = make_vertex(a, b, &(-v));
        // Progress test: the new support point cannot reduce |v| any further.
        if vv - v.dot(&w.w) <= REL_TOL * vv.max(ABS_TOL)
            || simplex
                .iter()
                .any(|s| (s.w - w.w).norm_squared() <= ABS_TOL * ABS_TOL)
        {
            break;
        }
        simplex.push(w);
        let (point, weights, reduced) = closest_on_simplex(&simplex);
        match reduced {
            None => return ClosestPoints::Intersecting,
            Some(keep) => {
                let on_a = weights
                    .iter()
                    .zip(&simplex)
                    .fold(Vec3::zeros(), |acc, (l, s)| acc + s.a * *l);
                let on_b = weights
                    .iter()
                    .zip(&simplex)
                    .fold(Vec3::zeros(), |acc, (l, s)| acc + s.b * *l);
                let nv = point.norm_squared();
                if nv >= best.0 {
                    // Numerical stall.
                    break;
                }
                best = (nv, on_a, on_b);
                simplex = keep.iter().map(|&i| simplex[i]).collect();
                v = point;
            }
        }
    }
    let distance = best.0.sqrt();
    if distance <= ABS_TOL {
        return ClosestPoints::Intersecting;
    }
    ClosestPoints::Separated {
        distance,
        on_a: best.1,
        on_b: best.2,
    }
}

fn make_vertex<A, B>(a: &A, b: &B, dir: &Vec3) -> Vertex
where
    A: SupportMap + ?Sized,
    B: SupportMap + ?Sized,
{
    let pa = a.support(dir);
    let pb = b.support(&(-dir));
    Vertex {
        w: pa - pb,
        a: pa,
        b: pb,
    }
}

/// Closest point of the simplex to the origin, its barycentric weights over
/// the full simplex, and the indices of the sub-simplex supporting it.
/// `None` for the sub-simplex means the origin is enclosed.
fn closest_on_simplex(s: &[Vertex]) -> (Vec3, Vec<f64>, Option<Vec<usize>>) {
    let n = s.len();
    let mut weights = vec![0.0; n];
    match n {
        1 => {
            weights[0] = 1.0;
            (s[0].w, weights, Some(vec![0]))
        }
        2 => {
            let (p, l, keep) = segment(s[0].w, s[1].w);
            let idx = [0, 1];
            for (k, &i) in keep.iter().enumerate() {
                weights[idx[i]] = l[k];
            }
            (p, weights, Some(keep.iter().map(|&i| idx[i]).collect()))
        }
        3 => {
            let (p, l, keep) = triangle(s[0].w, s[1].w, s[2].w);
            for (k, &i) in keep.iter().enumerate() {
                weights[i] = l[k];
            }
            (p, weights, Some(keep))
        }
        4 => {
            let pts = [s[0].w, s[1].w, s[2].w, s[3].w];
            let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
            let opposite = [3, 2, 1, 0];
            let mut best: Option<(f64, Vec3, Vec<f64>, Vec<usize>)> = None;
            let mut outside_any = false;
            for (f, &o) in faces.iter().zip(&opposite) {
                let (a, b, c) = (pts[f[0]], pts[f[1]], pts[f[2]]);
                let normal = (b - a).cross(&(c - a));
                let side_origin = normal.dot(&(-a));
                let side_opp = normal.dot(&(pts[o] - a));
                // Origin strictly on the far side of this face from the opposite vertex.
                if side_origin * side_opp < 0.0 {
                    outside_any = true;
                    let (p, l, keep) = triangle(a, b, c);
                    let d = p.norm_squared();
                    if best.as_ref().is_none_or(|b| d < b.0) {
                        best = Some((d, p, l, keep.iter().map(|&k| f[k]).collect()));
                    }
                }
            }
            if !outside_any {
                return (Vec3::zeros(), weights, None);
            }
            let (_, p, l, keep) = best.expect("some face sees the origin");
            for (k, &i) in keep.iter().enumerate() {
                weights[i] = l[k];
            }
            (p, weights, Some(keep))
        }
        _ => unreachable!("simplex holds at most four vertices"),
    }
}

fn segment(a: Vec3, b: Vec3) -> (Vec3, Vec<f64>, Vec<usize>) {
    let ab = b - a;
    let denom = ab.norm_squared();
    let t = if denom > 0.0 {
        (-a).dot(&ab) / denom
    } else {
        0.0
    };
    if t <= 0.0 {
        (a, vec![1.0], vec![0])
    } else if t >= 1.0 {
        (b, vec![1.0], vec![1])
    } else {
        (a + ab * t, vec![1.0 - t, t], vec![0, 1])
    }
}

/// Closest point to the origin on triangle `abc` (Ericson, Real-Time Collision Detection 5.1.5).
fn triangle(a: Vec3, b: Vec3, c: Vec3) -> (Vec3, Vec<f64>, Vec<usize>) {
    let ab = b - a;
    let ac = c - a;
    let ap = -a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, vec![1.0], vec![0]);
    }
    let bp = -b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, vec![1.0], vec![1]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, vec![1.0 - v, v], vec![0, 1]);
    }
    let cp = -c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, vec![1.0], vec![2]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, vec![1.0 - w, w], vec![0, 2]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, vec![1.0 - w, w], vec![1, 2]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, vec![1.0 - v - w, v, w], vec![0, 1, 2])
}

#[cfg(test)]
mod tests {
    use super::super::ConvexHull;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_hull(h: Vec3) -> ConvexHull {
        let mut v = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    v.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                }
            }
        }
        ConvexHull::new(&v).unwrap()
    }

    // Exact point-to-box distance by clamping.
    fn box_distance(h: &Vec3, p: &Vec3) -> f64 {
        let q = Vec3::new(
            p.x.clamp(-h.x, h.x),
            p.y.clamp(-h.y, h.y),
            p.z.clamp(-h.z, h.z),
        );
        (p - q).norm()
    }

    #[test]
    fn point_to_box_matches_clamping() {
        let h = Vec3::new(0.03, 0.05, 0.02);
        let hull = box_hull(h);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let p = Vec3::new(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            );
            let expected = box_distance(&h, &p);
            match closest_points(&hull, &p) {
                ClosestPoints::Separated {
                    distance,
                    on_a,
                    on_b,
                } => {
                    assert!(
                        (distance - expected).abs() < 1e-9,
                        "{distance} vs {expected}"
                    );
                    assert!((on_b - p).norm() < 1e-15);
                    assert!(hull.contains(&on_a, 1e-9));
                }
                ClosestPoints::Intersecting => assert!(expected < 1e-9),
            }
        }
    }

    #[test]
    fn segment_through_box_intersects() {
        let hull = box_hull(Vec3::new(0.1, 0.1, 0.1));
        let seg = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.02, 0.0)];
        assert_eq!(closest_points(&hull, &seg), ClosestPoints::Intersecting);
    }

    #[test]
    fn parallel_segment_distance() {
        let hull = box_hull(Vec3::new(0.1, 0.1, 0.1));
        let seg = [Vec3::new(-0.05, 0.0, 0.3), Vec3::new(0.05, 0.0, 0.3)];
        match closest_points(&hull, &seg) {
            ClosestPoints::Separated { distance, .. } => assert!((distance - 0.2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}

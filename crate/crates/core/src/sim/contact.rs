//! Signed distances between hand collision cores and convex object pieces.

use crate::geom::{closest_points, ClosestPoints, ConvexHull, Vec3};

/// Signed distance from a query feature to a convex piece, in the piece frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieceDistance {
    /// Negative when the feature is inside the piece.
    pub distance: f64,
    /// Closest point on the piece surface.
    pub on_piece: Vec3,
    /// Outward surface normal at `on_piece`.
    pub normal: Vec3,
    /// Point of the query core realizing the distance.
    pub on_core: Vec3,
}

/// Signed distance from point `p` to `hull`.
pub fn point_distance(hull: &ConvexHull, p: &Vec3) -> PieceDistance {
    let (s, face) = hull.max_plane_distance(p);
    let face_result = || {
        let n = hull.planes()[face].normal;
        PieceDistance {
            distance: s,
            on_piece: p - n * s,
            normal: n,
            on_core: *p,
        }
    };
    if s <= 0.0 {
        return face_result();
    }
    match closest_points(hull, p) {
        ClosestPoints::Separated { distance, on_a, .. } if distance > 0.0 => PieceDistance {
            distance,
            on_piece: on_a,
            normal: (p - on_a) / distance,
            on_core: *p,
        },
        _ => face_result(),
    }
}

/// Signed distance from segment `[a, b]` to `hull`: the Euclidean gap when
/// separated, otherwise the depth of the segment's deepest point.
pub fn segment_distance(hull: &ConvexHull, a: &Vec3, b: &Vec3) -> PieceDistance {
    if a == b {
        return point_distance(hull, a);
    }
    if let ClosestPoints::Separated {
        distance,
        on_a,
        on_b,
    } = closest_points(hull, &[*a, *b])
    {
        if distance > 0.0 {
            return PieceDistance {
                distance,
                on_piece: on_a,
                normal: (on_b - on_a) / distance,
                on_core: on_b,
            };
        }
    }
    // max_f s_f(a + t(b - a)) is convex in t; golden-section search for its minimum.
    let depth = |t: f64| hull.max_plane_distance(&(a + (b - a) * t)).0;
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (depth(x1), depth(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = depth(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = depth(x2);
        }
    }
    let candidates = [0.0, 1.0, 0.5 * (lo + hi)];
    let t = candidates
        .into_iter()
        .min_by(|x, y| depth(*x).total_cmp(&depth(*y)))
        .unwrap_or(0.0);
    point_distance(hull, &(a + (b - a) * t))
}

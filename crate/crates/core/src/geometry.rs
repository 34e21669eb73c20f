//! Small geometric kernels shared by the team model, hierarchy and safety code.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::team::AgentId;

pub type Vec3 = Vector3<f64>;

/// Barycentric tolerance used by every containment test.
pub const BARYCENTRIC_TOL: f64 = 1e-9;

/// Coordinates of a triangle with one vertex at the origin, expressed in the
/// plane spanned by the other two vertex vectors.
///
/// A point `x` is mapped to `(u, v)` minimizing `|x - (u e1 + v e2)|`; its
/// barycentric triple with respect to `(origin, e1, e2)` is `(1 - u - v, u, v)`.
#[derive(Clone, Debug)]
pub struct PlaneFrame {
    e1: Vec3,
    e2: Vec3,
    gram_inv: Matrix2<f64>,
}

impl PlaneFrame {
    /// Returns `None` when `e1` and `e2` are (numerically) parallel or zero.
    pub fn new(e1: Vec3, e2: Vec3) -> Option<Self> {
        let cross = e1.cross(&e2).norm();
        if !(cross > 1e-12 * e1.norm() * e2.norm()) {
            return None;
        }
        let gram = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e2.dot(&e1), e2.dot(&e2));
        let gram_inv = gram.try_inverse()?;
        Some(Self { e1, e2, gram_inv })
    }

    pub fn normal(&self) -> Vec3 {
        self.e1.cross(&self.e2).normalize()
    }

    fn solve(&self, x: &Vec3) -> Vector2<f64> {
        self.gram_inv * Vector2::new(self.e1.dot(x), self.e2.dot(x))
    }

    /// In-plane coordinates of `x`, with one round of iterative refinement.
    pub fn coordinates(&self, x: &Vec3) -> (f64, f64) {
        let uv = self.solve(x);
        let residual = x - (self.e1 * uv[0] + self.e2 * uv[1]);
        let correction = self.solve(&residual);
        (uv[0] + correction[0], uv[1] + correction[1])
    }

    /// Barycentric triple `(w_origin, w_e1, w_e2)` of the projection of `x`.
    pub fn barycentric(&self, x: &Vec3) -> [f64; 3] {
        let (u, v) = self.coordinates(x);
        [1.0 - u - v, u, v]
    }

    /// Distance from `x` to the plane through the origin spanned by the frame.
    pub fn plane_distance(&self, x: &Vec3) -> f64 {
        x.dot(&self.normal()).abs()
    }

    /// Projected containment test, inclusive of the boundary.
    pub fn contains(&self, x: &Vec3) -> bool {
        self.barycentric(x).iter().all(|&w| w >= -BARYCENTRIC_TOL)
    }
}

/// Exact closest pair by sort-and-sweep on the x coordinate.
///
/// Ties on distance resolve to the lexicographically smallest id pair.
pub fn closest_pair(points: &[(AgentId, Vec3)]) -> Option<(f64, (AgentId, AgentId))> {
    if points.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].1.x.total_cmp(&points[b].1.x));

    let mut best = f64::INFINITY;
    let mut best_pair = (points[0].0, points[1].0);
    for (i, &a) in order.iter().enumerate() {
        let pa = &points[a].1;
        for &b in &order[i + 1..] {
            let pb = &points[b].1;
            if pb.x - pa.x > best {
                break;
            }
            let d = (pa - pb).norm();
            let pair = if points[a].0 <= points[b].0 {
                (points[a].0, points[b].0)
            } else {
                (points[b].0, points[a].0)
            };
            if d < best || (d == best && pair < best_pair) {
                best = d;
                best_pair = pair;
            }
        }
    }
    Some((best, best_pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_parallel_vectors() {
        assert!(PlaneFrame::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)).is_none());
        assert!(PlaneFrame::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn barycentric_of_vertices_and_midpoints() {
        let f = PlaneFrame::new(Vec3::new(2.0, 0.0, 1.0), Vec3::new(0.0, 3.0, 1.0)).unwrap();
        let w = f.barycentric(&Vec3::new(2.0, 0.0, 1.0));
        assert!((w[0]).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15 && w[2].abs() < 1e-15);
        let w = f.barycentric(&Vec3::new(1.0, 1.5, 1.0));
        assert!((w[1] - 0.5).abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15 && w[0].abs() < 1e-15);
        assert!(f.contains(&Vec3::new(0.5, 0.5, 0.3)));
        assert!(!f.contains(&Vec3::new(-0.5, 0.5, 0.0)));
    }

    #[test]
    fn closest_pair_collinear() {
        let pts = vec![
            (AgentId(1), Vec3::new(0.0, 0.0, 0.0)),
            (AgentId(2), Vec3::new(1.0, 0.0, 0.0)),
            (AgentId(3), Vec3::new(3.0, 0.0, 0.0)),
        ];
        assert_eq!(closest_pair(&pts), Some((1.0, (AgentId(1), AgentId(2)))));
        assert_eq!(closest_pair(&pts[..1]), None);
    }
}

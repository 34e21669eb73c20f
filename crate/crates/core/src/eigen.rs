//! Symmetric 3x3 eigen-decomposition.
//!
//! Eigenvalues come from the closed-form trigonometric solution of the
//! characteristic cubic. When two roots cluster the cubic is ill-conditioned,
//! so the cyclic Jacobi iteration is used instead.

use std::f64::consts::PI;

use nalgebra::Matrix3;

/// Relative root gap below which the closed form hands over to Jacobi.
const CLUSTER_GAP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct SymEigen3 {
    /// Descending.
    pub values: [f64; 3],
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: Matrix3<f64>,
}

impl SymEigen3 {
    /// `V diag(f(values)) V'`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::from(self.values.map(f)));
        self.vectors * d * self.vectors.transpose()
    }
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sym3_eigenvalues(a: &Matrix3<f64>) -> [f64; 3] {
    let scale = a.amax();
    if scale == 0.0 {
        return [0.0; 3];
    }
    let m = a / scale;
    let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    if off == 0.0 {
        let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        d.sort_by(|x, y| y.total_cmp(x));
        return d.map(|x| x * scale);
    }
    let q = m.trace() / 3.0;
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    if p < CLUSTER_GAP {
        return jacobi_eigen(a).values;
    }
    let b = (m - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    // gaps are measured against the unit-scale matrix
    if (l1 - l2).min(l2 - l3) < CLUSTER_GAP {
        return jacobi_eigen(a).values;
    }
    [l1, l2, l3].map(|x| polish(&m, x) * scale)
}

/// One Newton step on `det(M - x I)` to tighten a simple root.
fn polish(m: &Matrix3<f64>, x: f64) -> f64 {
    let c2 = m.trace();
    let c1 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let c0 = m.determinant();
    let f = ((x - c2) * x + c1) * x - c0;
    let df = (3.0 * x - 2.0 * c2) * x + c1;
    if df == 0.0 {
        return x;
    }
    let step = f / df;
    // reject steps that are not a refinement
    if step.abs() > 1e-8 * (1.0 + x.abs()) {
        x
    } else {
        x - step
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn jacobi_eigen(a: &Matrix3<f64>) -> SymEigen3 {
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = Matrix3::identity();
    for _ in 0..64 {
        let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let diag = m[(0, 0)].powi(2) + m[(1, 1)].powi(2) + m[(2, 2)].powi(2);
        if off <= f64::EPSILON.powi(2) * 1e-4 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            m = rot.transpose() * m * rot;
            m[(p, q)] = 0.0;
            m[(q, p)] = 0.0;
            v *= rot;
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    SymEigen3 {
        values: order.map(|i| m[(i, i)]),
        vectors: Matrix3::from_columns(&order.map(|i| v.column(i).into_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn diagonal_and_repeated() {
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 81.0, 16.0));
        assert_eq!(sym3_eigenvalues(&d), [81.0, 16.0, 1.0]);
        assert_eq!(sym3_eigenvalues(&Matrix3::identity()), [1.0, 1.0, 1.0]);
        assert_eq!(sym3_eigenvalues(&Matrix3::zeros()), [0.0; 3]);
    }

    #[test]
    fn known_spectrum() {
        // eigenvalues 1, 3 and 4: trace 8, det 12
        let a = Matrix3::new(2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 4.0);
        assert!(close(sym3_eigenvalues(&a), [4.0, 3.0, 1.0], 1e-14));
        let j = jacobi_eigen(&a);
        assert!(close(j.values, [4.0, 3.0, 1.0], 1e-14));
        assert!((j.map(|x| x) - a).amax() < 1e-14);
    }

    #[test]
    fn near_repeated_roots_use_jacobi() {
        let a = Matrix3::new(2.0, 1e-9, 0.0, 1e-9, 2.0, 1e-9, 0.0, 1e-9, 2.0 + 1e-10);
        let exact = jacobi_eigen(&a).values;
        assert_eq!(sym3_eigenvalues(&a), exact);
        assert!(exact.iter().all(|&x| (x - 2.0).abs() < 1e-8));
    }

    #[test]
    fn jacobi_vectors_are_orthonormal() {
        let a = Matrix3::new(4.0, -2.0, 0.5, -2.0, 3.0, 1.5, 0.5, 1.5, 6.0);
        let e = jacobi_eigen(&a);
        assert!((e.vectors.transpose() * e.vectors - Matrix3::identity()).amax() < 1e-14);
        for (i, &lambda) in e.values.iter().enumerate() {
            let v = e.vectors.column(i);
            assert!((a * v - v * lambda).norm() < 1e-13);
        }
        assert!(close(sym3_eigenvalues(&a), e.values, 1e-13));
    }
}

#![allow(dead_code)]

use std::sync::OnceLock;

use mlcd_core::qp::QpProblem;
use mlcd_core::scenario::{helix67, Scenario};
use mlcd_core::sim::{run_simulation, SimLog};
use mlcd_core::Vec3;
use nalgebra::{DVector, Matrix3, Rotation3, Unit};
use rand::Rng;

/// Square team: four boundary leaders on the axes at distance 2, core 5,
/// interior leaders 6-9 and one follower 10.
pub const SQUARE: &str = r#"
schema = "mlcd-scenario/1"
name = "square"

[team]
agents = 10
layers = ["1-5", "6-9", "10"]
positions = [
  { id = 1, at = [2.0, 0.0, 0.0] },
  { id = 2, at = [0.0, 2.0, 0.0] },
  { id = 3, at = [-2.0, 0.0, 0.0] },
  { id = 4, at = [0.0, -2.0, 0.0] },
  { id = 5, at = [0.0, 0.0, 0.0] },
  { id = 6, at = [0.6666666666666666, 0.6666666666666666, 0.0] },
  { id = 7, at = [-0.6666666666666666, 0.6666666666666666, 0.0] },
  { id = 8, at = [-0.6666666666666666, -0.6666666666666666, 0.0] },
  { id = 9, at = [0.6666666666666666, -0.6666666666666666, 0.0] },
  { id = 10, at = [0.5, 0.25, 0.0] },
]

[safety]
delta = 0.05
epsilon = 0.075
a_max = 20.0

[qp]
bounds = "fixed"
alpha_min = 0.5
alpha_max = 3.0

[trajectory]
kind = "helix"
omega = 0.05
duration = 20.0
"#;

pub fn square() -> Scenario {
    Scenario::from_str(SQUARE).expect("square fixture resolves")
}

/// The 67-agent scenario and its closed-loop run at the default settings,
/// computed once per test binary.
pub fn helix_run() -> &'static (Scenario, SimLog) {
    static RUN: OnceLock<(Scenario, SimLog)> = OnceLock::new();
    RUN.get_or_init(|| {
        let s = helix67().resolve().expect("helix67 resolves");
        let log = run_simulation(&s.team, &s.weights, &s.planner, &s.trajectory, &s.sim).expect("helix67 runs");
        (s, log)
    })
}

pub fn random_unit(rng: &mut impl Rng) -> Unit<Vec3> {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&random_unit(rng), rng.gen_range(-3.14..3.14)).into_inner()
}

/// Singular values of `q`, descending, from nalgebra's SVD.
pub fn svd_singular_values(q: &Matrix3<f64>) -> [f64; 3] {
    let mut s: Vec<f64> = q.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    [s[0], s[1], s[2]]
}

/// Brute-force convex-hull membership: `p` must lie on the inner side of
/// every supporting plane through three of `points`, within `tol`.
pub fn hull_contains(points: &[Vec3], p: &Vec3, tol: f64) -> bool {
    let n = points.len();
    let scale = points.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let mut any_plane = false;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
                if normal.norm() < 1e-9 * scale * scale {
                    continue;
                }
                let normal = normal.normalize();
                let side: Vec<f64> = points.iter().map(|x| normal.dot(&(x - points[i]))).collect();
                let lo = side.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = side.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let d = normal.dot(&(p - points[i]));
                let flat = 1e-12 * scale;
                if lo >= -flat {
                    any_plane = true;
                    if d < -tol {
                        return false;
                    }
                }
                if hi <= flat {
                    any_plane = true;
                    if d > tol {
                        return false;
                    }
                }
            }
        }
    }
    any_plane
}

fn quad(p: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&p.h * x)) + p.k.dot(x)
}

/// Grid-search minimizer of a scale-factor QP whose free variables are the
/// boundary scale factors (at most three). A 0.01 grid over the box is
/// refined with a 1e-3 grid over a +-0.02 window around the coarse best;
/// convexity makes the refinement exact to grid resolution.
pub fn grid_search(p: &QpProblem, lo: f64, hi: f64) -> DVector<f64> {
    let n_pl = p.n_pl;
    let nb = n_pl - 1;
    assert!(nb <= 3, "grid oracle handles at most three free variables");
    let mut base = DVector::zeros(p.dim());
    for i in 0..3 {
        base[n_pl + i] = p.b_eq[1 + i];
    }
    let search = |centre: Option<&[f64]>, step: f64, half: f64| -> Vec<f64> {
        let axes: Vec<Vec<f64>> = (0..nb)
            .map(|l| {
                let (a, b) = match centre {
                    Some(c) => ((c[l] - half).max(lo), (c[l] + half).min(hi)),
                    None => (lo, hi),
                };
                let n = ((b - a) / step).round() as usize;
                let mut v: Vec<f64> = (0..=n).map(|i| (a + i as f64 * step).min(b)).collect();
                v.push(b);
                v
            })
            .collect();
        let mut best = (f64::INFINITY, vec![0.0; nb]);
        let mut idx = vec![0usize; nb];
        loop {
            let mut x = base.clone();
            for l in 0..nb {
                x[l] = axes[l][idx[l]];
            }
            let f = quad(p, &x);
            if f < best.0 {
                best = (f, (0..nb).map(|l| x[l]).collect());
            }
            let mut d = 0;
            while d < nb {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == nb {
                break;
            }
        }
        best.1
    };
    let coarse = search(None, 0.01, 0.0);
    let fine = search(Some(&coarse), 1e-3, 0.02);
    let mut x = base;
    for l in 0..nb {
        x[l] = fine[l];
    }
    x
}

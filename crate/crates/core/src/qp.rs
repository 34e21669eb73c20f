//! Per-timestep quadratic program over `X = [alpha_1..alpha_npl, s_x, s_y, s_z]`.
//!
//! ```text
//! minimize    1/2 X'HX + k'X
//! subject to  A_ineq X <= B_ineq      (box on alpha_1..alpha_{npl-1})
//!             A_eq X    = B_eq        (alpha_npl = 0, s = s_desired)
//! ```
//!
//! The equality rows fix the last four variables, so they are eliminated in
//! closed form and the remaining box-constrained problem is solved with a
//! primal active-set method.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hierarchy::{AlphaVector, CompositeRows};
use crate::trajectory::ReferenceTrajectory;

pub const DEFAULT_ZETA: f64 = 1e-6;
/// Every KKT residual of an accepted solution is at most this.
pub const KKT_TOL: f64 = 1e-8;

/// How `H` and `k` are built from the composite rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScalingMode {
    /// Minimizes `sum_axis (R_axis X - s_axis)^2 + zeta |X|^2`, i.e.
    /// `H = 2 zeta I + 2 sum R'R`, `k = -2 sum s R'`.
    #[default]
    Consistent,
    /// `H = zeta I + sum R'R`, `k = -2 sum s R'` taken literally. The
    /// unconstrained optimum then drives the nominal position toward `2 s`.
    PaperExact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaBounds {
    pub min: f64,
    pub max: f64,
}

impl AlphaBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min <= max) {
            return Err(Error::InfeasibleBounds { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    /// Intersection with another window; `None` when empty.
    pub fn intersect(&self, other: &AlphaBounds) -> Option<AlphaBounds> {
        let min = self.min.max(other.min);
        let max = self.max.min(other.max);
        (min <= max).then_some(AlphaBounds { min, max })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub n_pl: usize,
    pub h: DMatrix<f64>,
    pub k: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub zeta: f64,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.k.dot(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    /// Indices of inequality rows active at the solution.
    pub active_set: Vec<usize>,
}

impl QpSolution {
    pub fn alpha(&self, n_pl: usize) -> AlphaVector {
        AlphaVector(self.x.rows(0, n_pl).iter().copied().collect())
    }

    pub fn s(&self, n_pl: usize) -> Vec3 {
        Vec3::new(self.x[n_pl], self.x[n_pl + 1], self.x[n_pl + 2])
    }
}

/// Time-invariant part of the problem: `H`, the constraint matrices and the
/// rows needed to build `k(t)`.
#[derive(Clone, Debug)]
pub struct QpTemplate {
    rows: CompositeRows,
    mode: ScalingMode,
    zeta: f64,
    bounds: AlphaBounds,
    h: DMatrix<f64>,
    a_ineq: DMatrix<f64>,
    b_ineq: DVector<f64>,
    a_eq: DMatrix<f64>,
    tolerance: f64,
}

impl QpTemplate {
    pub fn new(rows: CompositeRows, bounds: AlphaBounds, zeta: f64, mode: ScalingMode) -> Result<Self> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(Error::NonPositiveZeta(zeta));
        }
        let bounds = AlphaBounds::new(bounds.min, bounds.max)?;
        let n_pl = rows.n_pl();
        if n_pl < 2 {
            return Err(Error::MalformedProblem(format!("need at least 2 primary leaders, got {n_pl}")));
        }
        let n = n_pl + 3;
        let nb = n_pl - 1;

        let mut gram = DMatrix::<f64>::zeros(n, n);
        for axis in 0..3 {
            let r = rows.r(axis);
            gram += r.transpose() * &r;
        }
        let h = match mode {
            ScalingMode::Consistent => (DMatrix::identity(n, n) * zeta + gram) * 2.0,
            ScalingMode::PaperExact => DMatrix::identity(n, n) * zeta + gram,
        };

        let mut a_ineq = DMatrix::zeros(2 * nb, n);
        let mut b_ineq = DVector::zeros(2 * nb);
        for l in 0..nb {
            a_ineq[(l, l)] = -1.0;
            b_ineq[l] = -bounds.min;
            a_ineq[(nb + l, l)] = 1.0;
            b_ineq[nb + l] = bounds.max;
        }
        let mut a_eq = DMatrix::zeros(4, n);
        for i in 0..4 {
            a_eq[(i, nb + i)] = 1.0;
        }
        Ok(Self { rows, mode, zeta, bounds, h, a_ineq, b_ineq, a_eq, tolerance: KKT_TOL })
    }

    /// Replaces the KKT acceptance tolerance (default [`KKT_TOL`]).
    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::MalformedProblem(format!("KKT tolerance must be positive, got {tolerance}")));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn rows(&self) -> &CompositeRows {
        &self.rows
    }

    pub fn bounds(&self) -> AlphaBounds {
        self.bounds
    }

    pub fn mode(&self) -> ScalingMode {
        self.mode
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// The full problem for desired position `s`.
    pub fn problem(&self, s: &Vec3) -> QpProblem {
        let n_pl = self.rows.n_pl();
        let mut k = DVector::zeros(n_pl + 3);
        for axis in 0..3 {
            k -= self.rows.r(axis).transpose() * (2.0 * s[axis]);
        }
        QpProblem {
            n_pl,
            h: self.h.clone(),
            k,
            a_ineq: self.a_ineq.clone(),
            b_ineq: self.b_ineq.clone(),
            a_eq: self.a_eq.clone(),
            b_eq: DVector::from_column_slice(&[0.0, s.x, s.y, s.z]),
            zeta: self.zeta,
        }
    }

    pub fn solve(&self, s: &Vec3) -> Result<QpSolution> {
        solve_box_eq_qp_with_tolerance(&self.problem(s), self.tolerance)
    }

    /// One QP per sample of `t_grid`, solved in parallel; output order follows the grid.
    pub fn schedule(&self, trajectory: &ReferenceTrajectory, t_grid: &[f64]) -> Result<Vec<PlanStep>> {
        if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::TimeGrid("samples must be strictly increasing".into()));
        }
        let n_pl = self.rows.n_pl();
        t_grid
            .par_iter()
            .map(|&t| {
                let s = trajectory.position(t);
                let sol = self
                    .solve(&s)
                    .map_err(|e| Error::ScheduleStep { t, source: Box::new(e) })?;
                Ok(PlanStep {
                    t,
                    alpha: sol.alpha(n_pl),
                    s: sol.s(n_pl),
                    objective: sol.objective,
                    kkt: sol.kkt,
                })
            })
            .collect()
    }
}

/// Builds the problem for one planning instant.
pub fn assemble_problem(
    rows: &CompositeRows,
    s_desired: &Vec3,
    bounds: AlphaBounds,
    zeta: f64,
    mode: ScalingMode,
) -> Result<QpProblem> {
    Ok(QpTemplate::new(rows.clone(), bounds, zeta, mode)?.problem(s_desired))
}

/// One planned sample: scale factors, translation, objective and residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub t: f64,
    pub alpha: AlphaVector,
    pub s: Vec3,
    pub objective: f64,
    pub kkt: KktResiduals,
}

/// Index of the single nonzero entry of `row` when it is `sign * e_j` for
/// some `j` and `sign` in {-1, +1}.
fn signed_unit(row: &[f64]) -> Option<(usize, f64)> {
    let mut found = None;
    for (j, &v) in row.iter().enumerate() {
        if v != 0.0 {
            if found.is_some() || (v != 1.0 && v != -1.0) {
                return None;
            }
            found = Some((j, v));
        }
    }
    found
}

/// Global minimizer of a problem whose equality rows are unit rows and whose
/// inequality rows are signed unit rows.
pub fn solve_box_eq_qp(problem: &QpProblem) -> Result<QpSolution> {
    solve_box_eq_qp_with_tolerance(problem, KKT_TOL)
}

/// As [`solve_box_eq_qp`], rejecting solutions whose largest KKT residual exceeds `tol`.
pub fn solve_box_eq_qp_with_tolerance(problem: &QpProblem, tol: f64) -> Result<QpSolution> {
    let n = problem.dim();
    if problem.h.shape() != (n, n)
        || problem.a_ineq.ncols() != n
        || problem.a_eq.ncols() != n
        || problem.a_ineq.nrows() != problem.b_ineq.len()
        || problem.a_eq.nrows() != problem.b_eq.len()
    {
        return Err(Error::MalformedProblem("inconsistent dimensions".into()));
    }
    let rows = |m: &DMatrix<f64>, i: usize| -> Vec<f64> { m.row(i).iter().copied().collect() };

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for i in 0..problem.a_eq.nrows() {
        match signed_unit(&rows(&problem.a_eq, i)) {
            Some((j, sign)) => {
                let v = problem.b_eq[i] * sign;
                if let Some(prev) = fixed[j] {
                    if prev != v {
                        return Err(Error::MalformedProblem(format!("inconsistent equalities on variable {j}")));
                    }
                }
                fixed[j] = Some(v);
            }
            None => return Err(Error::MalformedProblem(format!("equality row {i} is not a unit row"))),
        }
    }
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for i in 0..problem.a_ineq.nrows() {
        match signed_unit(&rows(&problem.a_ineq, i)) {
            Some((j, s)) if s > 0.0 => hi[j] = hi[j].min(problem.b_ineq[i]),
            Some((j, _)) => lo[j] = lo[j].max(-problem.b_ineq[i]),
            None => {
                return Err(Error::MalformedProblem(format!("inequality row {i} is not a signed unit row")))
            }
        }
    }
    for j in 0..n {
        if lo[j] > hi[j] {
            return Err(Error::InfeasibleBounds { min: lo[j], max: hi[j] });
        }
        if let Some(v) = fixed[j] {
            if v < lo[j] || v > hi[j] {
                return Err(Error::InfeasibleBounds { min: lo[j], max: hi[j] });
            }
        }
    }

    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut x = DVector::from_iterator(n, fixed.iter().map(|v| v.unwrap_or(0.0)));
    if !free.is_empty() {
        let g = problem.h.select_rows(&free).select_columns(&free);
        // c = k_F + H_{F,fixed} x_fixed (free entries of x are still zero)
        let c = DVector::from_iterator(
            free.len(),
            free.iter().map(|&i| problem.k[i] + problem.h.row(i).dot(&x.transpose())),
        );
        let flo: Vec<f64> = free.iter().map(|&j| lo[j]).collect();
        let fhi: Vec<f64> = free.iter().map(|&j| hi[j]).collect();
        let y = solve_box_qp(&g, &c, &flo, &fhi)?;
        for (a, &j) in free.iter().enumerate() {
            x[j] = y[a];
        }
    }

    let kkt = kkt_residual(problem, &x);
    if !(kkt.max() <= tol) {
        return Err(Error::Numerical(format!(
            "KKT residuals above tolerance: stationarity {:.3e}, primal {:.3e}, complementarity {:.3e}",
            kkt.stationarity, kkt.primal, kkt.complementarity
        )));
    }
    let active_set = active_rows(problem, &x);
    Ok(QpSolution { objective: problem.objective(&x), x, kkt, active_set })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Primal active-set method for `min 1/2 y'Gy + c'y` subject to `lo <= y <= hi`,
/// with `G` positive definite.
fn solve_box_qp(g: &DMatrix<f64>, c: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Result<DVector<f64>> {
    let m = c.len();
    let not_pd = || Error::Numerical("reduced Hessian is not positive definite".into());

    // start from the clamped unconstrained minimizer
    let unconstrained = g.clone().cholesky().ok_or_else(not_pd)?.solve(&(-c));
    let mut y = DVector::zeros(m);
    let mut state = vec![Bound::Free; m];
    for i in 0..m {
        let u = unconstrained[i];
        if lo[i] == hi[i] || u <= lo[i] {
            y[i] = lo[i];
            state[i] = Bound::Lower;
        } else if u >= hi[i] {
            y[i] = hi[i];
            state[i] = Bound::Upper;
        } else {
            y[i] = u;
        }
    }

    let scale = 1.0 + c.amax() + g.amax();
    let release_tol = 1e-13 * scale;
    for _ in 0..(50 + 20 * m) {
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == Bound::Free).collect();
        if !free.is_empty() {
            let g_ff = g.select_rows(&free).select_columns(&free);
            let rhs = DVector::from_iterator(
                free.len(),
                free.iter().map(|&i| {
                    let fixed_part: f64 = (0..m)
                        .filter(|&j| state[j] != Bound::Free)
                        .map(|j| g[(i, j)] * y[j])
                        .sum();
                    -(c[i] + fixed_part)
                }),
            );
            let target = g_ff.cholesky().ok_or_else(not_pd)?.solve(&rhs);

            let mut step = 1.0;
            let mut blocking = None;
            for (a, &i) in free.iter().enumerate() {
                let d = target[a] - y[i];
                if d < 0.0 && lo[i].is_finite() {
                    let t = (lo[i] - y[i]) / d;
                    if t < step {
                        step = t;
                        blocking = Some((i, Bound::Lower));
                    }
                } else if d > 0.0 && hi[i].is_finite() {
                    let t = (hi[i] - y[i]) / d;
                    if t < step {
                        step = t;
                        blocking = Some((i, Bound::Upper));
                    }
                }
            }
            let step = step.max(0.0);
            for (a, &i) in free.iter().enumerate() {
                y[i] = if blocking.is_none() { target[a] } else { y[i] + step * (target[a] - y[i]) };
            }
            if let Some((i, b)) = blocking {
                state[i] = b;
                y[i] = if b == Bound::Lower { lo[i] } else { hi[i] };
                continue;
            }
        }

        let grad = g * &y + c;
        let mut release = None;
        let mut worst = -release_tol;
        for i in 0..m {
            if lo[i] == hi[i] {
                continue;
            }
            let multiplier = match state[i] {
                Bound::Free => continue,
                Bound::Lower => grad[i],
                Bound::Upper => -grad[i],
            };
            if multiplier < worst {
                worst = multiplier;
                release = Some(i);
            }
        }
        match release {
            Some(i) => state[i] = Bound::Free,
            None => return Ok(y),
        }
    }
    Err(Error::Numerical("active-set iteration limit reached".into()))
}

fn active_tol(b: f64) -> f64 {
    1e-9 * (1.0 + b.abs())
}

fn active_rows(problem: &QpProblem, x: &DVector<f64>) -> Vec<usize> {
    let slack = &problem.b_ineq - &problem.a_ineq * x;
    (0..slack.len()).filter(|&i| slack[i] <= active_tol(problem.b_ineq[i])).collect()
}

/// Stationarity, primal feasibility and complementarity at `x`.
///
/// Multipliers are recovered by nonnegative least squares over the active
/// inequality rows with free equality multipliers, independently of the
/// solver's variable elimination.
pub fn kkt_residual(problem: &QpProblem, x: &DVector<f64>) -> KktResiduals {
    let grad = &problem.h * x + &problem.k;
    let slack = &problem.b_ineq - &problem.a_ineq * x;
    let eq_res = &problem.a_eq * x - &problem.b_eq;

    let primal = slack
        .iter()
        .map(|&s| (-s).max(0.0))
        .chain(eq_res.iter().map(|r| r.abs()))
        .fold(0.0, f64::max);

    let active = active_rows(problem, x);
    let n = problem.dim();
    let m_eq = problem.a_eq.nrows();
    // columns: active inequality normals, then +/- equality normals
    let cols = active.len() + 2 * m_eq;
    let mut basis = DMatrix::zeros(n, cols);
    for (c, &i) in active.iter().enumerate() {
        basis.set_column(c, &problem.a_ineq.row(i).transpose());
    }
    for i in 0..m_eq {
        let a = problem.a_eq.row(i).transpose();
        basis.set_column(active.len() + 2 * i, &a);
        basis.set_column(active.len() + 2 * i + 1, &(-a));
    }
    let (coef, residual) = nnls(&basis, &(-&grad));

    let complementarity = active
        .iter()
        .enumerate()
        .map(|(c, &i)| (coef[c] * slack[i]).abs())
        .fold(0.0, f64::max);

    KktResiduals { stationarity: residual, primal, complementarity }
}

/// Lawson-Hanson nonnegative least squares: `min |A z - b|` with `z >= 0`.
/// Returns the coefficients and the residual norm.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = a.ncols();
    let mut z = DVector::zeros(n);
    if n == 0 {
        return (z, b.norm());
    }
    let tol = 1e-14 * (1.0 + a.amax() * b.amax());
    let mut passive = vec![false; n];

    let lstsq = |passive: &[bool]| -> (Vec<usize>, DVector<f64>) {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        (idx, sol)
    };

    for _ in 0..(3 * n + 10) {
        let w = a.transpose() * (b - a * &z);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let (idx, sol) = lstsq(&passive);
            if sol.iter().all(|&v| v > 0.0) {
                z.fill(0.0);
                for (k, &jj) in idx.iter().enumerate() {
                    z[jj] = sol[k];
                }
                break;
            }
            // step toward the unconstrained subproblem solution until a coefficient hits zero
            let mut step = 1.0f64;
            for (k, &jj) in idx.iter().enumerate() {
                if sol[k] <= 0.0 {
                    let denom = z[jj] - sol[k];
                    if denom > 0.0 {
                        step = step.min(z[jj] / denom);
                    }
                }
            }
            for (k, &jj) in idx.iter().enumerate() {
                z[jj] += step * (sol[k] - z[jj]);
            }
            for jj in 0..n {
                if passive[jj] && z[jj] <= tol {
                    passive[jj] = false;
                    z[jj] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual = (a * &z - b).norm();
    (z, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::RowDVector;

    fn rows(delta: [&[f64]; 3]) -> CompositeRows {
        CompositeRows { delta: delta.map(RowDVector::from_row_slice) }
    }

    fn b(min: f64, max: f64) -> AlphaBounds {
        AlphaBounds::new(min, max).unwrap()
    }

    #[test]
    fn shapes_for_seven_leaders() {
        let r = rows([&[0.1; 7], &[0.0; 7], &[0.2; 7]]);
        let p = assemble_problem(&r, &Vec3::new(1.0, 2.0, 3.0), b(0.6, 5.0), DEFAULT_ZETA, ScalingMode::Consistent)
            .unwrap();
        assert_eq!(p.h.shape(), (10, 10));
        assert_eq!(p.a_ineq.shape(), (12, 10));
        assert_eq!(p.a_eq.shape(), (4, 10));
        let expected: Vec<f64> = [vec![-0.6; 6], vec![5.0; 6]].concat();
        assert_eq!(p.b_ineq.as_slice(), expected.as_slice());
        assert_eq!(p.b_eq.as_slice(), &[0.0, 1.0, 2.0, 3.0]);
        for i in 0..4 {
            assert_eq!(p.a_eq[(i, 6 + i)], 1.0);
        }
        assert!(p.h.clone().symmetric_eigenvalues().min() >= DEFAULT_ZETA);
    }

    #[test]
    fn rejects_bad_parameters() {
        let r = rows([&[0.1; 4], &[0.0; 4], &[0.0; 4]]);
        let s = Vec3::zeros();
        let err = assemble_problem(&r, &s, AlphaBounds { min: 1.0, max: 0.5 }, 1e-6, ScalingMode::Consistent)
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleBounds { .. }));
        assert!(err.to_string().contains("infeasible bounds"));
        let err = assemble_problem(&r, &s, b(0.5, 1.0), 0.0, ScalingMode::Consistent).unwrap_err();
        assert!(err.to_string().contains("zeta must be positive"));
    }

    #[test]
    fn symmetric_team_sits_on_lower_bound() {
        let r = rows([&[0.0; 7], &[0.0; 7], &[0.0; 7]]);
        let s = Vec3::new(0.3, 0.1, -0.2);
        let sol = solve_box_eq_qp(&assemble_problem(&r, &s, b(0.6, 5.0), 1e-3, ScalingMode::Consistent).unwrap())
            .unwrap();
        for l in 0..6 {
            assert_eq!(sol.x[l], 0.6);
        }
        assert_eq!(sol.x[6], 0.0);
        assert_eq!(sol.s(7), s);
        assert_eq!(sol.active_set, (0..6).collect::<Vec<_>>());

        // 1-D grid cross-check of zeta * a^2 on [0.6, 5]
        let best = (0..=4400).map(|i| 0.6 + i as f64 * 1e-3).min_by(|a, b| (a * a).total_cmp(&(b * b)));
        assert!((best.unwrap() - sol.x[0]).abs() < 1e-2);
    }

    #[test]
    fn collapsed_box_is_a_point() {
        let r = rows([&[0.3, -0.2, 0.1, 0.0], &[0.1, 0.2, -0.3, 0.0], &[0.05, 0.05, 0.05, 0.0]]);
        let s = Vec3::new(1.5, -2.0, 0.25);
        for mode in [ScalingMode::Consistent, ScalingMode::PaperExact] {
            let sol = solve_box_eq_qp(&assemble_problem(&r, &s, b(1.0, 1.0), 1e-6, mode).unwrap()).unwrap();
            assert_eq!(&sol.x.as_slice()[..3], &[1.0, 1.0, 1.0]);
            assert_eq!(sol.s(4), s);
        }
    }

    #[test]
    fn one_boundary_leader_matches_grid_search() {
        let r = rows([&[0.5, 0.0], &[-0.25, 0.0], &[0.1, 0.0]]);
        let s = Vec3::new(-1.0, 0.4, 0.3);
        let bounds = b(0.2, 3.0);
        let p = assemble_problem(&r, &s, bounds, 1e-2, ScalingMode::PaperExact).unwrap();
        let sol = solve_box_eq_qp(&p).unwrap();
        let f = |a: f64| {
            let x = DVector::from_column_slice(&[a, 0.0, s.x, s.y, s.z]);
            p.objective(&x)
        };
        let n = ((bounds.max - bounds.min) / 1e-3).round() as usize;
        let grid_best = (0..=n)
            .map(|i| bounds.min + i as f64 * 1e-3)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((grid_best - sol.x[0]).abs() < 1e-2);
    }

    #[test]
    fn kkt_residual_examples() {
        let r = rows([&[0.4, -0.1, 0.2, 0.0], &[0.1, 0.3, -0.2, 0.0], &[-0.2, 0.1, 0.3, 0.0]]);
        let s = Vec3::new(0.7, -0.4, 0.9);
        let p = assemble_problem(&r, &s, b(0.1, 4.0), 1e-3, ScalingMode::PaperExact).unwrap();
        let sol = solve_box_eq_qp(&p).unwrap();
        assert!(sol.kkt.max() <= KKT_TOL);

        let free = (0..3).find(|&l| sol.x[l] > 0.1 + 1e-6 && sol.x[l] < 4.0 - 1e-6);
        let l = free.expect("fixture has an interior coordinate");
        let mut x = sol.x.clone();
        x[l] += 0.1;
        assert!(kkt_residual(&p, &x).stationarity > 1e-6);

        let mut x = sol.x.clone();
        x[0] = 4.05;
        assert!((kkt_residual(&p, &x).primal - 0.05).abs() < 1e-12);
    }

    #[test]
    fn paper_exact_drives_nominal_to_twice_s() {
        // one free leader with unconstrained box: stationarity gives delta.alpha = s
        let r = rows([&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let s = Vec3::new(0.8, 0.0, 0.0);
        let p = assemble_problem(&r, &s, b(-100.0, 100.0), 1e-12, ScalingMode::PaperExact).unwrap();
        let sol = solve_box_eq_qp(&p).unwrap();
        let nominal = sol.x[0] + s.x;
        assert!((nominal - 2.0 * s.x).abs() < 1e-9);
        let p = assemble_problem(&r, &s, b(-100.0, 100.0), 1e-12, ScalingMode::Consistent).unwrap();
        let sol = solve_box_eq_qp(&p).unwrap();
        assert!((sol.x[0] + s.x - s.x).abs() < 1e-9);
    }

    #[test]
    fn nnls_simple() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (z, r) = nnls(&a, &DVector::from_column_slice(&[2.0, -1.0]));
        assert_eq!(z.as_slice(), &[2.0, 0.0]);
        assert!((r - 1.0).abs() < 1e-15);
    }
}

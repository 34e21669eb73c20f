//! Scale-factor safety window, per-cell Jacobians, pure-deformation spectra and
//! whole-plan certification.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::eigen::{jacobi_eigen, sym3_eigenvalues};
use crate::error::{Error, Result};
use crate::geometry::{closest_pair, Vec3};
use crate::hierarchy::{forward_pass, AlphaVector, DesiredPositions, LayerWeights};
use crate::qp::{AlphaBounds, PlanStep};
use crate::team::{AgentId, CellId, SafetyParameters, TeamConfiguration};

/// Relative slack applied to the boundary-inclusive comparisons.
pub const CERT_TOL: f64 = 1e-12;

/// `alpha_min = max_j 2(delta + epsilon) / p_min_j`,
/// `alpha_max = (a_max - 2(delta + epsilon)) / a0`.
pub fn safety_window(safety: &SafetyParameters, p_mins: impl IntoIterator<Item = f64>) -> Result<AlphaBounds> {
    let clearance = safety.clearance();
    let alpha_min = p_mins.into_iter().map(|p| clearance / p).fold(f64::NEG_INFINITY, f64::max);
    let alpha_max = (safety.a_max - clearance) / safety.a0;
    if !(alpha_min <= alpha_max) || !(alpha_max > 0.0) {
        return Err(Error::EmptySafetyWindow { alpha_min, alpha_max });
    }
    Ok(AlphaBounds { min: alpha_min, max: alpha_max })
}

pub fn alpha_bounds(team: &TeamConfiguration) -> Result<AlphaBounds> {
    safety_window(&team.safety, team.cells.iter().map(|c| c.p_min))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleJacobian {
    pub cell: CellId,
    pub q: Matrix3<f64>,
    pub b: Vec3,
}

/// Affine map of a cell: `Q a_l = alpha_l a_l` on both boundary vertices, the
/// material unit normal goes to the deformed unit normal, and `b = s`.
pub fn triangle_jacobian(
    team: &TeamConfiguration,
    cell: CellId,
    alpha: &AlphaVector,
    s: &Vec3,
) -> Result<TriangleJacobian> {
    let c = team.cell(cell)?;
    let leaders = team.partition.primary_leaders();
    if alpha.len() != leaders.len() {
        return Err(Error::AlphaLength { expected: leaders.len(), got: alpha.len() });
    }
    let scale_of = |id: AgentId| -> Result<f64> {
        leaders
            .iter()
            .position(|&l| l == id)
            .map(|i| alpha.0[i])
            .ok_or(Error::UnknownCell(cell))
    };
    let (e1, e2) = (team.position(c.vertices[1]), team.position(c.vertices[2]));
    let (d1, d2) = (e1 * scale_of(c.vertices[1])?, e2 * scale_of(c.vertices[2])?);

    let n = e1.cross(&e2);
    let nd = d1.cross(&d2);
    let degenerate = |a: &Vec3, b: &Vec3, x: &Vec3| !(x.norm() > 1e-12 * a.norm() * b.norm());
    if degenerate(&e1, &e2, &n) || degenerate(&d1, &d2, &nd) {
        return Err(Error::DegenerateJacobian(cell));
    }
    let material = Matrix3::from_columns(&[e1, e2, n.normalize()]);
    let deformed = Matrix3::from_columns(&[d1, d2, nd.normalize()]);
    let inv = material.try_inverse().ok_or(Error::DegenerateJacobian(cell))?;
    Ok(TriangleJacobian { cell, q: deformed * inv, b: *s })
}

/// `U = (Q'Q)^(1/2)`, from the Jacobi decomposition of `Q'Q`.
pub fn pure_deformation_matrix(q: &Matrix3<f64>) -> Matrix3<f64> {
    jacobi_eigen(&(q.transpose() * q)).map(|x| x.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationSpectrum {
    pub cell: CellId,
    /// Principal stretches, descending.
    pub eigenvalues: [f64; 3],
    /// `2(delta + epsilon) / p_min`.
    pub bound: f64,
    /// `lambda_3 - bound`.
    pub margin: f64,
}

impl DeformationSpectrum {
    pub fn is_safe(&self) -> bool {
        self.margin >= -CERT_TOL * self.bound.max(1.0)
    }
}

pub fn pure_deformation_spectrum(
    jacobian: &TriangleJacobian,
    p_min: f64,
    safety: &SafetyParameters,
) -> Result<DeformationSpectrum> {
    if !jacobian.q.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("Jacobian"));
    }
    let squares = sym3_eigenvalues(&(jacobian.q.transpose() * jacobian.q));
    let eigenvalues = squares.map(|x| x.max(0.0).sqrt());
    let bound = safety.clearance() / p_min;
    Ok(DeformationSpectrum { cell: jacobian.cell, eigenvalues, bound, margin: eigenvalues[2] - bound })
}

/// Exact minimum distance over all pairs of an id-indexed position list.
pub fn min_pairwise_distance(positions: &[Vec3]) -> Result<(f64, (AgentId, AgentId))> {
    let pts: Vec<(AgentId, Vec3)> = positions.iter().enumerate().map(|(i, p)| (AgentId(i + 1), *p)).collect();
    closest_pair(&pts).ok_or(Error::TooFewPositions(positions.len()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViolationKind {
    /// Smallest principal stretch of a cell below its bound.
    Spectrum(CellId),
    /// Two desired positions closer than `2(delta + epsilon)`.
    Separation(AgentId, AgentId),
    /// A desired position outside the containment radius `a_max - 2(delta + epsilon)`.
    Containment(AgentId),
    /// Two actual positions closer than `2 epsilon`.
    ActualSeparation(AgentId, AgentId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub t: f64,
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} (t = {}): ", self.step, self.t)?;
        match self.kind {
            ViolationKind::Spectrum(c) => write!(f, "cell {c} principal stretch below bound"),
            ViolationKind::Separation(a, b) => write!(f, "desired positions of agents {a} and {b} closer than 2(delta + epsilon)"),
            ViolationKind::Containment(a) => write!(f, "agent {a} outside the containment ball"),
            ViolationKind::ActualSeparation(a, b) => write!(f, "agents {a} and {b} closer than 2 epsilon"),
        }
    }
}

/// Certification of one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCertificate {
    pub t: f64,
    pub spectra: Vec<DeformationSpectrum>,
    pub min_desired_distance: f64,
    pub closest_pair: (AgentId, AgentId),
    /// Largest `|p_i - s|` over agents.
    pub max_radius: f64,
    pub farthest_agent: AgentId,
    pub min_actual_distance: Option<(f64, (AgentId, AgentId))>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub steps: Vec<StepCertificate>,
    pub clearance: f64,
    pub containment_radius: f64,
    pub epsilon: f64,
}

impl CertificationReport {
    fn step_violations(&self, step: usize) -> Vec<Violation> {
        let c = &self.steps[step];
        let mut out = Vec::new();
        let mut push = |kind| out.push(Violation { step, t: c.t, kind });
        for s in &c.spectra {
            if !s.is_safe() {
                push(ViolationKind::Spectrum(s.cell));
            }
        }
        if c.min_desired_distance < self.clearance * (1.0 - CERT_TOL) {
            push(ViolationKind::Separation(c.closest_pair.0, c.closest_pair.1));
        }
        if c.max_radius > self.containment_radius * (1.0 + CERT_TOL) {
            push(ViolationKind::Containment(c.farthest_agent));
        }
        if let Some((d, (a, b))) = c.min_actual_distance {
            if d < 2.0 * self.epsilon {
                push(ViolationKind::ActualSeparation(a, b));
            }
        }
        out
    }

    pub fn violations(&self) -> Vec<Violation> {
        (0..self.steps.len()).flat_map(|i| self.step_violations(i)).collect()
    }

    pub fn first_violation(&self) -> Option<Violation> {
        (0..self.steps.len()).find_map(|i| self.step_violations(i).into_iter().next())
    }

    pub fn is_safe(&self) -> bool {
        self.first_violation().is_none()
    }

    /// Steps whose desired-position separation drops below `2(delta + epsilon)`.
    pub fn separation_flags(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, c)| c.min_desired_distance < self.clearance * (1.0 - CERT_TOL))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn min_margin(&self) -> f64 {
        self.steps
            .iter()
            .flat_map(|c| c.spectra.iter().map(|s| s.margin))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_desired_distance(&self) -> f64 {
        self.steps.iter().map(|c| c.min_desired_distance).fold(f64::INFINITY, f64::min)
    }
}

/// Certifies a plan. Desired positions are recomputed from the schedule when
/// not supplied; actual positions, when given, are checked against `2 epsilon`.
pub fn certify_configuration(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    schedule: &[PlanStep],
    desired: Option<&[DesiredPositions]>,
    actual: Option<&[Vec<Vec3>]>,
) -> Result<CertificationReport> {
    if let Some(d) = desired {
        if d.len() != schedule.len() {
            return Err(Error::TimeGrid(format!(
                "{} desired snapshots for {} schedule samples",
                d.len(),
                schedule.len()
            )));
        }
    }
    if let Some(a) = actual {
        if a.len() != schedule.len() {
            return Err(Error::TimeGrid(format!(
                "{} actual snapshots for {} schedule samples",
                a.len(),
                schedule.len()
            )));
        }
    }
    let steps = schedule
        .par_iter()
        .enumerate()
        .map(|(i, step)| {
            let computed;
            let positions: &DesiredPositions = match desired {
                Some(d) => &d[i],
                None => {
                    computed = forward_pass(team, weights, &step.alpha, &step.s)?;
                    &computed
                }
            };
            certify_step(team, step, positions, actual.map(|a| a[i].as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    let clearance = team.safety.clearance();
    Ok(CertificationReport {
        steps,
        clearance,
        containment_radius: team.safety.a_max - clearance,
        epsilon: team.safety.epsilon,
    })
}

fn certify_step(
    team: &TeamConfiguration,
    step: &PlanStep,
    desired: &[Vec3],
    actual: Option<&[Vec3]>,
) -> Result<StepCertificate> {
    let spectra = team
        .cells
        .iter()
        .map(|cell| {
            let jac = triangle_jacobian(team, cell.id, &step.alpha, &step.s)?;
            pure_deformation_spectrum(&jac, cell.p_min, &team.safety)
        })
        .collect::<Result<Vec<_>>>()?;
    let (min_desired_distance, closest_pair) = min_pairwise_distance(desired)?;
    let (farthest, max_radius) = desired
        .iter()
        .map(|p| (p - step.s).norm())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    let min_actual_distance = actual.map(min_pairwise_distance).transpose()?;
    Ok(StepCertificate {
        t: step.t,
        spectra,
        min_desired_distance,
        closest_pair,
        max_radius,
        farthest_agent: AgentId(farthest + 1),
        min_actual_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64, epsilon: f64, a_max: f64, a0: f64) -> SafetyParameters {
        SafetyParameters { delta, epsilon, a_max, a0 }
    }

    #[test]
    fn window_arithmetic() {
        let w = safety_window(&params(0.1, 0.4, 101.0, 20.0), [2.0; 6]).unwrap();
        assert!((w.min - 0.5).abs() < 1e-15);
        assert!((w.max - 5.0).abs() < 1e-15);
        let err = safety_window(&params(0.1, 0.4, 1.0, 20.0), [2.0; 6]).unwrap_err();
        assert!(err.to_string().contains("safety window empty"));
    }

    #[test]
    fn rotation_and_diagonal_spectra() {
        let safety = params(0.1, 0.4, 101.0, 20.0);
        let jac = |q| TriangleJacobian { cell: CellId(1), q, b: Vec3::zeros() };
        let d = Matrix3::from_diagonal(&Vec3::new(4.0, 9.0, 1.0));
        let s = pure_deformation_spectrum(&jac(d), 2.0, &safety).unwrap();
        assert_eq!(s.eigenvalues, [9.0, 4.0, 1.0]);
        assert_eq!(s.bound, 0.5);
        assert_eq!(s.margin, 0.5);
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let s = pure_deformation_spectrum(&jac(r), 2.0, &safety).unwrap();
        for l in s.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
        let mut bad = d;
        bad[(0, 1)] = f64::NAN;
        assert!(matches!(pure_deformation_spectrum(&jac(bad), 2.0, &safety), Err(Error::NonFinite(_))));
    }

    #[test]
    fn pure_deformation_squares_back() {
        let q = Matrix3::new(1.2, 0.3, -0.4, 0.1, 0.9, 0.2, -0.5, 0.4, 1.7);
        let u = pure_deformation_matrix(&q);
        let c = q.transpose() * q;
        assert!((u * u - c).amax() <= 1e-10 * c.amax());
        assert!((u - u.transpose()).amax() < 1e-15);
    }

    #[test]
    fn min_distance_cases() {
        let pts = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)];
        assert_eq!(min_pairwise_distance(&pts).unwrap(), (1.0, (AgentId(1), AgentId(2))));
        let pts = [Vec3::new(1.0, 2.0, 3.0), Vec3::new(5.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0)];
        assert_eq!(min_pairwise_distance(&pts).unwrap(), (0.0, (AgentId(1), AgentId(3))));
        assert!(matches!(min_pairwise_distance(&pts[..1]), Err(Error::TooFewPositions(1))));
    }
}

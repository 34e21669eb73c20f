//! Reference trajectories `s(t)` for the team's nominal position.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// `[0.4 w t, 0.4 sin(pi w t), 0.6 cos(pi w t)]`.
pub fn helix_reference(t: f64, omega: f64) -> Vec3 {
    Helix::standard(omega).position(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Helix {
    /// Angular-rate parameter, 1/s.
    pub omega: f64,
    /// Amplitudes of the x ramp and the y/z oscillations, meters.
    pub amplitude: [f64; 3],
}

impl Helix {
    pub fn standard(omega: f64) -> Self {
        Self { omega, amplitude: [0.4, 0.4, 0.6] }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let [ax, ay, az] = self.amplitude;
        let phase = PI * self.omega * t;
        Vec3::new(ax * self.omega * t, ay * phase.sin(), az * phase.cos())
    }
}

/// Time-stamped waypoints joined by Catmull-Rom cubic segments (C1).
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointSpline {
    times: Vec<f64>,
    points: Vec<Vec3>,
}

impl WaypointSpline {
    pub fn new(waypoints: Vec<(f64, Vec3)>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Schema("waypoint spline needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Schema("waypoint times must be strictly increasing".into()));
        }
        let (times, points) = waypoints.into_iter().unzip();
        Ok(Self { times, points })
    }

    fn tangent(&self, i: usize) -> Vec3 {
        let n = self.points.len();
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        if a == b {
            return Vec3::zeros();
        }
        (self.points[b] - self.points[a]) / (self.times[b] - self.times[a])
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let n = self.times.len();
        if t <= self.times[0] || n == 1 {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let h = self.times[i + 1] - self.times[i];
        let u = (t - self.times[i]) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        self.points[i] * h00
            + self.tangent(i) * (h10 * h)
            + self.points[i + 1] * h01
            + self.tangent(i + 1) * (h11 * h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryKind {
    Helix(Helix),
    Spline(WaypointSpline),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub kind: TrajectoryKind,
    /// Duration `T`, seconds.
    pub duration: f64,
}

impl ReferenceTrajectory {
    pub fn helix(omega: f64, duration: f64) -> Self {
        Self { kind: TrajectoryKind::Helix(Helix::standard(omega)), duration }
    }

    /// A trajectory that stays at `s0`.
    pub fn constant(s0: Vec3, duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Spline(WaypointSpline { times: vec![0.0], points: vec![s0] }),
            duration,
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match &self.kind {
            TrajectoryKind::Helix(h) => h.position(t),
            TrajectoryKind::Spline(s) => s.position(t),
        }
    }
}

/// `t_k = k dt` for `k = 0..=round(T / dt)`; `dt` must divide `T` within rounding.
pub fn time_grid(dt: f64, duration: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonPositiveStep(dt));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::TimeGrid(format!("duration must be nonnegative, got {duration}")));
    }
    let steps = (duration / dt).round();
    if (steps * dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::TimeGrid(format!("dt = {dt} does not divide T = {duration}")));
    }
    Ok((0..=steps as usize).map(|k| k as f64 * dt).collect())
}

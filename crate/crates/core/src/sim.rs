//! Closed-loop desk-scale simulation: plan, forward pass, PD tracking on a
//! point-mass double integrator.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hierarchy::{forward_pass, DesiredPositions, LayerWeights};
use crate::qp::{PlanStep, QpTemplate};
use crate::safety::min_pairwise_distance;
use crate::team::{AgentId, TeamConfiguration};
use crate::trajectory::{time_grid, ReferenceTrajectory};

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl AgentState {
    pub fn at_rest(position: Vec3) -> Self {
        Self { position, velocity: Vec3::zeros() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerGains {
    /// Position gain, 1/s^2.
    pub kp: f64,
    /// Velocity gain, 1/s.
    pub kd: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { kp: 4.0, kd: 4.0 }
    }
}

impl ControllerGains {
    pub fn new(kp: f64, kd: f64) -> Result<Self> {
        if !(kp > 0.0 && kd > 0.0) {
            return Err(Error::Schema(format!("controller gains must be positive (kp = {kp}, kd = {kd})")));
        }
        Ok(Self { kp, kd })
    }

    /// `kd^2 >= 4 kp`: the error dynamics do not oscillate.
    pub fn is_critically_or_overdamped(&self) -> bool {
        self.kd * self.kd >= 4.0 * self.kp
    }
}

/// Semi-implicit Euler step with acceleration `kp (p_des - r) + kd (v_des - v)`.
pub fn step_agent(
    state: &AgentState,
    desired_position: &Vec3,
    desired_velocity: &Vec3,
    gains: &ControllerGains,
    dt: f64,
) -> Result<AgentState> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    let accel = (desired_position - state.position) * gains.kp + (desired_velocity - state.velocity) * gains.kd;
    let velocity = state.velocity + accel * dt;
    Ok(AgentState { position: state.position + velocity * dt, velocity })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SimMode {
    /// Actual positions are the desired positions.
    OpenLoop,
    #[default]
    ClosedLoop,
}

/// Where agents start in closed-loop mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialState {
    /// At rest on the material configuration translated by `s(0)`.
    #[default]
    Material,
    /// On the first desired positions with the first desired velocities.
    Desired,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub gains: ControllerGains,
    pub mode: SimMode,
    pub initial: InitialState,
    /// Tracking errors above `delta` are flagged only after this time, seconds.
    pub transient: f64,
    /// Abort when the tracking error exceeds this after the transient, meters.
    pub divergence_limit: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            gains: ControllerGains::default(),
            mode: SimMode::ClosedLoop,
            initial: InitialState::Material,
            transient: 10.0,
            divergence_limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    pub times: Vec<f64>,
    pub plan: Vec<PlanStep>,
    /// Per step, id-indexed.
    pub desired: Vec<DesiredPositions>,
    pub actual: Vec<Vec<Vec3>>,
    /// Per-step minimum pairwise distance of actual positions.
    pub min_distance: Vec<f64>,
    /// Per-step maximum tracking error over agents.
    pub max_tracking_error: Vec<f64>,
    /// Steps after the transient where the tracking error exceeds `delta`.
    pub delta_exceedances: Vec<usize>,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Runs the plan/track loop over `0..=T` with step `dt`.
pub fn run_simulation(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    planner: &QpTemplate,
    trajectory: &ReferenceTrajectory,
    settings: &SimSettings,
) -> Result<SimLog> {
    let dt = settings.dt;
    let times = time_grid(dt, trajectory.duration)?;
    let plan = planner.schedule(trajectory, &times)?;
    let desired = plan
        .iter()
        .map(|step| forward_pass(team, weights, &step.alpha, &step.s))
        .collect::<Result<Vec<_>>>()?;
    let velocities = desired_velocities(&desired, dt);

    let actual = match settings.mode {
        SimMode::OpenLoop => desired.clone(),
        SimMode::ClosedLoop => {
            let mut states: Vec<AgentState> = match settings.initial {
                InitialState::Material => {
                    let s0 = plan[0].s;
                    team.positions.iter().map(|a| AgentState::at_rest(a + s0)).collect()
                }
                InitialState::Desired => desired[0]
                    .iter()
                    .zip(&velocities[0])
                    .map(|(p, v)| AgentState { position: *p, velocity: *v })
                    .collect(),
            };
            let mut actual = Vec::with_capacity(times.len());
            actual.push(states.iter().map(|s| s.position).collect::<Vec<_>>());
            for k in 1..times.len() {
                for (i, state) in states.iter_mut().enumerate() {
                    *state = step_agent(state, &desired[k - 1][i], &velocities[k - 1][i], &settings.gains, dt)?;
                }
                let positions: Vec<Vec3> = states.iter().map(|s| s.position).collect();
                if let Some(limit) = settings.divergence_limit {
                    let err = max_error(&positions, &desired[k]).0;
                    if times[k] > settings.transient && err > limit {
                        return Err(Error::Diverged { step: k, t: times[k], error: err, limit });
                    }
                }
                actual.push(positions);
            }
            actual
        }
    };

    let max_tracking_error: Vec<f64> = actual.iter().zip(&desired).map(|(a, d)| max_error(a, d).0).collect();
    let min_distance = actual
        .iter()
        .map(|a| min_pairwise_distance(a).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    let delta = team.safety.delta;
    let delta_exceedances = match settings.mode {
        SimMode::OpenLoop => Vec::new(),
        SimMode::ClosedLoop => (0..times.len())
            .filter(|&k| times[k] > settings.transient && max_tracking_error[k] > delta)
            .collect(),
    };
    Ok(SimLog { times, plan, desired, actual, min_distance, max_tracking_error, delta_exceedances })
}

/// Forward differences, with a backward difference at the last sample.
fn desired_velocities(desired: &[DesiredPositions], dt: f64) -> Vec<Vec<Vec3>> {
    let n = desired.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k + 1 < n { (k, k + 1) } else if k > 0 { (k - 1, k) } else { (k, k) };
            desired[a].iter().zip(&desired[b]).map(|(p, q)| (q - p) / dt).collect()
        })
        .collect()
}

fn max_error(actual: &[Vec3], desired: &[Vec3]) -> (f64, usize) {
    actual
        .iter()
        .zip(desired)
        .map(|(a, d)| (a - d).norm())
        .enumerate()
        .fold((0.0, 0), |acc, (i, e)| if e > acc.0 { (e, i) } else { acc })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingSummary {
    pub per_step: Vec<f64>,
    pub max: f64,
    pub step: usize,
    pub agent: AgentId,
}

impl TrackingSummary {
    /// Largest per-step error strictly after time `t0`.
    pub fn max_after(&self, times: &[f64], t0: f64) -> f64 {
        self.per_step
            .iter()
            .zip(times)
            .filter(|(_, &t)| t > t0)
            .map(|(e, _)| *e)
            .fold(0.0, f64::max)
    }
}

/// Per-step maxima of `|r_i - p_i|` and the global maximum's (step, agent).
pub fn tracking_error(log: &SimLog) -> Result<TrackingSummary> {
    if log.is_empty() {
        return Err(Error::TimeGrid("empty simulation log".into()));
    }
    let mut per_step = Vec::with_capacity(log.len());
    let (mut max, mut step, mut agent) = (f64::NEG_INFINITY, 0, 0);
    for (k, (a, d)) in log.actual.iter().zip(&log.desired).enumerate() {
        let (e, i) = max_error(a, d);
        per_step.push(e);
        if e > max {
            (max, step, agent) = (e, k, i);
        }
    }
    Ok(TrackingSummary { per_step, max, step, agent: AgentId(agent + 1) })
}

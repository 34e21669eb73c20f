//! Scenario documents: a versioned TOML schema describing the team, safety
//! parameters, weights, planner, reference trajectory and simulation.
//!
//! ```toml
//! schema = "mlcd-scenario/1"
//! name = "square"
//!
//! [team]
//! agents = 9
//! layers = ["1-5", "6-9"]          # first layer in fan order, core last
//! positions = [{ id = 1, at = [2.0, 0.0, 0.0] }, ...]
//!
//! [safety]
//! delta = 0.1
//! epsilon = 0.4
//! a_max = 20.0
//!
//! [trajectory]
//! kind = "helix"
//! omega = 0.01
//! duration = 100.0
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hierarchy::{build_layer_weights, compose_delta_rows, layer_weights_from_matrices, LayerWeights, OutputAveraging};
use crate::qp::{AlphaBounds, QpTemplate, ScalingMode, DEFAULT_ZETA, KKT_TOL};
use crate::safety::alpha_bounds;
use crate::sim::{ControllerGains, InitialState, SimMode, SimSettings, DEFAULT_DT};
use crate::team::{AgentId, LayerPartition, SafetyInput, TeamConfiguration};
use crate::trajectory::{Helix, ReferenceTrajectory, TrajectoryKind, WaypointSpline};

pub const SCHEMA: &str = "mlcd-scenario/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema: String,
    pub name: String,
    pub team: TeamSection,
    pub safety: SafetySection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub qp: QpSection,
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamSection {
    pub agents: usize,
    /// Defaults to the last id of the first layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<usize>,
    /// Id lists such as `"1-7"` or `"1,3,5-7"`, one per layer.
    pub layers: Vec<String>,
    pub positions: Vec<PositionEntry>,
    /// Explicit cell memberships; computed from geometry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionEntry {
    pub id: usize,
    pub at: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySection {
    pub delta: f64,
    pub epsilon: f64,
    pub a_max: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsMode {
    #[default]
    Auto,
    Explicit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingSetting {
    #[default]
    Nested,
    NewOnly,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(default)]
    pub mode: WeightsMode,
    #[serde(default)]
    pub average: AveragingSetting,
    /// Row-major matrices for layers `2..=p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSetting {
    #[default]
    Consistent,
    PaperExact,
}

impl From<ModeSetting> for ScalingMode {
    fn from(m: ModeSetting) -> Self {
        match m {
            ModeSetting::Consistent => ScalingMode::Consistent,
            ModeSetting::PaperExact => ScalingMode::PaperExact,
        }
    }
}

/// How the QP box on `alpha` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMode {
    /// `[alpha_min, alpha_max]` as written.
    Fixed,
    /// The computed safety window.
    #[default]
    Safety,
    /// The written range intersected with the safety window.
    Clamped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpSection {
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default)]
    pub mode: ModeSetting,
    #[serde(default)]
    pub bounds: BoundsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_zeta() -> f64 {
    DEFAULT_ZETA
}

fn default_tolerance() -> f64 {
    KKT_TOL
}

impl Default for QpSection {
    fn default() -> Self {
        Self {
            zeta: DEFAULT_ZETA,
            mode: ModeSetting::Consistent,
            bounds: BoundsMode::Safety,
            alpha_min: None,
            alpha_max: None,
            tolerance: KKT_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKindSetting {
    Helix,
    Spline,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointEntry {
    pub t: f64,
    pub at: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub kind: TrajectoryKindSetting,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<WaypointEntry>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSetting {
    #[default]
    Material,
    Desired,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_gain")]
    pub kp: f64,
    #[serde(default = "default_gain")]
    pub kd: f64,
    #[serde(default)]
    pub open_loop: bool,
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub initial: InitialSetting,
    /// Closed-loop runs abort when the tracking error exceeds this multiple of `delta`.
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_gain() -> f64 {
    4.0
}

fn default_transient() -> f64 {
    10.0
}

fn default_divergence() -> f64 {
    100.0
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            kp: 4.0,
            kd: 4.0,
            open_loop: false,
            transient: 10.0,
            initial: InitialSetting::Material,
            divergence_factor: 100.0,
        }
    }
}

/// A resolved scenario: validated team, weights and a ready planner.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub team: TeamConfiguration,
    pub weights: Vec<LayerWeights>,
    pub averaging: OutputAveraging,
    pub planner: QpTemplate,
    pub trajectory: ReferenceTrajectory,
    pub sim: SimSettings,
    pub document: ScenarioDocument,
}

impl ScenarioDocument {
    pub fn parse(source: &str) -> Result<Self> {
        let doc: ScenarioDocument = toml::from_str(source).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.schema != SCHEMA {
            return Err(Error::Schema(format!("unsupported schema tag {:?}, expected {SCHEMA:?}", doc.schema)));
        }
        Ok(doc)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn team(&self) -> Result<TeamConfiguration> {
        let t = &self.team;
        let layers = t
            .layers
            .iter()
            .map(|s| parse_id_list(s))
            .collect::<Result<Vec<_>>>()?;
        let first = layers.first().ok_or_else(|| Error::Schema("team.layers is empty".into()))?;
        let core = match t.core {
            Some(c) => AgentId(c),
            None => *first.last().ok_or(Error::EmptyLayer(1))?,
        };
        let partition = LayerPartition::new(layers, core);
        if t.positions.len() != t.agents {
            return Err(Error::Schema(format!(
                "team.agents = {} but {} positions are given",
                t.agents,
                t.positions.len()
            )));
        }
        let positions = t.positions.iter().map(|p| (AgentId(p.id), Vec3::from(p.at))).collect();
        let members = t
            .members
            .as_ref()
            .map(|m| m.iter().map(|cell| cell.iter().map(|&i| AgentId(i)).collect()).collect());
        let safety = SafetyInput { delta: self.safety.delta, epsilon: self.safety.epsilon, a_max: self.safety.a_max };
        TeamConfiguration::new(partition, positions, safety, members)
    }

    pub fn trajectory(&self) -> Result<ReferenceTrajectory> {
        let tr = &self.trajectory;
        let kind = match tr.kind {
            TrajectoryKindSetting::Helix => {
                let omega = tr.omega.ok_or_else(|| Error::Schema("helix trajectory needs omega".into()))?;
                let mut helix = Helix::standard(omega);
                if let Some(a) = tr.amplitude {
                    helix.amplitude = a;
                }
                TrajectoryKind::Helix(helix)
            }
            TrajectoryKindSetting::Spline => {
                let w = tr
                    .waypoints
                    .as_ref()
                    .ok_or_else(|| Error::Schema("spline trajectory needs waypoints".into()))?;
                TrajectoryKind::Spline(WaypointSpline::new(w.iter().map(|p| (p.t, Vec3::from(p.at))).collect())?)
            }
        };
        Ok(ReferenceTrajectory { kind, duration: tr.duration })
    }

    pub fn sim_settings(&self) -> Result<SimSettings> {
        let s = &self.sim;
        Ok(SimSettings {
            dt: s.dt,
            gains: ControllerGains::new(s.kp, s.kd)?,
            mode: if s.open_loop { SimMode::OpenLoop } else { SimMode::ClosedLoop },
            initial: match s.initial {
                InitialSetting::Material => InitialState::Material,
                InitialSetting::Desired => InitialState::Desired,
            },
            transient: s.transient,
            divergence_limit: Some(s.divergence_factor * self.safety.delta),
        })
    }

    /// The QP box for `team` according to the `qp` section.
    pub fn bounds(&self, team: &TeamConfiguration) -> Result<AlphaBounds> {
        let q = &self.qp;
        let written = || -> Result<AlphaBounds> {
            match (q.alpha_min, q.alpha_max) {
                (Some(min), Some(max)) => AlphaBounds::new(min, max),
                _ => Err(Error::Schema("qp.alpha_min and qp.alpha_max are required for this bounds mode".into())),
            }
        };
        match q.bounds {
            BoundsMode::Fixed => written(),
            BoundsMode::Safety => alpha_bounds(team),
            BoundsMode::Clamped => {
                let window = alpha_bounds(team)?;
                let given = written()?;
                given.intersect(&window).ok_or(Error::EmptySafetyWindow {
                    alpha_min: given.min.max(window.min),
                    alpha_max: given.max.min(window.max),
                })
            }
        }
    }

    pub fn resolve(self) -> Result<Scenario> {
        let team = self.team()?;
        let weights = match self.weights.mode {
            WeightsMode::Auto => build_layer_weights(&team)?,
            WeightsMode::Explicit => {
                let raw = self
                    .weights
                    .matrices
                    .as_ref()
                    .ok_or_else(|| Error::Schema("explicit weights need weights.matrices".into()))?;
                let matrices = raw.iter().map(|m| matrix_from_rows(m)).collect::<Result<Vec<_>>>()?;
                layer_weights_from_matrices(&team, matrices)?
            }
        };
        let averaging = match self.weights.average {
            AveragingSetting::Nested => OutputAveraging::Nested,
            AveragingSetting::NewOnly => OutputAveraging::NewAgentsOnly,
        };
        let rows = compose_delta_rows(&team, &weights, averaging);
        let bounds = self.bounds(&team)?;
        let planner = QpTemplate::new(rows, bounds, self.qp.zeta, self.qp.mode.into())?.with_tolerance(self.qp.tolerance)?;
        let trajectory = self.trajectory()?;
        let sim = self.sim_settings()?;
        Ok(Scenario { name: self.name.clone(), team, weights, averaging, planner, trajectory, sim, document: self })
    }
}

impl Scenario {
    pub fn from_str(source: &str) -> Result<Self> {
        ScenarioDocument::parse(source)?.resolve()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }
}

/// Parses a scenario document and returns its validated team.
pub fn load_configuration(source: &str) -> Result<TeamConfiguration> {
    ScenarioDocument::parse(source)?.team()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidWeights("ragged weight matrix".into()));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

/// Parses `"1-7"`, `"8,10,12-13"` and the like, preserving written order.
pub fn parse_id_list(s: &str) -> Result<Vec<AgentId>> {
    let bad = || Error::Schema(format!("bad id list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend((a..=b).map(AgentId));
            }
            None => out.push(AgentId(part.parse().map_err(|_| bad())?)),
        }
    }
    Ok(out)
}

/// Primary-leader material positions of the 67-agent helix team, in fan order
/// with the core last.
pub const HELIX67_LEADERS: [[f64; 3]; 7] = [
    [20.0, 0.0, -1.0],
    [10.0, 10.0, 1.0],
    [-10.0, 10.0, 1.0],
    [-20.0, 0.0, -1.0],
    [-10.0, -10.0, 1.0],
    [10.0, -10.0, 1.0],
    [0.0, 0.0, 0.0],
];

/// The 67-agent helix scenario.
///
/// Each of the six fan cells carries one interior leader at its centroid and
/// nine followers on the remaining interior points of the sixth-order
/// barycentric grid, so every cell's members are spaced one sixth of an edge
/// apart.
pub fn helix67() -> ScenarioDocument {
    let a: Vec<Vec3> = HELIX67_LEADERS.iter().map(|p| Vec3::from(*p)).collect();
    let mut positions: Vec<PositionEntry> =
        a.iter().enumerate().map(|(i, p)| PositionEntry { id: i + 1, at: (*p).into() }).collect();
    let grid = |j: usize, wj: f64, wk: f64| a[j] * (wj / 6.0) + a[(j + 1) % 6] * (wk / 6.0);
    for j in 0..6 {
        positions.push(PositionEntry { id: 8 + j, at: grid(j, 2.0, 2.0).into() });
    }
    let mut id = 14;
    for j in 0..6 {
        for wj in 1..=4 {
            for wk in 1..=(5 - wj) {
                if (wj, wk) == (2, 2) {
                    continue;
                }
                positions.push(PositionEntry { id, at: grid(j, wj as f64, wk as f64).into() });
                id += 1;
            }
        }
    }
    ScenarioDocument {
        schema: SCHEMA.into(),
        name: "helix67".into(),
        team: TeamSection {
            agents: 67,
            core: Some(7),
            layers: vec!["1-7".into(), "8-13".into(), "14-67".into()],
            positions,
            members: None,
        },
        safety: SafetySection { delta: 0.1, epsilon: 0.4, a_max: 102.0 },
        weights: WeightsSection::default(),
        qp: QpSection {
            bounds: BoundsMode::Clamped,
            alpha_min: Some(0.6),
            alpha_max: Some(5.0),
            ..QpSection::default()
        },
        trajectory: TrajectorySection {
            kind: TrajectoryKindSetting::Helix,
            duration: 1000.0,
            omega: Some(0.01),
            amplitude: None,
            waypoints: None,
        },
        sim: SimSection::default(),
    }
}

/// Resolves a built-in scenario name.
pub fn builtin(name: &str) -> Option<ScenarioDocument> {
    match name {
        "helix67" => Some(helix67()),
        _ => None,
    }
}

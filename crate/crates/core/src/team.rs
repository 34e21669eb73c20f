//! Static structure of an agent team: layer partition, material positions,
//! fan triangulation of the leading polygon and safety parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{closest_pair, PlaneFrame, Vec3};

/// Material (reference) position of an agent, in meters.
pub type MaterialPosition = Vec3;

/// One-based agent identifier; valid teams use exactly the ids `1..=N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

impl AgentId {
    /// Zero-based slot in id-indexed vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One-based triangle cell identifier in `1..=n_pl-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Disjoint new-agent sets per layer. The nested sets `W_k` are the unions of
/// the first `k` entries.
///
/// `layers[0]` is ordered boundary leaders first (in fan order) with the core
/// last, which is also the order of the scale factors in the QP.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPartition {
    pub layers: Vec<Vec<AgentId>>,
    pub core: AgentId,
}

impl LayerPartition {
    /// Builds a partition, moving the core to the end of the first layer and
    /// sorting deeper layers by id.
    pub fn new(mut layers: Vec<Vec<AgentId>>, core: AgentId) -> Self {
        if let Some(first) = layers.first_mut() {
            if let Some(pos) = first.iter().position(|&id| id == core) {
                let c = first.remove(pos);
                first.push(c);
            }
        }
        for layer in layers.iter_mut().skip(1) {
            layer.sort();
        }
        Self { layers, core }
    }

    /// Number of hidden layers `p`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn primary_leaders(&self) -> &[AgentId] {
        &self.layers[0]
    }

    pub fn n_pl(&self) -> usize {
        self.layers[0].len()
    }

    pub fn boundary_leaders(&self) -> &[AgentId] {
        let w1 = &self.layers[0];
        &w1[..w1.len().saturating_sub(1)]
    }

    /// New agents of layer `k` (one-based).
    pub fn new_agents(&self, k: usize) -> &[AgentId] {
        &self.layers[k - 1]
    }

    /// Nested layer `W_k` (one-based): all agents of layers `1..=k`, in
    /// layer order.
    pub fn nested(&self, k: usize) -> Vec<AgentId> {
        self.layers[..k].iter().flatten().copied().collect()
    }

    pub fn agent_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// A fan triangle: the core plus two adjacent boundary leaders.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleCell {
    pub id: CellId,
    /// `(core, boundary_j, boundary_j+1)`.
    pub vertices: [AgentId; 3],
    pub members: Vec<AgentId>,
    /// Minimum pairwise material separation among members, meters.
    pub p_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyParameters {
    /// Tracking-error bound, meters.
    pub delta: f64,
    /// Agent bounding-ball radius, meters.
    pub epsilon: f64,
    /// Containment-ball radius, meters.
    pub a_max: f64,
    /// Boundary-leader reference magnitude, meters.
    pub a0: f64,
}

impl SafetyParameters {
    /// `2 (delta + epsilon)`: the separation every pair of desired positions must keep.
    pub fn clearance(&self) -> f64 {
        2.0 * (self.delta + self.epsilon)
    }
}

#[derive(Clone, Debug)]
pub struct TeamConfiguration {
    pub agent_count: usize,
    pub partition: LayerPartition,
    /// Material positions indexed by `AgentId::index`.
    pub positions: Vec<MaterialPosition>,
    pub cells: Vec<TriangleCell>,
    pub safety: SafetyParameters,
}

/// Safety inputs as they appear in a scenario; `a0` is derived from the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyInput {
    pub delta: f64,
    pub epsilon: f64,
    pub a_max: f64,
}

impl TeamConfiguration {
    /// Assembles and validates a team. Cells are the fan triangulation around
    /// the core; when `members` is `None` every agent joins each cell whose
    /// projected containment test it passes.
    pub fn new(
        partition: LayerPartition,
        positions: Vec<(AgentId, MaterialPosition)>,
        safety: SafetyInput,
        members: Option<Vec<Vec<AgentId>>>,
    ) -> Result<Self> {
        if let Some(k) = partition.layers.iter().position(Vec::is_empty) {
            return Err(Error::EmptyLayer(k + 1));
        }
        let mut by_id = BTreeMap::new();
        for (id, p) in positions {
            if by_id.insert(id, p).is_some() {
                return Err(Error::DuplicateAgent(id));
            }
        }
        let n = by_id.len();
        if let Some((&id, _)) = by_id.iter().find(|(id, _)| id.0 == 0 || id.0 > n) {
            return Err(Error::Schema(format!(
                "agent id {id} outside 1..={n} (ids must be contiguous)"
            )));
        }
        let positions: Vec<Vec3> = by_id.into_values().collect();
        if let Some(p) = positions.get(partition.core.0.wrapping_sub(1)) {
            if *p != Vec3::zeros() {
                return Err(Error::CoreNotAtOrigin(partition.core));
            }
        }

        let a0 = partition
            .boundary_leaders()
            .iter()
            .filter_map(|id| positions.get(id.index()))
            .map(|p| p.norm())
            .fold(0.0, f64::max);

        let mut team = TeamConfiguration {
            agent_count: n,
            partition,
            positions,
            cells: Vec::new(),
            safety: SafetyParameters {
                delta: safety.delta,
                epsilon: safety.epsilon,
                a_max: safety.a_max,
                a0,
            },
        };
        team.cells = fan_cells(&team);
        match members {
            Some(m) => {
                if m.len() != team.cells.len() {
                    return Err(Error::Schema(format!(
                        "{} member lists given for {} cells",
                        m.len(),
                        team.cells.len()
                    )));
                }
                for (cell, mut members) in team.cells.iter_mut().zip(m) {
                    members.sort();
                    members.dedup();
                    cell.members = members;
                }
            }
            None => assign_members(&mut team),
        }

        let report = validate_team(&team);
        if !report.is_empty() {
            return Err(Error::InvalidTeam(report));
        }
        for j in 0..team.cells.len() {
            team.cells[j].p_min = triangle_min_separation(&team, team.cells[j].id)?;
        }
        Ok(team)
    }

    pub fn position(&self, id: AgentId) -> MaterialPosition {
        self.positions[id.index()]
    }

    pub fn cell(&self, id: CellId) -> Result<&TriangleCell> {
        id.0.checked_sub(1)
            .and_then(|j| self.cells.get(j))
            .ok_or(Error::UnknownCell(id))
    }

    /// Plane frame of a cell's two boundary-vertex material vectors.
    pub fn cell_frame(&self, id: CellId) -> Result<PlaneFrame> {
        let cell = self.cell(id)?;
        PlaneFrame::new(self.position(cell.vertices[1]), self.position(cell.vertices[2]))
            .ok_or(Error::DegenerateCell(id))
    }

    /// All agent ids in ascending order.
    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (1..=self.agent_count).map(AgentId)
    }
}

fn fan_cells(team: &TeamConfiguration) -> Vec<TriangleCell> {
    let core = team.partition.core;
    let boundary = team.partition.boundary_leaders();
    let nb = boundary.len();
    (0..nb)
        .map(|j| TriangleCell {
            id: CellId(j + 1),
            vertices: [core, boundary[j], boundary[(j + 1) % nb]],
            members: Vec::new(),
            p_min: 0.0,
        })
        .collect()
}

fn assign_members(team: &mut TeamConfiguration) {
    let frames: Vec<Option<PlaneFrame>> = team
        .cells
        .iter()
        .map(|c| {
            let e1 = team.positions.get(c.vertices[1].index())?;
            let e2 = team.positions.get(c.vertices[2].index())?;
            PlaneFrame::new(*e1, *e2)
        })
        .collect();
    for (cell, frame) in team.cells.iter_mut().zip(&frames) {
        let Some(frame) = frame else { continue };
        cell.members = team
            .positions
            .iter()
            .enumerate()
            .filter(|(_, p)| frame.contains(p))
            .map(|(i, _)| AgentId(i + 1))
            .collect();
    }
}

/// Lowest-id cell whose projected containment test accepts `point`.
pub fn enclosing_triangle(team: &TeamConfiguration, point: &MaterialPosition) -> Result<CellId> {
    for cell in &team.cells {
        let frame = team.cell_frame(cell.id)?;
        if frame.contains(point) {
            return Ok(cell.id);
        }
    }
    Err(Error::OutsidePolygon)
}

/// Minimum pairwise material distance among a cell's members.
pub fn triangle_min_separation(team: &TeamConfiguration, cell: CellId) -> Result<f64> {
    let c = team.cell(cell)?;
    if c.members.len() < 2 {
        return Err(Error::TooFewMembers(cell));
    }
    let pts: Vec<(AgentId, Vec3)> = c.members.iter().map(|&id| (id, team.position(id))).collect();
    let (d, (a, b)) = closest_pair(&pts).ok_or(Error::TooFewMembers(cell))?;
    if !(d > 0.0) {
        return Err(Error::CoincidentAgents(a, b, cell));
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueKind {
    PartitionOverlap,
    UnknownAgent,
    MissingAgent,
    EmptyLayer,
    TooFewPrimaryLeaders,
    CoreNotPrimary,
    PositionCount,
    NonFinitePosition,
    CoreNotAtOrigin,
    BoundaryLeaderAtOrigin,
    SafetyParameters,
    DegenerateCell,
    CellVertexNotPrimary,
    UncoveredAgent,
    MemberOutsideCell,
    NonPositiveSeparation,
    UnequalLeaderMagnitudes,
    MemberOffPlane,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub kind: IssueKind,
    pub message: String,
}

/// Structural problems found by [`validate_team`]. Warnings do not make a team
/// ill-formed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.violations.iter().chain(&self.warnings).any(|i| i.kind == kind)
    }

    fn violation(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.violations.push(Issue { kind, message: message.into() });
    }

    fn warning(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.warnings.push(Issue { kind, message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.violations {
            writeln!(f, "  error: {}", i.message)?;
        }
        for i in &self.warnings {
            writeln!(f, "  warning: {}", i.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a team and reports all violations.
pub fn validate_team(team: &TeamConfiguration) -> ValidationReport {
    use IssueKind::*;
    let mut r = ValidationReport::default();
    let n = team.agent_count;
    let part = &team.partition;

    let mut seen: BTreeMap<AgentId, usize> = BTreeMap::new();
    for (k, layer) in part.layers.iter().enumerate() {
        if layer.is_empty() {
            r.violation(EmptyLayer, format!("layer {} is empty", k + 1));
        }
        for &id in layer {
            if id.0 == 0 || id.0 > n {
                r.violation(UnknownAgent, format!("layer {} lists unknown agent {id}", k + 1));
            }
            if let Some(prev) = seen.insert(id, k + 1) {
                r.violation(
                    PartitionOverlap,
                    format!("partition overlap: agent {id} in layers {prev} and {}", k + 1),
                );
            }
        }
    }
    for id in team.agents() {
        if !seen.contains_key(&id) {
            r.violation(MissingAgent, format!("agent {id} belongs to no layer"));
        }
    }
    if part.layers.is_empty() {
        r.violation(EmptyLayer, "no layers");
        return r;
    }
    if !part.primary_leaders().contains(&part.core) {
        r.violation(CoreNotPrimary, format!("core {} is not in the first layer", part.core));
    }
    if part.n_pl() < 4 {
        r.violation(
            TooFewPrimaryLeaders,
            format!("first layer needs at least 3 boundary leaders plus the core, has {}", part.n_pl()),
        );
    }
    if team.positions.len() != n {
        r.violation(
            PositionCount,
            format!("{} material positions for {n} agents", team.positions.len()),
        );
        return r;
    }
    for (i, p) in team.positions.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            r.violation(NonFinitePosition, format!("agent {} has a non-finite position", i + 1));
        }
    }
    if let Some(p) = team.positions.get(part.core.0.wrapping_sub(1)) {
        if *p != Vec3::zeros() {
            r.violation(CoreNotAtOrigin, "core must be at origin");
        }
    }

    let mut magnitudes = Vec::new();
    for &id in part.boundary_leaders() {
        if let Some(p) = team.positions.get(id.0.wrapping_sub(1)) {
            let m = p.norm();
            if m == 0.0 {
                r.violation(BoundaryLeaderAtOrigin, format!("boundary leader {id} is at the origin"));
            }
            magnitudes.push(m);
        }
    }
    if let (Some(lo), Some(hi)) = (
        magnitudes.iter().copied().reduce(f64::min),
        magnitudes.iter().copied().reduce(f64::max),
    ) {
        if hi > 0.0 && (hi - lo) / hi > 0.01 {
            r.warning(
                UnequalLeaderMagnitudes,
                format!(
                    "boundary-leader reference magnitudes are unequal ({lo:.6} to {hi:.6} m); using a0 = {hi:.6}"
                ),
            );
        }
    }

    let s = &team.safety;
    let positive = [s.delta, s.epsilon, s.a_max, s.a0].iter().all(|&v| v > 0.0 && v.is_finite());
    if !positive {
        r.violation(SafetyParameters, "safety parameters must be finite and strictly positive");
    } else if s.a_max <= s.clearance() {
        r.violation(
            SafetyParameters,
            format!("a_max = {} must exceed 2(delta + epsilon) = {}", s.a_max, s.clearance()),
        );
    }

    let primary: BTreeSet<AgentId> = part.primary_leaders().iter().copied().collect();
    let mut covered = BTreeSet::new();
    for cell in &team.cells {
        for v in cell.vertices {
            if !primary.contains(&v) {
                r.violation(
                    CellVertexNotPrimary,
                    format!("cell {} vertex {v} is not a primary leader", cell.id),
                );
            }
        }
        let frame = cell
            .vertices
            .iter()
            .all(|v| v.0 >= 1 && v.0 <= n)
            .then(|| PlaneFrame::new(team.position(cell.vertices[1]), team.position(cell.vertices[2])))
            .flatten();
        let Some(frame) = frame else {
            r.violation(DegenerateCell, format!("cell {} has collinear vertices", cell.id));
            continue;
        };
        let scale = team.position(cell.vertices[1]).norm().max(team.position(cell.vertices[2]).norm());
        for &m in &cell.members {
            if m.0 == 0 || m.0 > n {
                r.violation(UnknownAgent, format!("cell {} lists unknown member {m}", cell.id));
                continue;
            }
            covered.insert(m);
            let p = team.position(m);
            if !frame.contains(&p) {
                r.violation(
                    MemberOutsideCell,
                    format!("agent {m} is listed in cell {} but lies outside it", cell.id),
                );
            } else if frame.plane_distance(&p) > 1e-6 * scale {
                r.warning(
                    MemberOffPlane,
                    format!("agent {m} lies {:.3e} m off the plane of cell {}", frame.plane_distance(&p), cell.id),
                );
            }
        }
        if cell.members.len() >= 2 {
            let pts: Vec<(AgentId, Vec3)> = cell
                .members
                .iter()
                .filter(|m| m.0 >= 1 && m.0 <= n)
                .map(|&m| (m, team.position(m)))
                .collect();
            if let Some((d, (a, b))) = closest_pair(&pts) {
                if !(d > 0.0) {
                    r.violation(
                        NonPositiveSeparation,
                        format!("coincident agents {a} and {b} in cell {}", cell.id),
                    );
                }
            }
        }
    }
    for id in team.agents() {
        if !covered.contains(&id) {
            r.violation(UncoveredAgent, format!("agent {id} lies in no triangle cell"));
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Square of boundary leaders around the core with one follower per cell.
    pub(crate) fn square_team() -> TeamConfiguration {
        let b = [
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(-2.0, 0.0, 0.0),
            Vec3::new(0.0, -2.0, 0.0),
        ];
        let mut positions: Vec<(AgentId, Vec3)> =
            b.iter().enumerate().map(|(i, p)| (AgentId(i + 1), *p)).collect();
        positions.push((AgentId(5), Vec3::zeros()));
        for j in 0..4 {
            positions.push((AgentId(6 + j), (b[j] + b[(j + 1) % 4]) / 3.0));
        }
        let partition = LayerPartition::new(
            vec![(1..=5).map(AgentId).collect(), (6..=9).map(AgentId).collect()],
            AgentId(5),
        );
        TeamConfiguration::new(
            partition,
            positions,
            SafetyInput { delta: 0.1, epsilon: 0.2, a_max: 10.0 },
            None,
        )
        .unwrap()
    }

    #[test]
    fn minimal_triangle_fixture() {
        let positions = vec![
            (AgentId(1), Vec3::new(1.0, 0.0, 0.0)),
            (AgentId(2), Vec3::new(-0.5, 0.8, 0.0)),
            (AgentId(3), Vec3::new(-0.5, -0.8, 0.0)),
            (AgentId(4), Vec3::zeros()),
            (AgentId(5), Vec3::new(0.1, 0.1, 0.0)),
        ];
        let partition = LayerPartition::new(
            vec![vec![AgentId(1), AgentId(2), AgentId(3), AgentId(4)], vec![AgentId(5)]],
            AgentId(4),
        );
        let team = TeamConfiguration::new(
            partition,
            positions,
            SafetyInput { delta: 0.01, epsilon: 0.01, a_max: 5.0 },
            None,
        )
        .unwrap();
        assert_eq!(team.partition.n_pl(), 4);
        assert_eq!(team.partition.depth(), 2);
        assert_eq!(team.cells.len(), 3);
        assert_eq!(team.cells[0].vertices, [AgentId(4), AgentId(1), AgentId(2)]);
        assert_eq!(team.cells[2].vertices, [AgentId(4), AgentId(3), AgentId(1)]);
        // (0.1, 0.1) sits in the cell spanned by leaders 1 and 2
        assert_eq!(enclosing_triangle(&team, &team.position(AgentId(5))).unwrap(), CellId(1));
        assert!(team.cells[0].members.contains(&AgentId(5)));
        // follower is 0.1414 from the core
        assert!((team.cells[0].p_min - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn core_off_origin_rejected() {
        let positions = vec![
            (AgentId(1), Vec3::new(1.0, 0.0, 0.0)),
            (AgentId(2), Vec3::new(-0.5, 0.8, 0.0)),
            (AgentId(3), Vec3::new(-0.5, -0.8, 0.0)),
            (AgentId(4), Vec3::new(1.0, 0.0, 0.0)),
        ];
        let partition = LayerPartition::new(vec![(1..=4).map(AgentId).collect()], AgentId(4));
        let err = TeamConfiguration::new(
            partition,
            positions,
            SafetyInput { delta: 0.1, epsilon: 0.1, a_max: 5.0 },
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CoreNotAtOrigin(AgentId(4))));
        assert!(err.to_string().contains("core must be at origin"));
    }

    #[test]
    fn duplicate_and_empty_layer_errors() {
        let safety = SafetyInput { delta: 0.1, epsilon: 0.1, a_max: 5.0 };
        let positions = vec![
            (AgentId(1), Vec3::new(1.0, 0.0, 0.0)),
            (AgentId(1), Vec3::new(-0.5, 0.8, 0.0)),
        ];
        let partition = LayerPartition::new(vec![vec![AgentId(1)]], AgentId(1));
        assert!(matches!(
            TeamConfiguration::new(partition, positions, safety, None),
            Err(Error::DuplicateAgent(AgentId(1)))
        ));
        let partition = LayerPartition::new(vec![vec![AgentId(1)], vec![]], AgentId(1));
        assert!(matches!(
            TeamConfiguration::new(partition, vec![], safety, None),
            Err(Error::EmptyLayer(2))
        ));
    }

    #[test]
    fn overlap_is_reported() {
        let mut team = square_team();
        assert!(validate_team(&team).is_empty());
        team.partition.layers[1].push(AgentId(1));
        let report = validate_team(&team);
        assert!(report.has(IssueKind::PartitionOverlap));
        assert!(report.violations.iter().any(|i| i.message.contains("partition overlap")));
    }

    #[test]
    fn uncovered_agent_is_reported() {
        let mut team = square_team();
        for c in &mut team.cells {
            c.members.retain(|&m| m != AgentId(6));
        }
        assert!(validate_team(&team).has(IssueKind::UncoveredAgent));
    }

    #[test]
    fn enclosing_triangle_cases() {
        let team = square_team();
        let c1 = &team.cells[0];
        let centroid: Vec3 = c1.vertices.iter().map(|&v| team.position(v)).sum::<Vec3>() / 3.0;
        assert_eq!(enclosing_triangle(&team, &centroid).unwrap(), CellId(1));
        // edge shared by cells 1 and 2: core to leader 2
        let shared = team.position(AgentId(2)) * 0.5;
        assert_eq!(enclosing_triangle(&team, &shared).unwrap(), CellId(1));
        let far = Vec3::new(200.0, 50.0, 0.0);
        assert!(matches!(enclosing_triangle(&team, &far), Err(Error::OutsidePolygon)));
        assert_eq!(
            enclosing_triangle(&team, &Vec3::new(-0.5, -0.5, 0.0)).unwrap(),
            CellId(3)
        );
    }

    #[test]
    fn min_separation_cases() {
        let mut team = square_team();
        // members of cell 1: core, leaders 1 and 2, follower 6 at (2/3, 2/3)
        let d = triangle_min_separation(&team, CellId(1)).unwrap();
        assert!((d - (8.0f64 / 9.0).sqrt()).abs() < 1e-15);

        team.cells[0].members = vec![AgentId(1), AgentId(2)];
        assert!((triangle_min_separation(&team, CellId(1)).unwrap() - 8f64.sqrt()).abs() < 1e-15);

        team.cells[0].members = vec![AgentId(1)];
        assert!(matches!(triangle_min_separation(&team, CellId(1)), Err(Error::TooFewMembers(_))));

        team.positions[5] = team.positions[0];
        team.cells[0].members = vec![AgentId(1), AgentId(6)];
        assert!(matches!(
            triangle_min_separation(&team, CellId(1)),
            Err(Error::CoincidentAgents(AgentId(1), AgentId(6), _))
        ));
    }

    #[test]
    fn two_at_distance_two() {
        let mut team = square_team();
        team.positions[5] = Vec3::new(2.0, 2.0, 0.0) / 3.0;
        team.cells[0].members = vec![AgentId(1), AgentId(5)];
        assert_eq!(triangle_min_separation(&team, CellId(1)).unwrap(), 2.0);
    }
}

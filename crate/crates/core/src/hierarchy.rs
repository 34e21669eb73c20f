//! Leader-to-follower weight hierarchy.
//!
//! Layer `k` positions are `beta_k` times layer `k-1` positions, where the
//! rows of `beta_k` index the nested set `W_k` and its columns `W_{k-1}`.
//! Primary leaders sit at `alpha_l a_l + s`.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3xX, RowDVector};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, BARYCENTRIC_TOL};
use crate::team::{enclosing_triangle, AgentId, MaterialPosition, TeamConfiguration, TriangleCell};

/// Tolerance on row sums of weight matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// `beta_k`: rows follow `partition.nested(k)`, columns `partition.nested(k - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub layer: usize,
    pub matrix: DMatrix<f64>,
}

/// Scale factors in primary-leader order (core last).
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaVector(pub Vec<f64>);

impl AlphaVector {
    /// Uniform scale on every primary leader, including the core.
    pub fn uniform(n_pl: usize, value: f64) -> Self {
        Self(vec![value; n_pl])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which agents the output layer averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputAveraging {
    /// Every agent of the nested last layer (`W_p = V`).
    #[default]
    Nested,
    /// Only the agents first introduced in the last layer.
    NewAgentsOnly,
}

/// Desired positions indexed by `AgentId::index`.
pub type DesiredPositions = Vec<Vec3>;

/// Convex weights of `point` over the vertices of `cell`, in vertex order.
pub fn barycentric_weights(
    point: &MaterialPosition,
    cell: &TriangleCell,
    team: &TeamConfiguration,
) -> Result<[f64; 3]> {
    let frame = team.cell_frame(cell.id)?;
    let mut w = frame.barycentric(point);
    if w.iter().any(|&x| x < -BARYCENTRIC_TOL) {
        return Err(Error::OutsidePolygon);
    }
    for x in &mut w {
        *x = x.clamp(0.0, 1.0);
    }
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    Ok(w)
}

/// Barycentric weight matrices for layers `2..=p`.
pub fn build_layer_weights(team: &TeamConfiguration) -> Result<Vec<LayerWeights>> {
    let part = &team.partition;
    let mut out = Vec::with_capacity(part.depth().saturating_sub(1));
    for k in 2..=part.depth() {
        let rows = part.nested(k);
        let cols = part.nested(k - 1);
        let col_of: HashMap<AgentId, usize> = cols.iter().enumerate().map(|(j, &id)| (id, j)).collect();
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (i, &id) in rows.iter().enumerate() {
            if let Some(&j) = col_of.get(&id) {
                m[(i, j)] = 1.0;
                continue;
            }
            let p = team.position(id);
            let cell = team.cell(enclosing_triangle(team, &p)?)?;
            let w = barycentric_weights(&p, cell, team)?;
            for (&vertex, &wv) in cell.vertices.iter().zip(&w) {
                let j = *col_of.get(&vertex).ok_or(Error::VertexNotInPreviousLayer {
                    agent: id,
                    layer: k,
                    vertex,
                })?;
                m[(i, j)] += wv;
            }
        }
        out.push(LayerWeights { layer: k, matrix: m });
    }
    Ok(out)
}

/// Wraps user-supplied matrices for layers `2..=p` after checking shape,
/// entry range and row-stochasticity.
pub fn layer_weights_from_matrices(
    team: &TeamConfiguration,
    matrices: Vec<DMatrix<f64>>,
) -> Result<Vec<LayerWeights>> {
    let part = &team.partition;
    let expected = part.depth().saturating_sub(1);
    if matrices.len() != expected {
        return Err(Error::InvalidWeights(format!(
            "{} matrices given, {expected} expected",
            matrices.len()
        )));
    }
    matrices
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let k = i + 2;
            let shape = (part.nested(k).len(), part.nested(k - 1).len());
            if m.shape() != shape {
                return Err(Error::InvalidWeights(format!(
                    "layer {k} matrix is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            check_row_stochastic(k, &m)?;
            Ok(LayerWeights { layer: k, matrix: m })
        })
        .collect()
}

fn check_row_stochastic(layer: usize, m: &DMatrix<f64>) -> Result<()> {
    for (row, r) in m.row_iter().enumerate() {
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidWeights(format!(
                "layer {layer}, row {row} has an entry outside [0, 1]"
            )));
        }
        let sum = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotRowStochastic { layer, row, sum });
        }
    }
    Ok(())
}

fn check_alpha(team: &TeamConfiguration, alpha: &AlphaVector) -> Result<()> {
    let n_pl = team.partition.n_pl();
    if alpha.len() != n_pl {
        return Err(Error::AlphaLength { expected: n_pl, got: alpha.len() });
    }
    Ok(())
}

/// Desired positions of every agent for scale factors `alpha` and translation `s`.
pub fn forward_pass(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    alpha: &AlphaVector,
    s: &Vec3,
) -> Result<DesiredPositions> {
    check_alpha(team, alpha)?;
    let part = &team.partition;
    let leaders = part.primary_leaders();
    // rows are agents, columns are axes
    let mut layer = DMatrix::from_fn(leaders.len(), 3, |i, axis| {
        alpha.0[i] * team.position(leaders[i])[axis] + s[axis]
    });
    for w in weights {
        layer = &w.matrix * layer;
    }
    let order = part.nested(weights.len() + 1);
    let mut out = vec![Vec3::zeros(); team.agent_count];
    for (i, id) in order.iter().enumerate() {
        out[id.index()] = Vec3::new(layer[(i, 0)], layer[(i, 1)], layer[(i, 2)]);
    }
    Ok(out)
}

/// The constant rows mapping the decision vector `[alpha; s]` to the nominal
/// position: `p_axis = delta_axis . alpha + s_axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeRows {
    pub delta: [RowDVector<f64>; 3],
}

impl CompositeRows {
    pub fn n_pl(&self) -> usize {
        self.delta[0].len()
    }

    /// `[delta_axis | unit entry in the axis's s slot]`, length `n_pl + 3`.
    pub fn r(&self, axis: usize) -> RowDVector<f64> {
        let n = self.n_pl();
        let mut r = RowDVector::zeros(n + 3);
        r.columns_mut(0, n).copy_from(&self.delta[axis]);
        r[n + axis] = 1.0;
        r
    }

    /// Nominal position for a decision vector `x = [alpha; s]`.
    pub fn apply(&self, x: &[f64]) -> Vec3 {
        Vec3::from_fn(|axis, _| self.r(axis).iter().zip(x).map(|(a, b)| a * b).sum())
    }
}

/// Composite leader weights `(1/N_p) 1^T beta_p ... beta_2`, length `n_pl`.
pub fn composite_leader_weights(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    averaging: OutputAveraging,
) -> RowDVector<f64> {
    let part = &team.partition;
    let p = weights.len() + 1;
    let last = part.nested(p);
    let selected: Vec<bool> = match averaging {
        OutputAveraging::Nested => vec![true; last.len()],
        OutputAveraging::NewAgentsOnly => {
            let new = part.new_agents(p);
            last.iter().map(|id| new.contains(id)).collect()
        }
    };
    let count = selected.iter().filter(|&&b| b).count() as f64;
    let mut c = RowDVector::from_iterator(
        last.len(),
        selected.iter().map(|&b| if b { 1.0 / count } else { 0.0 }),
    );
    for w in weights.iter().rev() {
        c = c * &w.matrix;
    }
    c
}

pub fn compose_delta_rows(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    averaging: OutputAveraging,
) -> CompositeRows {
    let c = composite_leader_weights(team, weights, averaging);
    let leaders = team.partition.primary_leaders();
    let delta = [0, 1, 2].map(|axis| {
        RowDVector::from_iterator(
            leaders.len(),
            leaders.iter().zip(c.iter()).map(|(&id, &cl)| cl * team.position(id)[axis]),
        )
    });
    CompositeRows { delta }
}

/// Average desired position over the output layer.
pub fn nominal_position(
    team: &TeamConfiguration,
    weights: &[LayerWeights],
    alpha: &AlphaVector,
    s: &Vec3,
    averaging: OutputAveraging,
) -> Result<Vec3> {
    let desired = forward_pass(team, weights, alpha, s)?;
    let part = &team.partition;
    let ids: Vec<AgentId> = match averaging {
        OutputAveraging::Nested => part.nested(weights.len() + 1),
        OutputAveraging::NewAgentsOnly => part.new_agents(weights.len() + 1).to_vec(),
    };
    let sum: Vec3 = ids.iter().map(|id| desired[id.index()]).sum();
    Ok(sum / ids.len() as f64)
}

/// Desired positions as a `3 x N` matrix, columns in id order.
pub fn as_matrix(desired: &DesiredPositions) -> Matrix3xX<f64> {
    Matrix3xX::from_columns(desired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::team::{CellId, LayerPartition, SafetyInput};

    fn square_team() -> TeamConfiguration {
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
        positions.push((AgentId(10), Vec3::new(0.5, 0.25, 0.0)));
        let partition = LayerPartition::new(
            vec![
                (1..=5).map(AgentId).collect(),
                (6..=9).map(AgentId).collect(),
                vec![AgentId(10)],
            ],
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
    fn barycentric_examples() {
        let team = square_team();
        let cell = team.cell(CellId(1)).unwrap();
        let v: Vec<Vec3> = cell.vertices.iter().map(|&id| team.position(id)).collect();
        assert_eq!(barycentric_weights(&v[0], cell, &team).unwrap(), [1.0, 0.0, 0.0]);
        let c = barycentric_weights(&((v[0] + v[1] + v[2]) / 3.0), cell, &team).unwrap();
        for w in c {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        let m = barycentric_weights(&((v[0] + v[1]) / 2.0), cell, &team).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15 && m[2] == 0.0);
        assert!(matches!(
            barycentric_weights(&Vec3::new(-1.0, -1.0, 0.0), cell, &team),
            Err(Error::OutsidePolygon)
        ));
    }

    #[test]
    fn weights_are_nested_and_stochastic() {
        let team = square_team();
        let w = build_layer_weights(&team).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].matrix.shape(), (9, 5));
        assert_eq!(w[1].matrix.shape(), (10, 9));
        for lw in &w {
            for r in lw.matrix.row_iter() {
                assert!((r.sum() - 1.0).abs() <= ROW_SUM_TOL);
                assert!(r.iter().filter(|&&x| x != 0.0).count() <= 3);
            }
        }
        // carried-over rows are identity
        for i in 0..5 {
            assert_eq!(w[0].matrix[(i, i)], 1.0);
        }
    }

    #[test]
    fn follower_at_core_gets_core_weight() {
        let mut team = square_team();
        team.positions[9] = Vec3::zeros();
        // rebuilt cells would flag coincident agents; weights only need positions
        let w = build_layer_weights(&team).unwrap();
        let core_col = 4;
        assert_eq!(w[1].matrix[(9, core_col)], 1.0);
    }

    #[test]
    fn explicit_weights_must_be_stochastic() {
        let team = square_team();
        let mut m = build_layer_weights(&team).unwrap();
        let mut bad = m[0].matrix.clone();
        bad.row_mut(5).scale_mut(0.9);
        let err = layer_weights_from_matrices(&team, vec![bad, m[1].matrix.clone()]).unwrap_err();
        assert!(matches!(err, Error::NotRowStochastic { layer: 2, row: 5, .. }));
        assert!(err.to_string().contains("weights not row-stochastic"));
        let ok = layer_weights_from_matrices(
            &team,
            m.drain(..).map(|lw| lw.matrix).collect(),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn identity_and_translation() {
        let team = square_team();
        let w = build_layer_weights(&team).unwrap();
        let one = AlphaVector::uniform(5, 1.0);
        let p = forward_pass(&team, &w, &one, &Vec3::zeros()).unwrap();
        for (a, b) in p.iter().zip(&team.positions) {
            assert!((a - b).norm() < 1e-15);
        }
        let s = Vec3::new(5.0, 0.0, 0.0);
        let p = forward_pass(&team, &w, &one, &s).unwrap();
        for (a, b) in p.iter().zip(&team.positions) {
            assert!((a - (b + s)).norm() < 1e-14);
        }
        assert_eq!(p[team.partition.core.index()], s);
        assert!(matches!(
            forward_pass(&team, &w, &AlphaVector::uniform(4, 1.0), &s),
            Err(Error::AlphaLength { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn planar_leaders_give_zero_delta_z() {
        let team = square_team();
        let w = build_layer_weights(&team).unwrap();
        let rows = compose_delta_rows(&team, &w, OutputAveraging::Nested);
        assert!(rows.delta[2].iter().all(|&x| x == 0.0));
        let r = rows.r(1);
        assert_eq!(r.len(), 8);
        assert_eq!(r[6], 1.0);
        assert_eq!(r[5], 0.0);
    }

    #[test]
    fn nominal_matches_rows() {
        let team = square_team();
        let w = build_layer_weights(&team).unwrap();
        for averaging in [OutputAveraging::Nested, OutputAveraging::NewAgentsOnly] {
            let rows = compose_delta_rows(&team, &w, averaging);
            let alpha = AlphaVector(vec![0.7, 1.3, 2.0, 0.9, 0.0]);
            let s = Vec3::new(0.3, -1.0, 2.0);
            let p = nominal_position(&team, &w, &alpha, &s, averaging).unwrap();
            let mut x = alpha.0.clone();
            x.extend(s.iter());
            assert!((rows.apply(&x) - p).norm() < 1e-14);
        }
    }
}

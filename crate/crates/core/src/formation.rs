//! Desired formation geometry, edge errors and the scalar progress metric.

use std::f64::consts::TAU;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::{kron_expand, Graph};

/// Desired absolute agent positions. Pairwise displacements are always derived
/// from these, so they are consistent around every cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    dim: usize,
    positions: Vec<DVector<f64>>,
}

impl FormationSpec {
    pub fn from_positions(positions: Vec<DVector<f64>>) -> Result<Self> {
        let dim = positions
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::UnsupportedSpec("formation needs at least one agent".into()))?;
        if dim == 0 {
            return Err(Error::UnsupportedSpec("spatial dimension must be positive".into()));
        }
        if let Some(bad) = positions.iter().find(|p| p.len() != dim) {
            return Err(Error::Shape {
                what: "desired position",
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self { dim, positions })
    }

    /// Vertices of a regular polygon, `p_i = r [cos(2πi/N), sin(2πi/N)]`
    /// with 0-based `i`.
    pub fn regular_polygon(node_count: usize, dim: usize, radius: f64) -> Result<Self> {
        if dim != 2 {
            return Err(Error::UnsupportedSpec(format!(
                "regular polygon formations are planar, got dimension {dim}"
            )));
        }
        if node_count < 3 {
            return Err(Error::UnsupportedSpec(format!(
                "regular polygon needs at least 3 vertices, got {node_count}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::UnsupportedSpec(format!("radius must be positive, got {radius}")));
        }
        let positions = (0..node_count)
            .map(|i| {
                let theta = TAU * i as f64 / node_count as f64;
                DVector::from_vec(vec![radius * theta.cos(), radius * theta.sin()])
            })
            .collect();
        Self::from_positions(positions)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, i: usize) -> &DVector<f64> {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    /// `d_ij = p_i - p_j`.
    pub fn displacement(&self, i: usize, j: usize) -> DVector<f64> {
        &self.positions[i] - &self.positions[j]
    }

    /// Desired positions stacked into one `N·n` vector.
    pub fn stacked_positions(&self) -> DVector<f64> {
        stack(&self.positions)
    }

    /// Stacked desired displacements in incidence-row order.
    pub fn stacked_displacements(&self, graph: &Graph) -> DVector<f64> {
        let blocks: Vec<_> = graph
            .edges()
            .iter()
            .map(|&(i, j)| self.displacement(i, j))
            .collect();
        stack(&blocks)
    }

    fn check(&self, states: &DVector<f64>, graph: &Graph) -> Result<()> {
        if graph.node_count() != self.agent_count() {
            return Err(Error::Shape {
                what: "graph node count vs formation",
                expected: self.agent_count(),
                got: graph.node_count(),
            });
        }
        let expected = self.agent_count() * self.dim;
        if states.len() != expected {
            return Err(Error::Shape {
                what: "stacked state",
                expected,
                got: states.len(),
            });
        }
        Ok(())
    }

    /// Edge-stacked formation error, one `n`-block per edge:
    /// `e_ij = (x_i - x_j) - d_ij`.
    pub fn edge_errors(&self, states: &DVector<f64>, graph: &Graph) -> Result<DVector<f64>> {
        self.check(states, graph)?;
        let n = self.dim;
        let mut out = DVector::zeros(graph.edge_count() * n);
        for (row, &(i, j)) in graph.edges().iter().enumerate() {
            for m in 0..n {
                out[row * n + m] = (states[i * n + m] - states[j * n + m])
                    - (self.positions[i][m] - self.positions[j][m]);
            }
        }
        Ok(out)
    }

    /// Same quantity as [`FormationSpec::edge_errors`], formed as `(H ⊗ I_n) X - d`.
    pub fn edge_errors_matrix(&self, states: &DVector<f64>, graph: &Graph) -> Result<DVector<f64>> {
        self.check(states, graph)?;
        let h = kron_expand(&graph.incidence().incidence, self.dim);
        Ok(h * states - self.stacked_displacements(graph))
    }

    /// `V = ½ ‖e‖²` over the edge-stacked error.
    pub fn v_metric(&self, states: &DVector<f64>, graph: &Graph) -> Result<f64> {
        Ok(0.5 * self.edge_errors(states, graph)?.norm_squared())
    }
}

pub fn stack(points: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        points.iter().map(|p| p.len()).sum(),
        points.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Block `i` of a stacked vector with block size `n`.
pub fn block(stacked: &DVector<f64>, i: usize, n: usize) -> DVector<f64> {
    stacked.rows(i * n, n).into_owned()
}

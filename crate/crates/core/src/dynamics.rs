//! Synchronous closed-loop steps and the stacked closed-loop matrix.
//!
//! Agent update: `x_i ← x_i − dt Σ_{j∈N_i} (x_i − y_j − d_ij) + (K W)_i`, where
//! `W = X − P_desired` is the stacked deviation from the desired positions and
//! `K` defaults to zero. The stacked form is `Γ = I − dt (L ⊗ I_n) + K`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::formation::{stack, FormationSpec};
use crate::graph::{kron_expand, Graph};
use crate::mitigation::{contribution, Aggregate};

#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    pub gain: Option<DMatrix<f64>>,
}

impl StepParams {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, gain: None })
    }
}

/// Snapshot of one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    /// True agent states.
    pub states: Vec<DVector<f64>>,
    /// What each agent transmitted at `step`.
    pub broadcasts: Vec<DVector<f64>>,
    /// Agents flagged as compromised by at least one observer.
    pub flagged: Vec<bool>,
}

impl SimState {
    pub fn new(states: Vec<DVector<f64>>) -> Self {
        let n = states.len();
        Self {
            step: 0,
            broadcasts: states.clone(),
            states,
            flagged: vec![false; n],
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.states)
    }
}

/// Advances every agent once using only step-`k` values.
///
/// `aggregates[i]` is what agent `i` feeds into its update; a
/// [`Aggregate::Readings`] list must hold exactly one reading per neighbor.
pub fn nominal_step(
    state: &SimState,
    spec: &FormationSpec,
    graph: &Graph,
    params: &StepParams,
    aggregates: &[Aggregate],
) -> Result<SimState> {
    let agents = graph.node_count();
    let dim = spec.dim();
    if state.states.len() != agents {
        return Err(Error::Shape {
            what: "agent states",
            expected: agents,
            got: state.states.len(),
        });
    }
    if aggregates.len() != agents {
        return Err(Error::Shape {
            what: "aggregates",
            expected: agents,
            got: aggregates.len(),
        });
    }

    let feedback = match &params.gain {
        Some(k) => {
            let deviation = state.stacked() - spec.stacked_positions();
            Some(k * deviation)
        }
        None => None,
    };

    let mut next = Vec::with_capacity(agents);
    for (i, (x_i, aggregate)) in state.states.iter().zip(aggregates).enumerate() {
        let sum = match aggregate {
            Aggregate::Hold => {
                next.push(x_i.clone());
                continue;
            }
            Aggregate::Contribution(c) => c.clone(),
            Aggregate::Readings(readings) => {
                let neighbors = graph.neighbors(i);
                if let Some((j, _)) = readings.iter().find(|(j, _)| !graph.has_edge(i, *j)) {
                    return Err(Error::MissingReading {
                        agent: i,
                        neighbor: *j,
                    });
                }
                let mut sum = DVector::zeros(dim);
                for &j in neighbors {
                    let (_, y) = readings
                        .iter()
                        .find(|(k, _)| *k == j)
                        .ok_or(Error::MissingReading {
                            agent: i,
                            neighbor: j,
                        })?;
                    sum += contribution(i, x_i, j, y, spec);
                }
                sum
            }
        };
        let mut x_next = x_i - sum * params.dt;
        if let Some(u) = &feedback {
            x_next += u.rows(i * dim, dim);
        }
        next.push(x_next);
    }

    Ok(SimState {
        step: state.step + 1,
        broadcasts: next.clone(),
        states: next,
        flagged: state.flagged.clone(),
    })
}

/// `Γ = I_{Nn} − dt (L ⊗ I_n) + K`.
pub fn closed_loop_matrix(graph: &Graph, dim: usize, params: &StepParams) -> DMatrix<f64> {
    let size = graph.node_count() * dim;
    let g = kron_expand(&graph.laplacian().laplacian, dim);
    let mut gamma = DMatrix::identity(size, size) - g * params.dt;
    if let Some(k) = &params.gain {
        gamma += k;
    }
    gamma
}

/// `X⁺ = Γ X − P f(X)` with `f` applied block-wise.
///
/// Abstract attacked dynamics, used to cross-check the agent-level engine and
/// to drive the Lyapunov decrease check.
pub fn attacked_step_reference(
    x: &DVector<f64>,
    gamma: &DMatrix<f64>,
    selector: &DMatrix<f64>,
    dim: usize,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DVector<f64> {
    let blocks = x.len() / dim;
    let mut fx = DVector::zeros(x.len());
    for b in 0..blocks {
        let out = f(&x.rows(b * dim, dim).into_owned());
        fx.rows_mut(b * dim, dim).copy_from(&out);
    }
    gamma * x - selector * fx
}

/// Honest readings: every neighbor's broadcast, unmodified.
pub fn honest_aggregates(graph: &Graph, broadcasts: &[DVector<f64>]) -> Vec<Aggregate> {
    (0..graph.node_count())
        .map(|i| {
            Aggregate::Readings(
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, broadcasts[j].clone()))
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn pentagon() -> (FormationSpec, Graph, StepParams) {
        (
            FormationSpec::regular_polygon(5, 2, 1.0).unwrap(),
            Graph::complete(5).unwrap(),
            StepParams::new(0.05).unwrap(),
        )
    }

    #[test]
    fn formation_is_a_fixed_point() {
        let (spec, g, p) = pentagon();
        let state = SimState::new(spec.positions().to_vec());
        let aggs = honest_aggregates(&g, &state.broadcasts);
        let next = nominal_step(&state, &spec, &g, &p, &aggs).unwrap();
        assert_eq!(next.step, 1);
        for (a, b) in next.states.iter().zip(spec.positions()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn isolated_agent_stays_put() {
        let spec = FormationSpec::from_positions(vec![v(&[0.0, 0.0])]).unwrap();
        let g = Graph::from_edges(1, &[]).unwrap();
        let state = SimState::new(vec![v(&[0.3, -0.2])]);
        let aggs = honest_aggregates(&g, &state.broadcasts);
        let next = nominal_step(&state, &spec, &g, &StepParams::new(0.1).unwrap(), &aggs).unwrap();
        assert_eq!(next.states[0], v(&[0.3, -0.2]));
    }

    #[test]
    fn missing_reading_is_a_protocol_error() {
        let (spec, g, p) = pentagon();
        let state = SimState::new(spec.positions().to_vec());
        let mut aggs = honest_aggregates(&g, &state.broadcasts);
        if let Aggregate::Readings(r) = &mut aggs[3] {
            r.retain(|(j, _)| *j != 1);
        }
        assert_eq!(
            nominal_step(&state, &spec, &g, &p, &aggs),
            Err(Error::MissingReading { agent: 3, neighbor: 1 })
        );
    }

    #[test]
    fn closed_loop_small_cases() {
        let g = Graph::complete(2).unwrap();
        let gamma = closed_loop_matrix(&g, 1, &StepParams::new(0.25).unwrap());
        let want = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((gamma - want).abs().max() < 1e-15);
        let frozen = closed_loop_matrix(&g, 1, &StepParams { dt: 0.0, gain: None });
        assert_eq!(frozen, DMatrix::identity(2, 2));
    }

    #[test]
    fn reference_step_degenerate_cases() {
        let x = v(&[1.0, -2.0, 0.5, 4.0]);
        let gamma = DMatrix::from_fn(4, 4, |r, c| 0.1 * (r as f64 + 1.0) - 0.05 * c as f64);
        let zero = DMatrix::zeros(4, 4);
        let f = |z: &DVector<f64>| z * 0.3 + DVector::from_element(z.len(), z.norm_squared());
        assert_eq!(attacked_step_reference(&x, &gamma, &zero, 2, f), &gamma * &x);
        let p = DMatrix::identity(4, 4);
        assert_eq!(
            attacked_step_reference(&x, &gamma, &p, 2, |z| DVector::zeros(z.len())),
            &gamma * &x
        );
        let out = attacked_step_reference(&x, &DMatrix::identity(4, 4), &p, 2, |z| z * 0.3);
        assert!((out - &x * 0.7).norm() < 1e-15);
    }

    #[test]
    fn gain_acts_on_deviation() {
        let (spec, g, _) = pentagon();
        let mut p = StepParams::new(0.05).unwrap();
        p.gain = Some(DMatrix::identity(10, 10) * -0.1);
        let state = SimState::new(spec.positions().to_vec());
        let aggs = honest_aggregates(&g, &state.broadcasts);
        let next = nominal_step(&state, &spec, &g, &p, &aggs).unwrap();
        for (a, b) in next.states.iter().zip(spec.positions()) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}

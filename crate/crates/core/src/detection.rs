//! Residual monitoring.
//!
//! Every observer keeps a model-based prediction of each neighbor's state and
//! compares it with what the neighbor broadcasts. A neighbor whose individual
//! residual `‖y_j − x̂_j‖` exceeds the observer's threshold is flagged, and stays
//! flagged for the rest of the run.

use std::collections::BTreeSet;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::formation::FormationSpec;
use crate::graph::Graph;
use crate::mitigation::{hallucinate, HallucinationParams};

pub const DEFAULT_KAPPA: f64 = 4.0;
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Per-observer detection thresholds `δ_i = max(r̄_i + κ σ_i, floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub kappa: f64,
    pub floor: f64,
}

impl ThresholdProfile {
    /// Profile with zero nominal statistics, i.e. every threshold at `floor`.
    pub fn noiseless(agent_count: usize, kappa: f64, floor: f64) -> Self {
        Self {
            mean: vec![0.0; agent_count],
            std: vec![0.0; agent_count],
            kappa,
            floor,
        }
    }

    pub fn threshold(&self, observer: usize) -> f64 {
        (self.mean[observer] + self.kappa * self.std[observer]).max(self.floor)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.mean.len()).map(|i| self.threshold(i)).collect()
    }
}

/// Sample mean and sample standard deviation (denominator `W − 1`) of each
/// observer's nominal per-neighbor residuals.
pub fn calibrate(samples: &[Vec<f64>], kappa: f64, floor: f64) -> Result<ThresholdProfile> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Calibration(format!("kappa must be non-negative, got {kappa}")));
    }
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::Calibration(format!("threshold floor must be positive, got {floor}")));
    }
    let mut mean = Vec::with_capacity(samples.len());
    let mut std = Vec::with_capacity(samples.len());
    for (i, window) in samples.iter().enumerate() {
        if window.len() < 2 {
            return Err(Error::Calibration(format!(
                "observer {i} has {} residual samples, need at least 2",
                window.len()
            )));
        }
        let w = window.len() as f64;
        let m = window.iter().sum::<f64>() / w;
        let var = window.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (w - 1.0);
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(ThresholdProfile {
        mean,
        std,
        kappa,
        floor,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPrediction {
    pub neighbor: usize,
    pub predicted: DVector<f64>,
    pub last_trusted: DVector<f64>,
    pub trusted: bool,
    /// Whether the observer receives every broadcast the neighbor's update
    /// depends on. If not, the prediction is a hold of the last trusted value.
    pub full_view: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegradedPrediction {
    pub observer: usize,
    pub neighbor: usize,
}

/// Prediction and flag state of every observer.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    predictions: Vec<Vec<NeighborPrediction>>,
    flags: Vec<BTreeSet<usize>>,
    degraded: Vec<DegradedPrediction>,
}

impl Detector {
    /// Seeds every prediction with the first received broadcast.
    pub fn bootstrap(graph: &Graph, broadcasts: &[DVector<f64>]) -> Self {
        let agents = graph.node_count();
        let mut degraded = Vec::new();
        let predictions = (0..agents)
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| {
                        let full_view = graph
                            .neighbors(j)
                            .iter()
                            .all(|&l| l == i || graph.has_edge(i, l));
                        if !full_view {
                            degraded.push(DegradedPrediction {
                                observer: i,
                                neighbor: j,
                            });
                        }
                        NeighborPrediction {
                            neighbor: j,
                            predicted: broadcasts[j].clone(),
                            last_trusted: broadcasts[j].clone(),
                            trusted: true,
                            full_view,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            predictions,
            flags: vec![BTreeSet::new(); agents],
            degraded,
        }
    }

    pub fn predictions(&self, observer: usize) -> &[NeighborPrediction] {
        &self.predictions[observer]
    }

    pub fn prediction(&self, observer: usize, neighbor: usize) -> Option<&DVector<f64>> {
        self.predictions[observer]
            .iter()
            .find(|p| p.neighbor == neighbor)
            .map(|p| &p.predicted)
    }

    /// Sticky flag set of `observer`.
    pub fn flags(&self, observer: usize) -> &BTreeSet<usize> {
        &self.flags[observer]
    }

    pub fn degraded(&self) -> &[DegradedPrediction] {
        &self.degraded
    }

    /// Per-neighbor residuals `‖y_j − x̂_j‖` of `observer`, in neighbor order.
    pub fn neighbor_residuals(&self, observer: usize, broadcasts: &[DVector<f64>]) -> Vec<(usize, f64)> {
        self.predictions[observer]
            .iter()
            .map(|p| (p.neighbor, (&broadcasts[p.neighbor] - &p.predicted).norm()))
            .collect()
    }

    /// Aggregate residual `r_i = Σ_j ‖y_j − x̂_j‖`.
    pub fn residual(&self, observer: usize, broadcasts: &[DVector<f64>]) -> f64 {
        self.neighbor_residuals(observer, broadcasts)
            .iter()
            .map(|(_, r)| r)
            .sum()
    }

    /// Neighbors whose residual exceeds the threshold at this step, without
    /// touching the sticky flags.
    pub fn exceedances(
        &self,
        observer: usize,
        broadcasts: &[DVector<f64>],
        profile: &ThresholdProfile,
    ) -> BTreeSet<usize> {
        let delta = profile.threshold(observer);
        self.neighbor_residuals(observer, broadcasts)
            .into_iter()
            .filter(|&(_, r)| r > delta)
            .map(|(j, _)| j)
            .collect()
    }

    /// Adds this step's exceedances to the observer's flags and returns the
    /// full flag set.
    pub fn detect(
        &mut self,
        observer: usize,
        broadcasts: &[DVector<f64>],
        profile: &ThresholdProfile,
    ) -> &BTreeSet<usize> {
        let fresh = self.exceedances(observer, broadcasts, profile);
        for j in fresh {
            self.flags[observer].insert(j);
            if let Some(p) = self.predictions[observer].iter_mut().find(|p| p.neighbor == j) {
                p.trusted = false;
            }
        }
        &self.flags[observer]
    }

    /// Rolls every prediction forward one step under nominal dynamics:
    /// `x̂_j ← x̂_j − dt Σ_{l∈N_j} (x̂_j − ỹ_l − d_jl)`.
    ///
    /// `ỹ_l` is the received broadcast, except that when `substitution` is set
    /// a neighbor the observer has flagged is replaced by the hallucinated
    /// reading `j` itself would use. Observers that cannot see all of `j`'s
    /// inputs hold the last trusted broadcast instead.
    pub fn propagate(
        &mut self,
        broadcasts: &[DVector<f64>],
        spec: &FormationSpec,
        graph: &Graph,
        dt: f64,
        substitution: Option<&HallucinationParams>,
    ) {
        let mut next: Vec<Vec<DVector<f64>>> = Vec::with_capacity(self.predictions.len());
        for (i, row) in self.predictions.iter().enumerate() {
            let mut row_next = Vec::with_capacity(row.len());
            for p in row {
                let j = p.neighbor;
                if !p.full_view {
                    row_next.push(if p.trusted {
                        broadcasts[j].clone()
                    } else {
                        p.last_trusted.clone()
                    });
                    continue;
                }
                let mut sum = DVector::zeros(p.predicted.len());
                for &l in graph.neighbors(j) {
                    let d_jl = spec.displacement(j, l);
                    let reading = match substitution {
                        Some(params) if l != i && self.flags[i].contains(&l) => {
                            let anchor = &p.predicted - &d_jl;
                            let predicted_l = self
                                .prediction(i, l)
                                .expect("flagged agents are neighbors of the observer");
                            hallucinate(&anchor, predicted_l, params)
                        }
                        _ => broadcasts[l].clone(),
                    };
                    sum += &p.predicted - reading - d_jl;
                }
                row_next.push(&p.predicted - sum * dt);
            }
            next.push(row_next);
        }
        for (row, row_next) in self.predictions.iter_mut().zip(next) {
            for (p, predicted) in row.iter_mut().zip(row_next) {
                if p.trusted {
                    p.last_trusted = broadcasts[p.neighbor].clone();
                }
                p.predicted = predicted;
            }
        }
    }
}

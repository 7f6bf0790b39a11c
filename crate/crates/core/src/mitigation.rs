//! Turning raw neighbor readings into what the update rule consumes.
//!
//! Four strategies: passthrough, state hallucination for flagged neighbors,
//! coordinate-wise trimming (W-MSR) and Huber weighting. The first two yield
//! readings; the robust aggregators yield the already-formed neighbor sum.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::eigen;
use crate::error::{Error, Result};
use crate::formation::FormationSpec;

/// One reading received by an agent: `(neighbor index, value)`.
pub type Reading = (usize, DVector<f64>);

/// Second-order correction `f(z) = γ z + Δ(z)` with `Δ_m(z) = ½ zᵀ H_m z`.
#[derive(Debug, Clone, PartialEq)]
pub struct HallucinationParams {
    gamma: f64,
    m_bound: f64,
    hessians: Option<Vec<DMatrix<f64>>>,
}

impl HallucinationParams {
    /// Uses the default Hessians `H_m = (M/√n) I_n`, which attain the bound
    /// `‖Δ(z)‖ = (M/2)‖z‖²` exactly.
    pub fn new(gamma: f64, m_bound: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !(m_bound >= 0.0 && m_bound.is_finite()) {
            return Err(Error::Config(format!("M must be non-negative, got {m_bound}")));
        }
        Ok(Self {
            gamma,
            m_bound,
            hessians: None,
        })
    }

    /// Explicit Hessian stack, one symmetric `n×n` matrix per output
    /// coordinate. Requires `Σ_m ‖H_m‖₂² ≤ M²` so the remainder bound holds.
    pub fn with_hessians(gamma: f64, m_bound: f64, hessians: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut params = Self::new(gamma, m_bound)?;
        let n = hessians.len();
        let mut total = 0.0;
        for (m, h) in hessians.iter().enumerate() {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::Config(format!(
                    "Hessian {m} must be {n}x{n}, got {}x{}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            if !eigen::is_symmetric(h, 1e-12) {
                return Err(Error::Config(format!("Hessian {m} is not symmetric")));
            }
            let norm = eigen::spectral_radius(h);
            total += norm * norm;
        }
        if total > m_bound * m_bound * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "Hessians violate the remainder bound: sum of squared norms {total} > M^2 = {}",
                m_bound * m_bound
            )));
        }
        params.hessians = Some(hessians);
        Ok(params)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = Self::new(gamma, self.m_bound)?;
        out.hessians = self.hessians.clone();
        Ok(out)
    }

    /// Second-order term `Δ(z)`.
    pub fn delta(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.hessians {
            None => {
                let n = z.len() as f64;
                let value = 0.5 * (self.m_bound / n.sqrt()) * z.norm_squared();
                DVector::from_element(z.len(), value)
            }
            Some(hessians) => {
                assert_eq!(hessians.len(), z.len(), "Hessian stack does not match dimension");
                DVector::from_iterator(z.len(), hessians.iter().map(|h| 0.5 * z.dot(&(h * z))))
            }
        }
    }

    /// `f(z) = γ z + Δ(z)`; `f(0) = 0`.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        z * self.gamma + self.delta(z)
    }
}

/// Hallucinated reading `ρ + f(x̂ - ρ)` around the anchor `ρ`.
pub fn hallucinate(
    anchor: &DVector<f64>,
    predicted: &DVector<f64>,
    params: &HallucinationParams,
) -> DVector<f64> {
    anchor + params.apply(&(predicted - anchor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MitigationMethod {
    None,
    Sosh,
    Wmsr,
    Huber,
    /// Replaces every reading with the sender's true state. Reference
    /// baseline only; not a deployable defense.
    Oracle,
}

impl MitigationMethod {
    pub const STANDARD_SET: [MitigationMethod; 4] = [Self::None, Self::Sosh, Self::Wmsr, Self::Huber];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Sosh => "sosh",
            Self::Wmsr => "wmsr",
            Self::Huber => "huber",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for MitigationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MitigationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "sosh" => Ok(Self::Sosh),
            "wmsr" | "w-msr" => Ok(Self::Wmsr),
            "huber" => Ok(Self::Huber),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::Config(format!(
                "unknown mitigation method `{other}` (expected none, sosh, wmsr, huber or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationConfig {
    pub method: MitigationMethod,
    pub sosh: HallucinationParams,
    pub wmsr_f: usize,
    pub huber_c: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            method: MitigationMethod::Sosh,
            sosh: HallucinationParams::new(0.3, 1.0).expect("valid defaults"),
            wmsr_f: 1,
            huber_c: 1.0,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_c > 0.0 && self.huber_c.is_finite()) {
            return Err(Error::Config(format!(
                "huber_c must be positive, got {}",
                self.huber_c
            )));
        }
        Ok(())
    }
}

/// What an agent feeds into its update this step.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    /// Plain sum of `x_i - y_j - d_ij` over these readings, one per neighbor.
    Readings(Vec<Reading>),
    /// Pre-formed replacement for that sum.
    Contribution(DVector<f64>),
    /// Degenerate neighborhood: the agent keeps its position.
    Hold,
}

/// `x_i - y_j - d_ij`.
pub fn contribution(
    agent: usize,
    own_state: &DVector<f64>,
    neighbor: usize,
    reading: &DVector<f64>,
    spec: &FormationSpec,
) -> DVector<f64> {
    own_state - reading - spec.displacement(agent, neighbor)
}

pub fn effective_readings_none(raw: &[Reading]) -> Aggregate {
    Aggregate::Readings(raw.to_vec())
}

/// Flagged neighbors' broadcasts are dropped and replaced by a hallucinated
/// reading anchored at `x_i - d_ij`, the slot agent `i` expects `j` to hold.
pub fn effective_readings_sosh(
    agent: usize,
    own_state: &DVector<f64>,
    raw: &[Reading],
    flagged: &BTreeSet<usize>,
    predicted: impl Fn(usize) -> DVector<f64>,
    spec: &FormationSpec,
    params: &HallucinationParams,
) -> Aggregate {
    let readings = raw
        .iter()
        .map(|(j, y)| {
            if flagged.contains(j) {
                let anchor = own_state - spec.displacement(agent, *j);
                (*j, hallucinate(&anchor, &predicted(*j), params))
            } else {
                (*j, y.clone())
            }
        })
        .collect();
    Aggregate::Readings(readings)
}

/// Per coordinate, drops the `f` largest and `f` smallest neighbor
/// contributions and sums the rest. Ties go to the lower neighbor index.
pub fn effective_readings_wmsr(
    agent: usize,
    own_state: &DVector<f64>,
    raw: &[Reading],
    spec: &FormationSpec,
    f: usize,
) -> Aggregate {
    if raw.len() <= 2 * f {
        return Aggregate::Hold;
    }
    let contributions: Vec<(usize, DVector<f64>)> = raw
        .iter()
        .map(|(j, y)| (*j, contribution(agent, own_state, *j, y, spec)))
        .collect();
    let dim = own_state.len();
    let mut sum = DVector::zeros(dim);
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(contributions.len());
    for m in 0..dim {
        column.clear();
        column.extend(contributions.iter().map(|(j, c)| (c[m], *j)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        sum[m] = column[f..column.len() - f].iter().map(|(v, _)| v).sum();
    }
    Aggregate::Contribution(sum)
}

/// Huber weight for a residual of norm `norm`: 1 inside the threshold,
/// `c / ‖r‖` beyond it.
pub fn huber_weight(norm: f64, c: f64) -> f64 {
    if norm <= c {
        1.0
    } else {
        c / norm
    }
}

pub fn effective_readings_huber(
    agent: usize,
    own_state: &DVector<f64>,
    raw: &[Reading],
    spec: &FormationSpec,
    c: f64,
) -> Aggregate {
    let mut sum = DVector::zeros(own_state.len());
    for (j, y) in raw {
        let r = contribution(agent, own_state, *j, y, spec);
        sum += &r * huber_weight(r.norm(), c);
    }
    Aggregate::Contribution(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// Formation with all desired positions at the origin, so contributions
    /// are simply `x_i - y_j`.
    fn flat(n_agents: usize, dim: usize) -> FormationSpec {
        FormationSpec::from_positions(vec![DVector::zeros(dim); n_agents]).unwrap()
    }

    #[test]
    fn passthrough() {
        let raw = vec![(1, v(&[4.0, 5.0])), (2, v(&[0.0, 1.0]))];
        assert_eq!(effective_readings_none(&raw), Aggregate::Readings(raw.clone()));
        assert_eq!(effective_readings_none(&[]), Aggregate::Readings(vec![]));
    }

    #[test]
    fn hallucination_at_anchor_is_exact() {
        let p = HallucinationParams::new(0.3, 1.0).unwrap();
        let rho = v(&[1.5, -2.0]);
        assert_eq!(hallucinate(&rho, &rho, &p), rho);
        assert_eq!(p.apply(&DVector::zeros(2)), DVector::zeros(2));
    }

    #[test]
    fn hallucination_linear_part() {
        let p = HallucinationParams::new(0.3, 0.0).unwrap();
        let rho = v(&[1.0, 1.0]);
        let out = hallucinate(&rho, &v(&[1.1, 1.0]), &p);
        assert!((out - v(&[1.03, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn default_delta_meets_bound_with_equality() {
        let p = HallucinationParams::new(0.3, 1.0).unwrap();
        let z = v(&[0.1, 0.0]);
        let d = p.delta(&z);
        // each component ½ (1/√2) 0.01
        let component = 0.5 * 0.01 / 2f64.sqrt();
        assert!((d[0] - component).abs() < 1e-16 && (d[1] - component).abs() < 1e-16);
        assert!((d.norm() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn hessian_validation() {
        let ok = vec![DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2) * 0.5];
        assert!(HallucinationParams::with_hessians(0.3, 1.0, ok).is_ok());
        let too_big = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)];
        assert!(HallucinationParams::with_hessians(0.3, 1.0, too_big).is_err());
        let asym = vec![DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.0]); 2];
        assert!(HallucinationParams::with_hessians(0.3, 1.0, asym).is_err());
        assert!(HallucinationParams::new(0.0, 1.0).is_err());
        assert!(HallucinationParams::new(0.3, -1.0).is_err());
    }

    #[test]
    fn explicit_hessians_evaluate_quadratic_forms() {
        let h1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]) * 0.5;
        let h2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]) * 0.5;
        let p = HallucinationParams::with_hessians(0.2, 1.0, vec![h1, h2]).unwrap();
        let z = v(&[2.0, 1.0]);
        let d = p.delta(&z);
        assert!((d[0] - 0.5 * 0.5 * 3.0).abs() < 1e-15);
        assert!((d[1] - 0.5 * 0.5 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn sosh_replaces_only_flagged() {
        let spec = FormationSpec::regular_polygon(5, 2, 1.0).unwrap();
        let params = HallucinationParams::new(0.3, 1.0).unwrap();
        let own = spec.position(0).clone();
        let raw: Vec<Reading> = (1..5).map(|j| (j, spec.position(j) + v(&[0.0, 0.0]))).collect();
        let none = effective_readings_sosh(0, &own, &raw, &BTreeSet::new(), |_| unreachable!(), &spec, &params);
        assert_eq!(none, Aggregate::Readings(raw.clone()));

        let mut spoofed = raw.clone();
        spoofed[1].1 += v(&[3.0, 3.0]);
        let flags = BTreeSet::from([2]);
        let out = effective_readings_sosh(0, &own, &spoofed, &flags, |j| spec.position(j).clone(), &spec, &params);
        let Aggregate::Readings(readings) = out else { panic!("expected readings") };
        assert_eq!(readings[0], raw[0]);
        assert_eq!(readings[2], raw[2]);
        // prediction sits exactly in the slot, so the hallucination is the slot
        assert!((&readings[1].1 - spec.position(2)).norm() < 1e-15);
    }

    #[test]
    fn wmsr_drops_extremes() {
        let spec = flat(5, 1);
        let own = v(&[0.0]);
        // contributions x_i - y_j = -y_j: {-1, 0, 0, 5}
        let raw = vec![(1, v(&[1.0])), (2, v(&[0.0])), (3, v(&[0.0])), (4, v(&[-5.0]))];
        assert_eq!(effective_readings_wmsr(0, &own, &raw, &spec, 1), Aggregate::Contribution(v(&[0.0])));
        let equal: Vec<Reading> = (1..5).map(|j| (j, v(&[-2.0]))).collect();
        assert_eq!(effective_readings_wmsr(0, &own, &equal, &spec, 1), Aggregate::Contribution(v(&[4.0])));
    }

    #[test]
    fn wmsr_degenerate_neighborhood_holds() {
        let spec = flat(3, 2);
        let raw = vec![(1, v(&[1.0, 1.0])), (2, v(&[0.0, 0.0]))];
        assert_eq!(effective_readings_wmsr(0, &v(&[0.0, 0.0]), &raw, &spec, 1), Aggregate::Hold);
    }

    #[test]
    fn huber_weights() {
        let spec = flat(3, 2);
        let own = v(&[0.0, 0.0]);
        let small = vec![(1, v(&[-0.5, 0.0]))];
        assert_eq!(effective_readings_huber(0, &own, &small, &spec, 1.0), Aggregate::Contribution(v(&[0.5, 0.0])));
        let large = vec![(1, v(&[-3.0, -3.0]))];
        let Aggregate::Contribution(c) = effective_readings_huber(0, &own, &large, &spec, 1.0) else {
            panic!("expected contribution")
        };
        let s = 0.5f64.sqrt();
        assert!((c - v(&[s, s])).norm() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in MitigationMethod::STANDARD_SET.into_iter().chain([MitigationMethod::Oracle]) {
            assert_eq!(m.name().parse::<MitigationMethod>().unwrap(), m);
        }
        assert!("median".parse::<MitigationMethod>().is_err());
    }
}

//! Scenario files: TOML on disk, [`ScenarioConfig`] in memory.
//!
//! Every field is optional and falls back to the reference scenario's value.

use std::path::Path;

use formation_core::attack::SpoofAttack;
use formation_core::experiment::{
    DetectionConfig, FormationConfig, GraphSpec, InitBox, ScenarioConfig,
};
use formation_core::mitigation::{HallucinationParams, MitigationConfig, MitigationMethod};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub formation: FormationSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default, rename = "attack", skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackSection>,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub mitigation: MitigationSection,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Complete,
    Ring,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default = "default_graph_kind")]
    pub kind: GraphKind,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[usize; 2]>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            kind: default_graph_kind(),
            nodes: default_nodes(),
            edges: Vec::new(),
        }
    }
}

fn default_graph_kind() -> GraphKind {
    GraphKind::Complete
}

fn default_nodes() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormationKind {
    Polygon,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    #[serde(default = "default_formation_kind")]
    pub kind: FormationKind,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<Vec<f64>>,
}

impl Default for FormationSection {
    fn default() -> Self {
        Self {
            kind: default_formation_kind(),
            radius: 1.0,
            positions: Vec::new(),
        }
    }
}

fn default_formation_kind() -> FormationKind {
    FormationKind::Polygon
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            steps: default_steps(),
        }
    }
}

fn default_dt() -> f64 {
    0.05
}

fn default_steps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub target: usize,
    pub offset: Vec<f64>,
    #[serde(default)]
    pub start_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_window")]
    pub calibration_window: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionConfig::default();
        Self {
            kappa: d.kappa,
            calibration_window: d.calibration_window,
            noise_std: d.noise_std,
            floor: d.floor,
        }
    }
}

fn default_kappa() -> f64 {
    DetectionConfig::default().kappa
}

fn default_window() -> usize {
    DetectionConfig::default().calibration_window
}

fn default_floor() -> f64 {
    DetectionConfig::default().floor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one", rename = "M")]
    pub m_bound: f64,
    /// One `n×n` matrix (list of rows) per output coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessians: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default = "default_wmsr_f")]
    pub wmsr_f: usize,
    #[serde(default = "one")]
    pub huber_c: f64,
}

impl Default for MitigationSection {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            gamma: default_gamma(),
            m_bound: 1.0,
            hessians: None,
            wmsr_f: default_wmsr_f(),
            huber_c: 1.0,
        }
    }
}

fn default_methods() -> Vec<String> {
    MitigationMethod::STANDARD_SET.iter().map(|m| m.name().to_string()).collect()
}

fn default_gamma() -> f64 {
    0.3
}

fn default_wmsr_f() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_lower")]
    pub init_lower: Vec<f64>,
    #[serde(default = "default_upper")]
    pub init_upper: Vec<f64>,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            base_seed: 0,
            init_lower: default_lower(),
            init_upper: default_upper(),
        }
    }
}

fn default_trials() -> usize {
    30
}

fn default_lower() -> Vec<f64> {
    InitBox::default().lower
}

fn default_upper() -> Vec<f64> {
    InitBox::default().upper
}

/// Provenance written next to data files. Ignored when the file is read back
/// as a scenario, except for `full_state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSection {
    pub tool_version: String,
    pub base_seed: u64,
    #[serde(default)]
    pub full_state: bool,
    #[serde(default)]
    pub outputs: Vec<String>,
}

/// Scenario plus the list of methods to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub methods: Vec<MitigationMethod>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections always serialize")
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let graph = match self.graph.kind {
            GraphKind::Complete => GraphSpec::Complete(self.graph.nodes),
            GraphKind::Ring => GraphSpec::Ring(self.graph.nodes),
            GraphKind::Explicit => GraphSpec::Explicit {
                nodes: self.graph.nodes,
                edges: self.graph.edges.iter().map(|[a, b]| (*a, *b)).collect(),
            },
        };
        if self.graph.kind != GraphKind::Explicit && !self.graph.edges.is_empty() {
            return Err(CliError::Config("graph.edges is only allowed with kind = \"explicit\"".into()));
        }
        let formation = match self.formation.kind {
            FormationKind::Polygon => {
                if !self.formation.positions.is_empty() {
                    return Err(CliError::Config(
                        "formation.positions is only allowed with kind = \"explicit\"".into(),
                    ));
                }
                FormationConfig::Polygon {
                    radius: self.formation.radius,
                }
            }
            FormationKind::Explicit => FormationConfig::Explicit(self.formation.positions.clone()),
        };
        let attacks = self
            .attacks
            .iter()
            .map(|a| SpoofAttack {
                target: a.target,
                offset: DVector::from_column_slice(&a.offset),
                start_step: a.start_step,
                end_step: a.end_step,
            })
            .collect();
        let m = &self.mitigation;
        let sosh = match &m.hessians {
            None => HallucinationParams::new(m.gamma, m.m_bound),
            Some(stack) => {
                let mut hessians = Vec::with_capacity(stack.len());
                for (idx, rows) in stack.iter().enumerate() {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(CliError::Config(format!("mitigation.hessians[{idx}] must be square")));
                    }
                    hessians.push(DMatrix::from_fn(n, n, |r, c| rows[r][c]));
                }
                HallucinationParams::with_hessians(m.gamma, m.m_bound, hessians)
            }
        }
        .map_err(|e| CliError::Config(format!("mitigation: {e}")))?;
        let methods = m
            .methods
            .iter()
            .map(|s| s.parse::<MitigationMethod>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("mitigation.methods: {e}")))?;
        if methods.is_empty() {
            return Err(CliError::Config("mitigation.methods must list at least one method".into()));
        }
        let scenario = ScenarioConfig {
            graph,
            formation,
            dt: self.dynamics.dt,
            steps: self.dynamics.steps,
            attacks,
            detection: DetectionConfig {
                kappa: self.detection.kappa,
                calibration_window: self.detection.calibration_window,
                noise_std: self.detection.noise_std,
                floor: self.detection.floor,
            },
            mitigation: MitigationConfig {
                method: methods[0],
                sosh,
                wmsr_f: m.wmsr_f,
                huber_c: m.huber_c,
            },
            init_box: InitBox {
                lower: self.monte_carlo.init_lower.clone(),
                upper: self.monte_carlo.init_upper.clone(),
            },
            trials: self.monte_carlo.trials,
            base_seed: self.monte_carlo.base_seed,
        };
        Ok(Resolved { scenario, methods })
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported formation spec: {0}")]
    UnsupportedSpec(String),

    #[error("agent {agent} has no reading for neighbor {neighbor}")]
    MissingReading { agent: usize, neighbor: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("closed-loop error matrix is not Schur (spectral radius {spectral_radius})")]
    NotSchur { spectral_radius: f64 },

    #[error("closed-loop matrix does not preserve the translation subspace (leakage {leakage:e})")]
    CertificateInapplicable { leakage: f64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("Lyapunov decrease violated at sample {sample}: V(e+) = {v_next}, V(e) = {v}")]
    DecreaseViolation {
        sample: usize,
        v: f64,
        v_next: f64,
        state: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

//! Lyapunov certificates for the formation error dynamics.
//!
//! Error coordinates are the orthonormal complement of uniform translations:
//! `e = Bᵀ X` with `Bᵀ (1 ⊗ I_n) = 0`. The closed loop restricted to that
//! subspace is `Γ_e = Bᵀ Γ B`; a pair `(Q_e, α)` with
//! `Γ_eᵀ Q_e Γ_e − Q_e = −α I` certifies the nominal loop, and the attacked loop
//! keeps a local decrease whenever `γ² < α / λ_max(Q_e)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attack::SelectorMask;
use crate::dynamics::attacked_step_reference;
use crate::eigen;
use crate::error::{Error, Result};
use crate::mitigation::HallucinationParams;

/// Tolerance for the translation-invariance check on `Γ`.
pub const PRESERVATION_TOL: f64 = 1e-8;

/// Orthonormal basis (`N·n × (N−1)·n`) of the subspace orthogonal to uniform
/// translations, built from Helmert contrasts.
pub fn translation_complement(agent_count: usize, dim: usize) -> DMatrix<f64> {
    let mut helmert = DMatrix::zeros(agent_count, agent_count.saturating_sub(1));
    for k in 1..agent_count {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            helmert[(r, k - 1)] = 1.0 / norm;
        }
        helmert[(k, k - 1)] = -(k as f64) / norm;
    }
    helmert.kronecker(&DMatrix::identity(dim, dim))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub gamma_e: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    pub spectral_radius: f64,
}

/// Restricts `Γ` to the error subspace.
///
/// Fails when `Γ` maps a uniform translation to something that is not a
/// translation, since the error dynamics would then depend on the centroid.
pub fn error_system(gamma: &DMatrix<f64>, agent_count: usize, dim: usize) -> Result<ErrorSystem> {
    let size = agent_count * dim;
    if gamma.nrows() != size || gamma.ncols() != size {
        return Err(Error::Shape {
            what: "closed-loop matrix",
            expected: size,
            got: gamma.nrows(),
        });
    }
    let basis = translation_complement(agent_count, dim);
    let translations = DMatrix::from_fn(size, dim, |r, c| if r % dim == c { 1.0 } else { 0.0 });
    let leakage = (basis.transpose() * gamma * &translations).abs().max();
    if leakage > PRESERVATION_TOL {
        return Err(Error::CertificateInapplicable { leakage });
    }
    let gamma_e = basis.transpose() * gamma * &basis;
    let spectral_radius = eigen::spectral_radius(&gamma_e);
    Ok(ErrorSystem {
        gamma_e,
        basis,
        spectral_radius,
    })
}

/// Solves `Γ_eᵀ Q Γ_e − Q = −I` through `(I − Γ_eᵀ ⊗ Γ_eᵀ) vec(Q) = vec(I)`.
///
/// Returns the symmetrised `Q_e` and `α = 1`.
pub fn solve_discrete_lyapunov(gamma_e: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !gamma_e.is_square() {
        return Err(Error::Shape {
            what: "error-system matrix",
            expected: gamma_e.nrows(),
            got: gamma_e.ncols(),
        });
    }
    let m = gamma_e.nrows();
    let rho = eigen::spectral_radius(gamma_e);
    if rho >= 1.0 {
        return Err(Error::NotSchur { spectral_radius: rho });
    }
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), 1.0));
    }
    let gt = gamma_e.transpose();
    let system = DMatrix::identity(m * m, m * m) - gt.kronecker(&gt);
    let rhs = DVector::from_column_slice(DMatrix::<f64>::identity(m, m).as_slice());
    let vec_q = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotSchur { spectral_radius: rho })?;
    let q = DMatrix::from_column_slice(m, m, vec_q.as_slice());
    let q = (&q + q.transpose()) * 0.5;
    Ok((q, 1.0))
}

/// `‖Γ_eᵀ Q Γ_e − Q + α I‖_F`.
pub fn lyapunov_residual(gamma_e: &DMatrix<f64>, q: &DMatrix<f64>, alpha: f64) -> f64 {
    let m = gamma_e.nrows();
    (gamma_e.transpose() * q * gamma_e - q + DMatrix::identity(m, m) * alpha).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub q_e: DMatrix<f64>,
    pub alpha: f64,
    pub lambda_max_qe: f64,
    pub lambda_min_qe: f64,
    pub gamma: f64,
    /// `λ_max(Q_e) γ²`.
    pub r_e: f64,
    /// `α / λ_max(Q_e)`, the largest admissible `γ²`.
    pub threshold: f64,
    pub margin: f64,
    pub stable: bool,
}

/// Checks `γ² < α / λ_max(Q_e)`.
pub fn certify(gamma: f64, q_e: &DMatrix<f64>, alpha: f64) -> LyapunovCertificate {
    let eigs = eigen::symmetric_eigenvalues(q_e);
    let lambda_max_qe = eigs.last().copied().unwrap_or(0.0);
    let lambda_min_qe = eigs.first().copied().unwrap_or(0.0);
    let threshold = alpha / lambda_max_qe;
    let g2 = gamma * gamma;
    LyapunovCertificate {
        q_e: q_e.clone(),
        alpha,
        lambda_max_qe,
        lambda_min_qe,
        gamma,
        r_e: lambda_max_qe * g2,
        threshold,
        margin: threshold - g2,
        stable: g2 < threshold,
    }
}

/// Largest eigenvalue of `Γ_eᵀ Q Γ_e − Q + α I`; non-positive (up to
/// round-off) for a valid certificate.
pub fn decrease_matrix_max_eigenvalue(gamma_e: &DMatrix<f64>, q: &DMatrix<f64>, alpha: f64) -> f64 {
    let m = gamma_e.nrows();
    let d = gamma_e.transpose() * q * gamma_e - q + DMatrix::identity(m, m) * alpha;
    let d = (&d + d.transpose()) * 0.5;
    eigen::symmetric_eigenvalues(&d)
        .last()
        .copied()
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub samples: usize,
    pub radius: f64,
    pub alpha: f64,
    pub r_e: f64,
    /// Smallest `C ≥ 0` with `ΔV ≤ −(α − r_e)‖e‖² + C‖e‖³` over all samples.
    pub fitted_c: f64,
    /// Largest observed `V(e⁺) / V(e)`.
    pub worst_ratio: f64,
    /// Largest observed `ΔV / ‖e‖²`.
    pub worst_normalized_decrease: f64,
}

/// Samples error states in the ball of radius `radius`, applies one attacked
/// step `X⁺ = Γ X − P f(X)` and checks that `V(e) = eᵀ Q_e e` strictly drops.
#[allow(clippy::too_many_arguments)]
pub fn empirical_decrease_check(
    system: &ErrorSystem,
    gamma_full: &DMatrix<f64>,
    q_e: &DMatrix<f64>,
    alpha: f64,
    attacked: &SelectorMask,
    params: &HallucinationParams,
    dim: usize,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DecreaseReport> {
    let m = system.gamma_e.nrows();
    let agent_count = gamma_full.nrows() / dim;
    let selector = attacked.matrix(agent_count, dim);
    let cert = certify(params.gamma(), q_e, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut fitted_c: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_normalized = f64::NEG_INFINITY;
    let lyap = |e: &DVector<f64>| e.dot(&(q_e * e));

    for sample in 0..samples {
        let direction = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = radius * rng.random::<f64>().powf(1.0 / m as f64);
        let e = if sample == 0 {
            DVector::zeros(m)
        } else {
            direction.normalize() * r
        };
        let x = &system.basis * &e;
        let x_next = attacked_step_reference(&x, gamma_full, &selector, dim, |z| params.apply(z));
        let e_next = system.basis.transpose() * x_next;
        let v = lyap(&e);
        let v_next = lyap(&e_next);
        let norm = e.norm();
        if norm == 0.0 {
            if v_next != 0.0 {
                return Err(Error::DecreaseViolation {
                    sample,
                    v,
                    v_next,
                    state: e.as_slice().to_vec(),
                });
            }
            continue;
        }
        if v_next >= v {
            return Err(Error::DecreaseViolation {
                sample,
                v,
                v_next,
                state: e.as_slice().to_vec(),
            });
        }
        let dv = v_next - v;
        let linear = -(cert.alpha - cert.r_e) * norm * norm;
        fitted_c = fitted_c.max((dv - linear) / norm.powi(3));
        worst_ratio = worst_ratio.max(v_next / v);
        worst_normalized = worst_normalized.max(dv / (norm * norm));
    }

    Ok(DecreaseReport {
        samples,
        radius,
        alpha: cert.alpha,
        r_e: cert.r_e,
        fitted_c,
        worst_ratio,
        worst_normalized_decrease: worst_normalized,
    })
}

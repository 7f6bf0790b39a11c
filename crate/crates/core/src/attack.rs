//! Broadcast-channel attacks. True states are never touched; only what an
//! agent's neighbors receive is altered.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A step-indexed transformer of one agent's broadcast.
pub trait BroadcastAttack: std::fmt::Debug + Send + Sync {
    fn target(&self) -> usize;

    fn is_active(&self, step: usize) -> bool;

    /// Value received by neighbors when the attack is active.
    fn corrupt(&self, true_state: &DVector<f64>, step: usize) -> DVector<f64>;
}

/// Constant-offset spoof: while active, `y_target = x_target + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpoofAttack {
    pub target: usize,
    pub offset: DVector<f64>,
    pub start_step: usize,
    /// Inclusive; `None` means the attack never stops.
    pub end_step: Option<usize>,
}

impl SpoofAttack {
    pub fn constant(target: usize, offset: DVector<f64>) -> Self {
        Self {
            target,
            offset,
            start_step: 0,
            end_step: None,
        }
    }

    fn overlaps(&self, other: &SpoofAttack) -> bool {
        let self_end = self.end_step.unwrap_or(usize::MAX);
        let other_end = other.end_step.unwrap_or(usize::MAX);
        self.start_step <= other_end && other.start_step <= self_end
    }
}

impl BroadcastAttack for SpoofAttack {
    fn target(&self) -> usize {
        self.target
    }

    fn is_active(&self, step: usize) -> bool {
        step >= self.start_step && self.end_step.is_none_or(|end| step <= end)
    }

    fn corrupt(&self, true_state: &DVector<f64>, _step: usize) -> DVector<f64> {
        true_state + &self.offset
    }
}

/// Checks targets, offsets and step windows, and rejects two attacks that
/// could be active on the same agent at the same step.
pub fn validate_attacks(attacks: &[SpoofAttack], agent_count: usize, dim: usize) -> Result<()> {
    for (idx, attack) in attacks.iter().enumerate() {
        if attack.target >= agent_count {
            return Err(Error::Config(format!(
                "attack {idx}: target {} is outside 0..{agent_count}",
                attack.target
            )));
        }
        if attack.offset.len() != dim {
            return Err(Error::Config(format!(
                "attack {idx}: offset has dimension {}, formation has {dim}",
                attack.offset.len()
            )));
        }
        if attack.offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("attack {idx}: offset must be finite")));
        }
        if let Some(end) = attack.end_step {
            if end < attack.start_step {
                return Err(Error::Config(format!(
                    "attack {idx}: end_step {end} precedes start_step {}",
                    attack.start_step
                )));
            }
        }
        for (other_idx, other) in attacks.iter().enumerate().skip(idx + 1) {
            if other.target == attack.target && attack.overlaps(other) {
                return Err(Error::Config(format!(
                    "attacks {idx} and {other_idx} are both active on agent {} at the same step",
                    attack.target
                )));
            }
        }
    }
    Ok(())
}

/// Broadcast buffer for step `step`: every agent transmits its true state
/// unless an active attack rewrites it.
pub fn corrupt_broadcasts<A: BroadcastAttack>(
    true_states: &[DVector<f64>],
    attacks: &[A],
    step: usize,
) -> Vec<DVector<f64>> {
    let mut out = true_states.to_vec();
    for attack in attacks.iter().filter(|a| a.is_active(step)) {
        out[attack.target()] = attack.corrupt(&true_states[attack.target()], step);
    }
    out
}

/// Agents whose broadcast is under attack at `step`.
pub fn active_targets<A: BroadcastAttack>(attacks: &[A], step: usize) -> SelectorMask {
    SelectorMask::new(
        attacks
            .iter()
            .filter(|a| a.is_active(step))
            .map(|a| a.target()),
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectorMask {
    pub attacked: BTreeSet<usize>,
}

impl SelectorMask {
    pub fn new(attacked: impl IntoIterator<Item = usize>) -> Self {
        Self {
            attacked: attacked.into_iter().collect(),
        }
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.attacked.contains(&agent)
    }

    /// Block-diagonal 0/1 matrix with `I_n` on attacked agents.
    pub fn matrix(&self, agent_count: usize, dim: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(agent_count * dim, agent_count * dim);
        for &i in self.attacked.iter().filter(|&&i| i < agent_count) {
            for m in 0..dim {
                p[(i * dim + m, i * dim + m)] = 1.0;
            }
        }
        p
    }
}

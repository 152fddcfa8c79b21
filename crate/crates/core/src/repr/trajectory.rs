use crate::error::{Error, Result};
use crate::mdp::{transition_matrix, Policy, TabularMdp};

/// Default limit on the number of partial paths explored.
pub const DEFAULT_PATH_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    /// `Σ P(τ) γ^η(τ)`.
    Sr { gamma: f64 },
    /// `Σ P(τ) exp(r(τ)/λ)` with `r(τ)` the rewards of every state on `τ`.
    Dr { lambda: f64 },
}

/// Sums over every trajectory from `from` to `to` with at most `horizon`
/// transitions, by explicit enumeration.
///
/// Refuses with [`Error::TooManyPaths`] once more than `cap` partial paths
/// have been generated.
pub fn trajectory_value_oracle(
    mdp: &TabularMdp,
    policy: &Policy,
    from: usize,
    to: usize,
    horizon: usize,
    mode: OracleMode,
    cap: usize,
) -> Result<f64> {
    let p = transition_matrix(mdp, policy)?;
    let p = p.entries();
    let n = mdp.n_states();
    if from >= n || to >= n {
        return Err(Error::Shape(format!("state index out of range for {n} states")));
    }
    let rewards = match mode {
        OracleMode::Dr { .. } => Some(
            mdp.state_rewards()
                .ok_or_else(|| Error::Precondition("trajectory oracle needs state rewards".into()))?,
        ),
        OracleMode::Sr { .. } => None,
    };
    let step_weight = |s: usize| match mode {
        OracleMode::Sr { gamma } => gamma,
        OracleMode::Dr { lambda } => (rewards.unwrap()[s] / lambda).exp(),
    };
    let first = match mode {
        OracleMode::Sr { .. } => 1.0,
        OracleMode::Dr { .. } => step_weight(from),
    };
    // (state, depth, probability × weight so far)
    let mut stack = vec![(from, 0usize, first)];
    let mut visited = 0usize;
    let mut total = 0.0;
    while let Some((s, depth, w)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Err(Error::TooManyPaths { cap });
        }
        if s == to {
            total += w;
        }
        if depth == horizon {
            continue;
        }
        for next in 0..n {
            let prob = p[(s, next)];
            if prob > 0.0 {
                stack.push((next, depth + 1, w * prob * step_weight(next)));
            }
        }
    }
    Ok(total)
}

//! Tabular control agents, reward shaping and the DR count bonus.

mod run;

pub use run::{run_control_loop, train_q_table, AgentSpec, Algorithm, Budget, CountBonus, EpisodeRecord, RunResult};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{argmax, Policy, TabularMdp, TransitionSample};
use crate::repr::EigenSummary;

/// Action values, row-major over `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
    init_value: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, init_value: f64) -> Self {
        Self {
            n_actions,
            values: vec![init_value; n_states * n_actions],
            init_value,
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn init_value(&self) -> f64 {
        self.init_value
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.n_states()).map(|s| self.greedy(s)).collect();
        Policy::deterministic(self.n_actions, &actions)
    }
}

/// Uniform action with probability `epsilon`, greedy otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_row: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q_row.is_empty() {
        return Err(Error::Empty("action set"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q_row.len()))
    } else {
        Ok(argmax(q_row))
    }
}

/// Reward of a transition as seen by a control agent: the reward of `s`
/// plus the terminal reward when `next` ends the episode.
pub fn transition_reward(mdp: &TabularMdp, sample: &TransitionSample) -> f64 {
    if sample.done {
        sample.r + mdp.terminal_reward(sample.next)
    } else {
        sample.r
    }
}

/// `q(s,a) += α[r + γ max q(s',·) − q(s,a)]`, no bootstrap when done.
pub fn q_learning_update(q: &mut QTable, sample: &TransitionSample, alpha: f64, gamma: f64) {
    let boot = if sample.done { 0.0 } else { gamma * q.max(sample.next) };
    let old = q.get(sample.s, sample.a);
    q.set(sample.s, sample.a, old + alpha * (sample.r + boot - old));
}

/// `q(s,a) += α[r + γ q(s',a') − q(s,a)]`, no bootstrap when done.
pub fn sarsa_update(q: &mut QTable, sample: &TransitionSample, next_action: usize, alpha: f64, gamma: f64) {
    let boot = if sample.done { 0.0 } else { gamma * q.get(sample.next, next_action) };
    let old = q.get(sample.s, sample.a);
    q.set(sample.s, sample.a, old + alpha * (sample.r + boot - old));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    DrPot,
    SrPot,
    SrPrior,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingConfig {
    pub mode: ShapingMode,
    pub eigvec: Option<EigenSummary>,
    pub beta: f64,
    pub gamma: f64,
    pub goal_state: Option<usize>,
}

impl ShapingConfig {
    pub fn none() -> Self {
        Self {
            mode: ShapingMode::None,
            eigvec: None,
            beta: 0.0,
            gamma: 0.99,
            goal_state: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("shaping beta {} outside [0, 1]", self.beta)));
        }
        match self.mode {
            ShapingMode::None => Ok(()),
            _ if self.eigvec.is_none() => Err(Error::Config("shaping needs an eigenvector".into())),
            ShapingMode::SrPrior if self.goal_state.is_none() => {
                Err(Error::Config("distance-based shaping needs a goal state".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `(1 − β) r + β r̂`.
///
/// The potential modes use `r̂ = γ e(s') − e(s)` with a zero potential once
/// the episode has ended; `sr_prior` uses `r̂ = −(e(goal) − e(s'))²`.
pub fn shaping_reward(cfg: &ShapingConfig, s: usize, next: usize, done: bool, r: f64) -> Result<f64> {
    let e = match (&cfg.mode, &cfg.eigvec) {
        (ShapingMode::None, _) => return Ok(r),
        (_, Some(e)) => e,
        (_, None) => return Err(Error::Config("shaping needs an eigenvector".into())),
    };
    let shaped = match cfg.mode {
        ShapingMode::DrPot | ShapingMode::SrPot => {
            let next_potential = if done { 0.0 } else { e.value(next)? };
            cfg.gamma * next_potential - e.value(s)?
        }
        ShapingMode::SrPrior => {
            let goal = cfg
                .goal_state
                .ok_or_else(|| Error::Config("distance-based shaping needs a goal state".into()))?;
            -(e.value(goal)? - e.value(next)?).powi(2)
        }
        ShapingMode::None => unreachable!("handled above"),
    };
    Ok((1.0 - cfg.beta) * r + cfg.beta * shaped)
}

/// `β log ‖row‖₂`.
pub fn count_bonus(row: &[f64], beta: f64) -> Result<f64> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite representation row".into()));
    }
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Domain("zero representation row".into()));
    }
    Ok(beta * norm.ln())
}

/// Optimal discounted action values by value iteration: the fixed point
/// Q-learning converges to, with terminal rewards paid on arrival.
pub fn optimal_q_values(mdp: &TabularMdp, gamma: f64, tol: f64, max_iters: usize) -> Result<QTable> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QTable::new(n, na, 0.0);
    let mut change = f64::INFINITY;
    for _ in 0..max_iters {
        let v: Vec<f64> = (0..n).map(|s| q.max(s)).collect();
        change = 0.0;
        for s in mdp.non_terminal_states() {
            for a in 0..na {
                let mut new = mdp.reward_of(s, a);
                for (sp, &p) in mdp.next_distribution(s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    new += p * if mdp.is_terminal(sp) { mdp.terminal_reward(sp) } else { gamma * v[sp] };
                }
                change = change.max((new - q.get(s, a)).abs());
                q.set(s, a, new);
            }
        }
        if change < tol {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_change: change,
        gap_estimate: 1.0 - gamma,
        last_iterate: q.values,
    })
}

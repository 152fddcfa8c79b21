//! Tabular MDPs, policies and the matrices they induce.

mod envs;
mod grid;

pub use envs::{make_environment, EnvName, Variant, ENVIRONMENT_NAMES};
pub use grid::{Cell, GridLayout, GridMap, RewardSpec, ACTION_NAMES};

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Reward function of an MDP; exactly one form is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reward {
    /// `r(s)`, indexed by state.
    State(Vec<f64>),
    /// `r(s, a)`, row-major over `(state, action)`.
    StateAction(Vec<f64>),
}

/// A finite MDP with a dense transition tensor.
///
/// Transitions out of terminal states are kept in the tensor (as self-loops
/// for grid worlds) but every induced transition matrix zeroes terminal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Reward,
    terminal: Vec<bool>,
    start: Vec<f64>,
    layout: Option<GridLayout>,
}

impl TabularMdp {
    /// Builds an MDP, checking the stochasticity and shape invariants.
    ///
    /// `transition` is laid out as `[s][a][s']`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Reward,
        terminal: Vec<bool>,
        start: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape("an MDP needs at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        match &reward {
            Reward::State(r) if r.len() != n_states => {
                return Err(Error::Shape(format!("state reward has {} entries", r.len())))
            }
            Reward::StateAction(r) if r.len() != n_states * n_actions => {
                return Err(Error::Shape(format!("state-action reward has {} entries", r.len())))
            }
            _ => {}
        }
        if terminal.len() != n_states || start.len() != n_states {
            return Err(Error::Shape("terminal mask and start distribution must cover every state".into()));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::Precondition(format!("negative transition probability at ({s}, {a})")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Precondition(format!(
                        "transition probabilities at ({s}, {a}) sum to {total}"
                    )));
                }
            }
        }
        if start.iter().any(|&p| !(p >= 0.0)) || (start.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Precondition("start distribution must be a probability vector".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            terminal,
            start,
            layout: None,
        })
    }

    pub(crate) fn with_layout(mut self, layout: GridLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// `p(s' | s, a)`.
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    /// The distribution `p(· | s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn reward(&self) -> &Reward {
        &self.reward
    }

    /// State rewards, if the MDP is defined with `r(s)`.
    pub fn state_rewards(&self) -> Option<&[f64]> {
        match &self.reward {
            Reward::State(r) => Some(r),
            Reward::StateAction(_) => None,
        }
    }

    /// Reward collected for occupying `s` and choosing `a`.
    pub fn reward_of(&self, s: usize, a: usize) -> f64 {
        match &self.reward {
            Reward::State(r) => r[s],
            Reward::StateAction(r) => r[s * self.n_actions + a],
        }
    }

    /// `r̄` over all state-action pairs; state rewards are broadcast across actions.
    pub fn pair_rewards(&self) -> Vec<f64> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.reward_of(s, a))
            .collect()
    }

    /// Reward a terminal state pays on arrival. Zero for non-terminal states.
    pub fn terminal_reward(&self, s: usize) -> f64 {
        if self.terminal[s] {
            self.reward_of(s, 0)
        } else {
            0.0
        }
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| !self.terminal[s]).collect()
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.terminal[s]).collect()
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    /// Draws a start state.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.start, rng)
    }

    /// Checks `r(s) < 0` (or `r(s, a) < 0`) for every non-terminal state.
    pub fn check_negative_rewards(&self) -> Result<()> {
        for s in self.non_terminal_states() {
            for a in 0..self.n_actions {
                let r = self.reward_of(s, a);
                if !(r < 0.0) {
                    return Err(Error::Precondition(format!(
                        "reward {r} at non-terminal state {s} (action {a}) must be negative"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Returns a copy with a replaced reward function.
    pub fn with_reward(&self, reward: Reward) -> Result<Self> {
        let mut out = Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.terminal.clone(),
            self.start.clone(),
        )?;
        out.layout = self.layout.clone();
        Ok(out)
    }

    /// Returns a copy whose terminal states pay `rewards[i]` for the i-th terminal state.
    pub fn with_terminal_rewards(&self, rewards: &[f64]) -> Result<Self> {
        let terminals = self.terminal_states();
        if terminals.len() != rewards.len() {
            return Err(Error::Shape(format!(
                "{} terminal rewards given for {} terminal states",
                rewards.len(),
                terminals.len()
            )));
        }
        let reward = match &self.reward {
            Reward::State(r) => {
                let mut r = r.clone();
                for (&t, &v) in terminals.iter().zip(rewards) {
                    r[t] = v;
                }
                Reward::State(r)
            }
            Reward::StateAction(r) => {
                let mut r = r.clone();
                for (&t, &v) in terminals.iter().zip(rewards) {
                    r[t * self.n_actions..(t + 1) * self.n_actions].fill(v);
                }
                Reward::StateAction(r)
            }
        };
        self.with_reward(reward)
    }

    /// Writes the MDP as flat CSV rows `s,a,next,p,r` (non-zero probabilities only).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "a", "next", "p", "r"])?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for (next, &p) in self.next_distribution(s, a).iter().enumerate() {
                    if p > 0.0 {
                        w.serialize((s, a, next, p, self.reward_of(s, a)))?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic corridor `s0 → s1 → … → s_{len-1}` with a single action.
///
/// Every non-terminal state pays −1 and the last state is terminal with reward 0.
pub fn chain(len: usize) -> TabularMdp {
    assert!(len >= 1, "a chain needs at least one state");
    let mut transition = vec![0.0; len * len];
    for s in 0..len {
        transition[s * len + (s + 1).min(len - 1)] = 1.0;
    }
    let mut reward = vec![-1.0; len];
    reward[len - 1] = 0.0;
    let mut terminal = vec![false; len];
    terminal[len - 1] = true;
    let mut start = vec![0.0; len];
    start[0] = 1.0;
    TabularMdp::new(len, 1, transition, Reward::State(reward), terminal, start)
        .expect("corridor is well formed")
}

/// Stochastic policy `π(a | s)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Precondition(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states: actions.len(),
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    /// A default policy must put mass on every action everywhere.
    pub fn is_default_eligible(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.row(s), rng)
    }

    /// The action with highest probability, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        argmax(self.row(s))
    }
}

/// `π(a | s) = 1 / |A|` everywhere.
pub fn uniform_policy(mdp: &TabularMdp) -> Policy {
    let n_actions = mdp.n_actions();
    Policy {
        n_states: mdp.n_states(),
        n_actions,
        probs: vec![1.0 / n_actions as f64; mdp.n_states() * n_actions],
    }
}

/// Policy-induced transition matrix with zeroed terminal rows.
///
/// Indexed by states (`P^π`) or by state-action pairs (`P̄^π`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    terminal_rows: Vec<bool>,
}

impl TransitionMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Which rows belong to terminal states (or pairs at terminal states).
    pub fn terminal_rows(&self) -> &[bool] {
        &self.terminal_rows
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Builds a matrix from raw entries; terminal rows must already be zero.
    pub fn from_entries(entries: DMatrix<f64>, terminal_rows: Vec<bool>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() != terminal_rows.len() {
            return Err(Error::Shape("transition matrix must be square and match the terminal mask".into()));
        }
        for (i, &t) in terminal_rows.iter().enumerate() {
            let row_sum: f64 = entries.row(i).iter().sum();
            if t && entries.row(i).iter().any(|&v| v != 0.0) {
                return Err(Error::Precondition(format!("terminal row {i} is not zero")));
            }
            if !t && (row_sum - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!("row {i} sums to {row_sum}")));
            }
        }
        Ok(Self {
            entries,
            terminal_rows,
        })
    }
}

fn check_policy_shape(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.n_states != mdp.n_states() || policy.n_actions != mdp.n_actions() {
        return Err(Error::Shape(format!(
            "policy is {}x{} but the MDP has {} states and {} actions",
            policy.n_states,
            policy.n_actions,
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `P^π(s, s') = Σ_a π(a|s) p(s'|s, a)`, zero rows at terminal states.
pub fn transition_matrix(mdp: &TabularMdp, policy: &Policy) -> Result<TransitionMatrix> {
    check_policy_shape(mdp, policy)?;
    let n = mdp.n_states();
    let mut entries = DMatrix::zeros(n, n);
    for s in mdp.non_terminal_states() {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (next, &p) in mdp.next_distribution(s, a).iter().enumerate() {
                entries[(s, next)] += pa * p;
            }
        }
    }
    Ok(TransitionMatrix {
        entries,
        terminal_rows: mdp.terminal_mask().to_vec(),
    })
}

/// `P̄^π(sa, s'a') = p(s'|s, a) π(a'|s')`, zero rows at terminal-state pairs.
///
/// Pairs are indexed `s * |A| + a`.
pub fn sa_transition_matrix(mdp: &TabularMdp, policy: &Policy) -> Result<TransitionMatrix> {
    check_policy_shape(mdp, policy)?;
    let na = mdp.n_actions();
    let m = mdp.n_pairs();
    let mut entries = DMatrix::zeros(m, m);
    let mut terminal_rows = vec![false; m];
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let row = s * na + a;
            if mdp.is_terminal(s) {
                terminal_rows[row] = true;
                continue;
            }
            for (next, &p) in mdp.next_distribution(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for a2 in 0..na {
                    entries[(row, next * na + a2)] += p * policy.prob(next, a2);
                }
            }
        }
    }
    Ok(TransitionMatrix {
        entries,
        terminal_rows,
    })
}

/// One environment transition `(s, a, r, s', done)`.
///
/// `r` is the reward for occupying `s` (and choosing `a`); a terminal
/// state's own reward is collected on arrival by whoever ends the episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
    pub done: bool,
}

/// Samples `s' ~ p(·|s, a)` with the caller's generator.
pub fn sample_step<R: Rng + ?Sized>(mdp: &TabularMdp, s: usize, a: usize, rng: &mut R) -> Result<TransitionSample> {
    if s >= mdp.n_states() || a >= mdp.n_actions() {
        return Err(Error::Shape(format!("state {s} / action {a} out of range")));
    }
    if mdp.is_terminal(s) {
        return Err(Error::Precondition(format!("cannot step from terminal state {s}")));
    }
    let next = sample_index(mdp.next_distribution(s, a), rng);
    Ok(TransitionSample {
        s,
        a,
        r: mdp.reward_of(s, a),
        next,
        done: mdp.is_terminal(next),
    })
}

/// Affine map of all rewards onto `[lo, hi]`; constant rewards map to `hi`.
pub fn rescale_rewards(mdp: &TabularMdp, lo: f64, hi: f64) -> Result<TabularMdp> {
    if !(hi > lo) {
        return Err(Error::Precondition(format!("rescale range [{lo}, {hi}] is empty")));
    }
    let rescale = |values: &[f64]| -> Vec<f64> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return vec![hi; values.len()];
        }
        values.iter().map(|&v| lo + (v - min) * (hi - lo) / (max - min)).collect()
    };
    let reward = match mdp.reward() {
        Reward::State(r) => Reward::State(rescale(r)),
        Reward::StateAction(r) => Reward::StateAction(rescale(r)),
    };
    mdp.with_reward(reward)
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

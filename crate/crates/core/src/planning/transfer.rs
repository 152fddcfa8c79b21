use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::features::{df_expected_td_update, pair_feature_rows, sf_td_update, DefaultFeatureTable, SuccessorFeatureTable};
use crate::agents::{epsilon_greedy, transition_reward};
use crate::error::{Error, Result};
use crate::mdp::{argmax, sample_step, Cell, Policy, TabularMdp};

/// State features for grid maps: `[empty, low, goal_1, …, goal_k]` one-hot,
/// goals in terminal-state order. Start cells count as empty.
pub fn grid_state_features(mdp: &TabularMdp) -> Result<DMatrix<f64>> {
    let layout = mdp
        .layout()
        .ok_or_else(|| Error::Precondition("state features need a grid layout".into()))?;
    let terminals = mdp.terminal_states();
    let mut phi = DMatrix::zeros(mdp.n_states(), 2 + terminals.len());
    for s in 0..mdp.n_states() {
        let col = match layout.kinds[s] {
            Cell::Low => 1,
            Cell::Goal => 2 + terminals.iter().position(|&t| t == s).expect("goal is terminal"),
            _ => 0,
        };
        phi[(s, col)] = 1.0;
    }
    Ok(phi)
}

/// Least-squares `w` with `φ w ≈ targets`; exact when `φ` is one-hot.
pub fn fit_reward_weights(phi: &DMatrix<f64>, targets: &[f64]) -> Result<Vec<f64>> {
    if phi.nrows() != targets.len() {
        return Err(Error::Shape(format!("{} feature rows for {} targets", phi.nrows(), targets.len())));
    }
    let svd = phi.clone().svd(true, true);
    let w = svd
        .solve(&DVector::from_column_slice(targets), 1e-12)
        .map_err(|e| Error::Domain(e.to_string()))?;
    Ok(w.iter().copied().collect())
}

/// Learned features to transfer from.
#[derive(Debug, Clone, Copy)]
pub enum TransferTables<'a> {
    /// Default features (state or state-action rows) learned on `source`.
    Df {
        table: &'a DefaultFeatureTable,
        source: &'a TabularMdp,
        lambda: f64,
    },
    /// Successor features with one row of `phi` per state.
    Sf {
        table: &'a SuccessorFeatureTable,
        phi: &'a DMatrix<f64>,
    },
}

/// Deterministic greedy policy for the reward function of `target`.
///
/// Default features are refused when any non-terminal reward differs from
/// the source MDP. Successor features use generalised policy improvement.
pub fn transfer_policy_from_features(tables: TransferTables<'_>, target: &TabularMdp) -> Result<Policy> {
    let (ns, na) = (target.n_states(), target.n_actions());
    let q: Vec<f64> = match tables {
        TransferTables::Df { table, source, lambda } => df_action_values(table, source, target, lambda)?,
        TransferTables::Sf { table, phi } => {
            if phi.nrows() != ns || phi.ncols() != table.d() || table.n_actions() != na {
                return Err(Error::Shape("successor features do not match the target MDP".into()));
            }
            if table.policies().is_empty() {
                return Err(Error::Empty("successor feature policies"));
            }
            let rewards: Vec<f64> = (0..ns)
                .map(|s| if target.is_terminal(s) { target.terminal_reward(s) } else { target.reward_of(s, 0) })
                .collect();
            let w = fit_reward_weights(phi, &rewards)?;
            (0..ns * na)
                .map(|i| {
                    (0..table.policies().len())
                        .map(|k| table.value(k, i / na, i % na, &w))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        }
    };
    let actions: Vec<usize> = (0..ns)
        .map(|s| if target.is_terminal(s) { 0 } else { argmax(&q[s * na..(s + 1) * na]) })
        .collect();
    Ok(Policy::deterministic(na, &actions))
}

fn df_action_values(
    table: &DefaultFeatureTable,
    source: &TabularMdp,
    target: &TabularMdp,
    lambda: f64,
) -> Result<Vec<f64>> {
    let (ns, na) = (target.n_states(), target.n_actions());
    if source.n_states() != ns || source.n_actions() != na || source.terminal_mask() != target.terminal_mask() {
        return Err(Error::Shape("source and target MDPs differ in shape".into()));
    }
    for s in target.non_terminal_states() {
        for a in 0..na {
            if source.reward_of(s, a) != target.reward_of(s, a) {
                return Err(Error::Precondition(format!(
                    "default features cannot transfer: the reward of non-terminal state {s} changed"
                )));
            }
        }
    }
    let pairs = match table.rows() {
        r if r == ns * na => true,
        r if r == ns => false,
        r => return Err(Error::Shape(format!("feature table has {r} rows for {ns} states"))),
    };
    let targets: Vec<f64> = table
        .pinned_rows()
        .iter()
        .map(|&row| (target.terminal_reward(if pairs { row / na } else { row }) / lambda).exp())
        .collect();
    let w = fit_reward_weights(table.phi(), &targets)?;
    let dots = table.values(&w)?;
    let mut q = vec![f64::NEG_INFINITY; ns * na];
    for s in target.non_terminal_states() {
        for a in 0..na {
            let x = if pairs {
                dots[s * na + a]
            } else {
                // exp(q/λ) = exp(r/λ) Σ p(s'|s,a) ζ(s')ᵀw
                let reach: f64 = target.next_distribution(s, a).iter().zip(&dots).map(|(p, d)| p * d).sum();
                (target.reward_of(s, a) / lambda).exp() * reach
            };
            q[s * na + a] = if x > 0.0 { lambda * x.ln() } else { f64::NEG_INFINITY };
        }
    }
    Ok(q)
}

/// TD-learns state-action default features under the uniform policy.
///
/// `phi` has one row per terminal state. The bootstrap averages over the
/// next action; episodes restart from the start distribution on termination.
pub fn learn_default_features<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    phi: &DMatrix<f64>,
    steps: usize,
    alpha: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<DefaultFeatureTable> {
    let na = mdp.n_actions();
    let terminal_rows: Vec<bool> = (0..mdp.n_pairs()).map(|i| mdp.is_terminal(i / na)).collect();
    let mut table = DefaultFeatureTable::new(&terminal_rows, pair_feature_rows(mdp, phi)?)?;
    let weight = 1.0 / na as f64;
    let mut next_rows = vec![(0, weight); na];
    let mut s = mdp.sample_start(rng);
    for _ in 0..steps {
        let a = rng.random_range(0..na);
        let sample = sample_step(mdp, s, a, rng)?;
        for (b, slot) in next_rows.iter_mut().enumerate() {
            slot.0 = sample.next * na + b;
        }
        df_expected_td_update(&mut table, s * na + a, sample.r, &next_rows, alpha, lambda);
        s = if sample.done { mdp.sample_start(rng) } else { sample.next };
    }
    Ok(table)
}

/// Step count and step sizes for learning successor features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfLearning {
    pub steps: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration of the behaviour policy around the evaluated one.
    pub epsilon: f64,
}

/// TD-learns `ψ_k` for a deterministic `policy`, acting ε-greedily around it.
pub fn learn_successor_features<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    table: &mut SuccessorFeatureTable,
    k: usize,
    policy: &Policy,
    params: SfLearning,
    phi: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let na = mdp.n_actions();
    let behaviour = |s: usize, rng: &mut R| -> Result<usize> {
        let mut prefs = vec![0.0; na];
        prefs[policy.mode(s)] = 1.0;
        epsilon_greedy(&prefs, params.epsilon, rng)
    };
    let mut s = mdp.sample_start(rng);
    for _ in 0..params.steps {
        let a = behaviour(s, rng)?;
        let sample = sample_step(mdp, s, a, rng)?;
        let next_a = if sample.done { 0 } else { policy.mode(sample.next) };
        sf_td_update(table, k, &sample, next_a, params.alpha, params.gamma, phi);
        s = if sample.done { mdp.sample_start(rng) } else { sample.next };
    }
    Ok(())
}

/// Undiscounted return of one episode following `policy`, cut at `cap` steps.
pub fn greedy_rollout_return<R: Rng + ?Sized>(mdp: &TabularMdp, policy: &Policy, cap: usize, rng: &mut R) -> Result<f64> {
    let mut s = mdp.sample_start(rng);
    let mut ret = 0.0;
    for _ in 0..cap {
        if mdp.is_terminal(s) {
            break;
        }
        let sample = sample_step(mdp, s, policy.sample(s, rng), rng)?;
        ret += transition_reward(mdp, &sample);
        s = sample.next;
    }
    Ok(ret)
}

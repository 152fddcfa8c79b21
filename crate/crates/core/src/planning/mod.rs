//! Optimal values and policies from the DR, and features for transfer.

mod features;
mod transfer;

pub use features::{
    default_features_closed, df_expected_td_update, df_td_update, pair_feature_rows, sf_td_update, terminal_one_hot, DefaultFeatureTable,
    SuccessorFeatureTable,
};
pub use transfer::{
    fit_reward_weights, greedy_rollout_return, grid_state_features, learn_default_features, learn_successor_features,
    transfer_policy_from_features, SfLearning, TransferTables,
};

use crate::error::{Error, Result};
use crate::linalg::{big_ln, exp_column, HpMatrix, DEFAULT_PRECISION};
use crate::mdp::{Policy, TransitionMatrix};
use crate::repr::{ProtoRep, RepMatrix};

pub(crate) fn hp_matrix(rep: &ProtoRep) -> Result<HpMatrix> {
    match &rep.matrix {
        RepMatrix::Hp(m) => Ok(m.clone()),
        RepMatrix::Dense(m) => HpMatrix::from_f64(m, DEFAULT_PRECISION),
        RepMatrix::Log(_) => Err(Error::Precondition("a log-domain matrix cannot be used for planning".into())),
    }
}

pub(crate) fn split_rows(p: &TransitionMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut n = Vec::new();
    let mut t = Vec::new();
    for (i, &term) in p.terminal_rows().iter().enumerate() {
        if term {
            t.push(i)
        } else {
            n.push(i)
        }
    }
    (n, t)
}

/// `λ log(Z_NN P_NT exp(r_T/λ))`, with terminal entries set to their reward.
fn log_values(z: &ProtoRep, p: &TransitionMatrix, r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let dim = p.dim();
    if z.dim() != dim || r.len() != dim {
        return Err(Error::Shape(format!(
            "representation of size {}, {} rewards and a {dim}-row transition matrix",
            z.dim(),
            r.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("temperature {lambda} must be positive")));
    }
    let zm = hp_matrix(z)?;
    let (nt, term) = split_rows(p);
    let mut out = r.to_vec();
    if nt.is_empty() {
        return Ok(out);
    }
    let precision = zm.precision();
    let p_hp = HpMatrix::from_f64(p.entries(), precision)?;
    let scaled: Vec<f64> = term.iter().map(|&t| r[t] / lambda).collect();
    let reach = p_hp.submatrix(&nt, &term).matmul(&exp_column(&scaled, precision)?)?;
    let product = zm.submatrix(&nt, &nt).matmul(&reach)?;
    for (k, &i) in nt.iter().enumerate() {
        out[i] = lambda * big_ln(product.get(k, 0))?;
    }
    Ok(out)
}

/// Optimal state values `v*` from the DR under the default policy.
///
/// `r` holds a reward per state; the returned vector has the same length and
/// terminal entries equal to their reward. States that cannot reach any
/// terminal state get `-inf`.
pub fn optimal_values_from_dr(z: &ProtoRep, p: &TransitionMatrix, r: &[f64], lambda: f64) -> Result<Vec<f64>> {
    log_values(z, p, r, lambda)
}

/// Optimal action values `q*` over pairs `s * |A| + a` from the state-action DR.
pub fn optimal_q_from_dr(z_bar: &ProtoRep, p_bar: &TransitionMatrix, r_bar: &[f64], lambda: f64) -> Result<Vec<f64>> {
    log_values(z_bar, p_bar, r_bar, lambda)
}

/// `π*(a|s) ∝ π_d(a|s) exp(q(s, a)/λ)`, normalised in the log domain.
pub fn optimal_policy(q: &[f64], default: &Policy, lambda: f64) -> Result<Policy> {
    let (ns, na) = (default.n_states(), default.n_actions());
    if q.len() != ns * na {
        return Err(Error::Shape(format!("{} action values for {ns} states and {na} actions", q.len())));
    }
    let mut probs = Vec::with_capacity(q.len());
    for s in 0..ns {
        let logits: Vec<f64> = (0..na)
            .map(|a| {
                let pd = default.prob(s, a);
                if pd == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    pd.ln() + q[s * na + a] / lambda
                }
            })
            .collect();
        let norm = crate::linalg::logsumexp(&logits);
        if norm == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("every action at state {s} has zero weight")));
        }
        if !norm.is_finite() {
            return Err(Error::Domain(format!("non-finite action values at state {s}")));
        }
        probs.extend(logits.iter().map(|&l| (l - norm).exp()));
    }
    Policy::from_probs(ns, na, probs)
}

#[cfg(test)]
pub(crate) mod oracle {
    use crate::mdp::{Policy, TabularMdp};

    /// Exponentiated value iteration `x(s) = e^{r(s)/λ} Σ P(s'|s) x(s')`, returned as `λ log x`.
    pub fn exp_value_iteration(mdp: &TabularMdp, pi: &Policy, lambda: f64) -> Vec<f64> {
        let n = mdp.n_states();
        let r = mdp.state_rewards().unwrap();
        let mut x: Vec<f64> = (0..n)
            .map(|s| if mdp.is_terminal(s) { (r[s] / lambda).exp() } else { 0.0 })
            .collect();
        for _ in 0..100_000 {
            let mut change: f64 = 0.0;
            let mut next = x.clone();
            for s in mdp.non_terminal_states() {
                let mut acc = 0.0;
                for a in 0..mdp.n_actions() {
                    for (sp, &p) in mdp.next_distribution(s, a).iter().enumerate() {
                        acc += pi.prob(s, a) * p * x[sp];
                    }
                }
                next[s] = (r[s] / lambda).exp() * acc;
                if next[s] > 0.0 {
                    change = change.max((next[s] / x[s] - 1.0).abs());
                } else {
                    change = f64::INFINITY;
                }
            }
            x = next;
            if change < 1e-15 {
                break;
            }
        }
        x.iter().map(|v| lambda * v.ln()).collect()
    }

    /// The pair version, `X(s,a) = e^{r(s,a)/λ} Σ p(s'|s,a) Σ π_d(a'|s') X(s',a')`.
    pub fn exp_q_iteration(mdp: &TabularMdp, pi: &Policy, lambda: f64) -> Vec<f64> {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        let mut x = vec![0.0; n * na];
        for s in mdp.terminal_states() {
            for a in 0..na {
                x[s * na + a] = (mdp.reward_of(s, a) / lambda).exp();
            }
        }
        for _ in 0..100_000 {
            let v: Vec<f64> = (0..n).map(|s| (0..na).map(|a| pi.prob(s, a) * x[s * na + a]).sum()).collect();
            let mut change: f64 = 0.0;
            for s in mdp.non_terminal_states() {
                for a in 0..na {
                    let acc: f64 = mdp.next_distribution(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                    let new = (mdp.reward_of(s, a) / lambda).exp() * acc;
                    let old = x[s * na + a];
                    change = change.max(if old > 0.0 { (new / old - 1.0).abs() } else { f64::INFINITY });
                    x[s * na + a] = new;
                }
            }
            if change < 1e-15 {
                break;
            }
        }
        x.iter().map(|v| lambda * v.ln()).collect()
    }
}

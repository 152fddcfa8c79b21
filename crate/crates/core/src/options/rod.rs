use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{exploration_metrics, learn_eigenoption, offline_q_learning, reachable_states, EigenOption, OPTION_STEP_CAP};
use crate::agents::QTable;
use crate::error::{Error, Result};
use crate::mdp::{sample_step, TabularMdp, TransitionSample};
use crate::planning::greedy_rollout_return;
use crate::repr::{dr_td_update, sr_td_update, top_log_eigenvector, EigenSummary, ProtoRep, RepKind, RepParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RodKind {
    /// Options from the learned DR.
    Race,
    /// Options from the learned SR.
    Ceo,
    /// Uniform random walk.
    Rw,
}

impl RodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RodKind::Race => "race",
            RodKind::Ceo => "ceo",
            RodKind::Rw => "rw",
        }
    }
}

/// Offline Q-learning run after every iteration on the data gathered so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineQ {
    pub alpha: f64,
    pub gamma: f64,
    pub sweeps: usize,
    pub eval_cap: usize,
}

impl Default for OfflineQ {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            sweeps: 10,
            eval_cap: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodConfig {
    pub kind: RodKind,
    pub p_option: f64,
    pub n_learn: usize,
    /// Step size of the representation updates.
    pub alpha: f64,
    pub n_option: usize,
    pub alpha0: f64,
    pub gamma0: f64,
    pub n_steps: usize,
    pub n_iter: usize,
    pub lambda: f64,
    /// SR discount.
    pub gamma: f64,
}

impl Default for RodConfig {
    fn default() -> Self {
        Self {
            kind: RodKind::Race,
            p_option: 0.05,
            n_learn: 10,
            alpha: 0.1,
            n_option: 8,
            alpha0: 0.1,
            gamma0: 0.99,
            n_steps: 100,
            n_iter: 50,
            lambda: 1.3,
            gamma: 0.99,
        }
    }
}

impl RodConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("rod: {what}")));
        if !(0.0..1.0).contains(&self.p_option) {
            return bad("p_option must lie in [0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return bad("step sizes must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma0) || !(0.0..1.0).contains(&self.gamma) {
            return bad("discounts must lie in [0, 1)");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if self.n_option == 0 || self.n_steps == 0 || self.n_iter == 0 || self.n_learn == 0 {
            return bad("n_option, n_steps, n_iter and n_learn must be positive");
        }
        Ok(())
    }
}

/// State carried between iterations of the discovery cycle.
#[derive(Debug, Clone)]
pub struct RodState {
    /// Learned DR (RACE) or SR (CEO), identity-initialised.
    pub rep: DMatrix<f64>,
    /// Every transition in collection order.
    pub dataset: Vec<TransitionSample>,
    /// Dataset length at the end of each iteration.
    pub ends: Vec<usize>,
    pub options: VecDeque<EigenOption>,
    /// Number of option invocations so far.
    pub option_events: usize,
    pub visited: Vec<bool>,
    pub eigen: Option<EigenSummary>,
    pub iteration: usize,
}

impl RodState {
    pub fn new(mdp: &TabularMdp) -> Self {
        let n = mdp.n_states();
        Self {
            rep: DMatrix::identity(n, n),
            dataset: Vec::new(),
            ends: Vec::new(),
            options: VecDeque::new(),
            option_events: 0,
            visited: vec![false; n],
            eigen: None,
            iteration: 0,
        }
    }
}

/// One collect / learn / discover cycle.
///
/// Collection starts from the start distribution and runs exactly `n_steps`
/// environment steps; an option still running when the budget is spent is
/// cut short. Option transitions are stored and learned from like primitive
/// ones. Representation sweeps run backwards through the new data.
pub fn rod_iteration<R: Rng + ?Sized>(state: &mut RodState, mdp: &TabularMdp, cfg: &RodConfig, rng: &mut R) -> Result<()> {
    if !mdp.terminal_states().is_empty() {
        return Err(Error::Precondition("option discovery runs on maps without terminal states".into()));
    }
    if state.rep.nrows() != mdp.n_states() {
        return Err(Error::Shape("discovery state does not match the MDP".into()));
    }
    let iteration = state.iteration;
    let at = |e: Error| Error::AtIteration {
        iteration,
        source: Box::new(e),
    };
    let begin = state.dataset.len();
    let mut s = mdp.sample_start(rng);
    let mut taken = 0;
    let n_actions = mdp.n_actions();
    while taken < cfg.n_steps {
        let use_option = cfg.kind != RodKind::Rw && !state.options.is_empty() && rng.random::<f64>() < cfg.p_option;
        if use_option {
            let option = &state.options[rng.random_range(0..state.options.len())];
            state.option_events += 1;
            let mut len = 0;
            while taken < cfg.n_steps && len < OPTION_STEP_CAP {
                let Some(a) = option.action(s) else { break };
                let t = sample_step(mdp, s, a, rng)?;
                state.dataset.push(t);
                s = t.next;
                taken += 1;
                len += 1;
            }
        } else {
            let t = sample_step(mdp, s, rng.random_range(0..n_actions), rng)?;
            state.dataset.push(t);
            s = t.next;
            taken += 1;
        }
    }
    state.ends.push(state.dataset.len());
    for t in &state.dataset[begin..] {
        state.visited[t.s] = true;
        state.visited[t.next] = true;
    }
    state.iteration += 1;
    if cfg.kind == RodKind::Rw {
        return Ok(());
    }

    let fresh = &state.dataset[begin..];
    for _ in 0..cfg.n_learn {
        for t in fresh.iter().rev() {
            match cfg.kind {
                RodKind::Race => dr_td_update(&mut state.rep, t.s, t.r, Some(t.next), cfg.alpha, cfg.lambda),
                _ => sr_td_update(&mut state.rep, t, cfg.alpha, cfg.gamma),
            }
        }
    }
    let visited: Vec<usize> = (0..mdp.n_states()).filter(|&s| state.visited[s]).collect();
    let rep = match cfg.kind {
        RodKind::Race => ProtoRep::dense(RepKind::Dr, RepParams::Lambda(cfg.lambda), "rod", state.rep.clone()),
        _ => ProtoRep::dense(RepKind::Sr, RepParams::Gamma(cfg.gamma), "rod", state.rep.clone()),
    };
    let eigen = top_log_eigenvector(&rep, Some(&visited)).map_err(at)?;
    let option = learn_eigenoption(&state.dataset, &eigen, n_actions, cfg.alpha0, cfg.gamma0, iteration).map_err(at)?;
    state.options.push_back(option);
    while state.options.len() > cfg.n_option {
        state.options.pop_front();
    }
    state.eigen = Some(eigen);
    Ok(())
}

/// Outcome of one discovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodResult {
    pub kind: RodKind,
    pub seed: u64,
    /// Cumulative percentage of reachable states visited after each iteration.
    pub visit_pct: Vec<f64>,
    /// Mean reward per step over all steps so far, after each iteration.
    pub mean_reward: Vec<f64>,
    /// Steps taken from each state over the whole run.
    pub counts: Vec<u64>,
    pub option_events: usize,
    /// Greedy return of offline Q-learning after each iteration, when requested.
    pub q_returns: Option<Vec<f64>>,
}

impl RodResult {
    /// Writes `iteration,visit_pct,mean_reward[,q_return]`.
    pub fn write_curve_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["seed", "iteration", "visit_pct", "mean_reward"];
        if self.q_returns.is_some() {
            header.push("q_return");
        }
        w.write_record(&header)?;
        for i in 0..self.visit_pct.len() {
            let mut row = vec![
                self.seed.to_string(),
                i.to_string(),
                self.visit_pct[i].to_string(),
                self.mean_reward[i].to_string(),
            ];
            if let Some(q) = &self.q_returns {
                row.push(q[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `n_iter` iterations from an empty dataset.
///
/// With `offline` set, a Q-table trained offline on the data so far (with
/// `task`'s rewards and terminals) is evaluated by one greedy episode on
/// `task` after each iteration.
pub fn run_rod(
    mdp: &TabularMdp,
    cfg: &RodConfig,
    offline: Option<(&TabularMdp, OfflineQ)>,
    seed: u64,
) -> Result<RodResult> {
    cfg.validate()?;
    if let Some((task, _)) = offline {
        if task.n_states() != mdp.n_states() || task.n_actions() != mdp.n_actions() {
            return Err(Error::Config("evaluation task does not share the state space".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = RodState::new(mdp);
    let mut q = offline.map(|(task, _)| QTable::new(task.n_states(), task.n_actions(), 0.0));
    let mut q_returns = Vec::new();
    for _ in 0..cfg.n_iter {
        rod_iteration(&mut state, mdp, cfg, &mut rng)?;
        if let (Some((task, params)), Some(q)) = (offline, q.as_mut()) {
            offline_q_learning(&state.dataset, task, q, params.alpha, params.gamma, params.sweeps)?;
            q_returns.push(greedy_rollout_return(task, &q.greedy_policy(), params.eval_cap, &mut rng)?);
        }
    }
    let metrics = exploration_metrics(&state.dataset, &state.ends, &reachable_states(mdp))?;
    Ok(RodResult {
        kind: cfg.kind,
        seed,
        visit_pct: metrics.visit_pct,
        mean_reward: metrics.mean_reward,
        counts: metrics.counts,
        option_events: state.option_events,
        q_returns: offline.map(|_| q_returns),
    })
}

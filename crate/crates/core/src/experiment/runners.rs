use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::config::{CountMethod, ExperimentConfig, ExperimentKind, RodGrid, TransferSettings};
use crate::agents::{
    optimal_q_values, run_control_loop, train_q_table, AgentSpec, Algorithm, Budget, CountBonus, ShapingConfig,
    ShapingMode,
};
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_PRECISION;
use crate::mdp::{make_environment, transition_matrix, uniform_policy, TabularMdp, Variant};
use crate::options::{run_rod, OfflineQ, RodConfig, RodKind};
use crate::planning::{
    grid_state_features, greedy_rollout_return, learn_default_features, learn_successor_features, terminal_one_hot,
    transfer_policy_from_features, SfLearning, SuccessorFeatureTable, TransferTables,
};
use crate::repr::{dr_closed_form, sr_closed_form, top_log_eigenvector, EigenSummary};

/// What one grid cell runs.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSpec {
    Shaping { mode: ShapingMode, alpha: f64, beta: f64 },
    Rod(RodConfig),
    Count { method: CountMethod, eta: f64, alpha: f64, beta: f64, lambda: f64 },
    Transfer,
}

/// One fully specified parameter combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub method: String,
    pub spec: CellSpec,
}

impl Cell {
    /// Parameters as JSON, for manifests and reports.
    pub fn params(&self) -> serde_json::Value {
        match &self.spec {
            CellSpec::Shaping { mode, alpha, beta } => json!({ "method": mode, "alpha": alpha, "beta": beta }),
            CellSpec::Rod(c) => serde_json::to_value(c).expect("rod config serializes"),
            CellSpec::Count { method, eta, alpha, beta, lambda } => {
                json!({ "method": method, "eta": eta, "alpha": alpha, "beta": beta, "lambda": lambda })
            }
            CellSpec::Transfer => json!({ "method": "transfer" }),
        }
    }
}

/// One raw observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub method: String,
    pub metric: &'static str,
    pub x: usize,
    pub value: f64,
}

impl RawRow {
    fn new(method: &str, metric: &'static str, x: usize, value: f64) -> Self {
        Self { method: method.to_string(), metric, x, value }
    }
}

/// ROD configurations of a grid; random walks ignore the option parameters.
pub fn rod_cells(g: &RodGrid) -> Vec<RodConfig> {
    let mut out = Vec::new();
    for &kind in &g.kinds {
        let base = RodConfig {
            kind,
            n_steps: g.n_steps,
            n_iter: g.n_iter,
            alpha0: g.alpha0,
            gamma0: g.gamma0,
            lambda: g.lambda,
            gamma: g.gamma,
            ..RodConfig::default()
        };
        if kind == RodKind::Rw {
            out.push(base);
            continue;
        }
        for &p_option in &g.p_option {
            for &n_learn in &g.n_learn {
                for &alpha in &g.alpha {
                    for &n_option in &g.n_option {
                        out.push(RodConfig { p_option, n_learn, alpha, n_option, ..base });
                    }
                }
            }
        }
    }
    out
}

/// Enumerates the grid in a fixed order.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut specs: Vec<(String, CellSpec)> = Vec::new();
    match cfg.experiment {
        ExperimentKind::Shaping => {
            let g = cfg.shaping.clone().unwrap_or_default();
            for &mode in &g.methods {
                let betas = if mode == ShapingMode::None { vec![0.0] } else { g.beta.clone() };
                for &alpha in &g.alpha {
                    for &beta in &betas {
                        specs.push((shaping_name(mode).into(), CellSpec::Shaping { mode, alpha, beta }));
                    }
                }
            }
        }
        ExperimentKind::Rod => {
            let g = cfg.rod.clone().unwrap_or_default();
            for c in rod_cells(&g) {
                specs.push((c.kind.as_str().into(), CellSpec::Rod(c)));
            }
        }
        ExperimentKind::Count => {
            let g = cfg.count.clone().unwrap_or_default();
            for &method in &g.methods {
                for &eta in &g.eta {
                    if method == CountMethod::Sarsa {
                        specs.push((method.as_str().into(), CellSpec::Count { method, eta, alpha: 0.0, beta: 0.0, lambda: 0.0 }));
                        continue;
                    }
                    for &alpha in &g.alpha {
                        for &beta in &g.beta {
                            for &lambda in &g.lambda {
                                specs.push((method.as_str().into(), CellSpec::Count { method, eta, alpha, beta, lambda }));
                            }
                        }
                    }
                }
            }
        }
        ExperimentKind::Transfer => specs.push(("transfer".into(), CellSpec::Transfer)),
        ExperimentKind::ReprAnalysis => {
            return Err(Error::Config("repr_analysis has no runs to sweep".into()));
        }
    }
    Ok(specs
        .into_iter()
        .enumerate()
        .map(|(index, (method, spec))| Cell { index, method, spec })
        .collect())
}

fn shaping_name(mode: ShapingMode) -> &'static str {
    match mode {
        ShapingMode::DrPot => "dr_pot",
        ShapingMode::SrPot => "sr_pot",
        ShapingMode::SrPrior => "sr_prior",
        ShapingMode::None => "none",
    }
}

/// Data shared by every run of an experiment.
pub struct Context {
    pub mdp: TabularMdp,
    dr_vector: Option<EigenSummary>,
    sr_vector: Option<EigenSummary>,
    goal: Option<usize>,
    eval_task: Option<TabularMdp>,
}

/// Task whose rewards and goals grade exploration data gathered on `variant`.
pub fn evaluation_variant(variant: Variant) -> Variant {
    match variant {
        Variant::NoTerminalsNoLowReward => Variant::NoLowReward,
        Variant::NoTerminals => Variant::Standard,
        v => v,
    }
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mdp = make_environment(cfg.environment.as_str(), cfg.variant)?;
        let mut ctx = Context { mdp, dr_vector: None, sr_vector: None, goal: None, eval_task: None };
        match cfg.experiment {
            ExperimentKind::Shaping => {
                let g = cfg.shaping.clone().unwrap_or_default();
                let p = transition_matrix(&ctx.mdp, &uniform_policy(&ctx.mdp))?;
                if g.methods.contains(&ShapingMode::DrPot) {
                    let r = ctx
                        .mdp
                        .state_rewards()
                        .ok_or_else(|| Error::Config("shaping needs state rewards".into()))?;
                    let z = dr_closed_form(r, &p, g.lambda, DEFAULT_PRECISION, "uniform")?;
                    ctx.dr_vector = Some(top_log_eigenvector(&z, None)?);
                }
                if g.methods.iter().any(|m| matches!(m, ShapingMode::SrPot | ShapingMode::SrPrior)) {
                    let sr = sr_closed_form(&p, g.sr_gamma, "uniform")?;
                    ctx.sr_vector = Some(top_log_eigenvector(&sr, None)?);
                }
                ctx.goal = ctx.mdp.terminal_states().first().copied();
            }
            ExperimentKind::Rod if cfg.rod.as_ref().is_some_and(|g| g.offline_q) => {
                ctx.eval_task = Some(make_environment(cfg.environment.as_str(), evaluation_variant(cfg.variant))?);
            }
            _ => {}
        }
        Ok(ctx)
    }
}

/// Runs one seed of one cell.
pub fn run_cell(cfg: &ExperimentConfig, ctx: &Context, cell: &Cell, seed: u64) -> Result<Vec<RawRow>> {
    let m = cell.method.as_str();
    match &cell.spec {
        CellSpec::Shaping { mode, alpha, beta } => {
            let g = cfg.shaping.clone().unwrap_or_default();
            let spec = AgentSpec {
                algorithm: Algorithm::QLearning,
                alpha: *alpha,
                gamma: g.gamma,
                epsilon: g.epsilon,
                init_value: g.init_value,
            };
            let eigvec = match mode {
                ShapingMode::DrPot => ctx.dr_vector.clone(),
                ShapingMode::SrPot | ShapingMode::SrPrior => ctx.sr_vector.clone(),
                ShapingMode::None => None,
            };
            let shaping = ShapingConfig { mode: *mode, eigvec, beta: *beta, gamma: g.gamma, goal_state: ctx.goal };
            let budget = Budget::Episodes { episodes: g.episodes, step_cap: g.step_cap };
            let run = run_control_loop(&ctx.mdp, &spec, Some(&shaping), None, budget, seed)?;
            let mut rows = Vec::new();
            for e in &run.episodes {
                rows.push(RawRow::new(m, "return", e.episode, e.ret));
                rows.push(RawRow::new(m, "steps", e.episode, e.steps as f64));
            }
            Ok(rows)
        }
        CellSpec::Rod(rc) => {
            let offline = ctx.eval_task.as_ref().map(|t| (t, OfflineQ::default()));
            let res = run_rod(&ctx.mdp, rc, offline, seed)?;
            let mut rows = Vec::new();
            for (i, (v, r)) in res.visit_pct.iter().zip(&res.mean_reward).enumerate() {
                rows.push(RawRow::new(m, "visit_pct", i, *v));
                rows.push(RawRow::new(m, "mean_reward", i, *r));
            }
            for (i, q) in res.q_returns.iter().flatten().enumerate() {
                rows.push(RawRow::new(m, "q_return", i, *q));
            }
            for (s, c) in res.counts.iter().enumerate() {
                rows.push(RawRow::new(m, "visits", s, *c as f64));
            }
            Ok(rows)
        }
        CellSpec::Count { method, eta, alpha, beta, lambda } => {
            let g = cfg.count.clone().unwrap_or_default();
            let spec = AgentSpec {
                algorithm: Algorithm::Sarsa,
                alpha: *eta,
                gamma: g.gamma,
                epsilon: g.epsilon,
                init_value: g.init_value,
            };
            let bonus = (*method == CountMethod::SarsaDr).then_some(CountBonus {
                beta: *beta,
                lambda: *lambda,
                alpha: *alpha,
                rescale: (-1.0, 0.0),
            });
            let run = run_control_loop(&ctx.mdp, &spec, None, bonus.as_ref(), Budget::Steps { steps: g.steps }, seed)?;
            Ok(vec![RawRow::new(m, "total_return", 0, run.total_return)])
        }
        CellSpec::Transfer => {
            let t = cfg.transfer.clone().unwrap_or_default();
            let out = transfer_run(&ctx.mdp, &t, seed)?;
            let mut rows = Vec::new();
            for (name, returns) in &out.methods {
                let mut cum = 0.0;
                for (j, r) in returns.iter().enumerate() {
                    cum += r;
                    rows.push(RawRow::new(name, "return", j, *r));
                    rows.push(RawRow::new(name, "cum_return", j, cum));
                }
            }
            Ok(rows)
        }
    }
}

/// Per-method greedy returns on each test configuration of one transfer run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    /// `df`, `sf<k>` for every SF count, then `oracle`.
    pub methods: Vec<(String, Vec<f64>)>,
}

fn sample_terminal_rewards<R: Rng + ?Sized>(k: usize, std: f64, rng: &mut R) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..k).map(|_| normal.sample(rng)).collect())
}

/// Learns DFs under the default policy and SFs for `sources` sampled tasks,
/// then scores the transferred policies on `tests` fresh terminal-reward draws.
pub fn transfer_run(mdp: &TabularMdp, t: &TransferSettings, seed: u64) -> Result<TransferOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = mdp.terminal_states().len();
    if k == 0 {
        return Err(Error::Precondition("transfer needs terminal states".into()));
    }
    let df = learn_default_features(mdp, &terminal_one_hot(k), t.df_steps, t.alpha, t.lambda, &mut rng)?;

    let phi: DMatrix<f64> = grid_state_features(mdp)?;
    let mut sf = SuccessorFeatureTable::new(mdp.n_actions(), phi.ncols());
    let q_spec = AgentSpec {
        algorithm: Algorithm::QLearning,
        alpha: t.alpha,
        gamma: t.gamma,
        epsilon: t.epsilon,
        init_value: 0.0,
    };
    let sf_params = SfLearning { steps: t.sf_steps, alpha: t.alpha, gamma: t.gamma, epsilon: t.epsilon };
    for i in 0..t.sources {
        let task = mdp.with_terminal_rewards(&sample_terminal_rewards(k, t.reward_std, &mut rng)?)?;
        let (q, _) = train_q_table(&task, &q_spec, Budget::Steps { steps: t.source_steps }, rng.random())?;
        let idx = sf.add_policy(&format!("source{i}"), mdp.n_states());
        learn_successor_features(&task, &mut sf, idx, &q.greedy_policy(), sf_params, &phi, &mut rng)?;
    }
    let sf_tables: Vec<(usize, SuccessorFeatureTable)> = t.sf_counts.iter().map(|&n| (n, sf.truncated(n))).collect();

    let mut methods: Vec<(String, Vec<f64>)> = std::iter::once("df".to_string())
        .chain(t.sf_counts.iter().map(|n| format!("sf{n}")))
        .chain(std::iter::once("oracle".to_string()))
        .map(|name| (name, Vec::with_capacity(t.tests)))
        .collect();
    for _ in 0..t.tests {
        let target = mdp.with_terminal_rewards(&sample_terminal_rewards(k, t.reward_std, &mut rng)?)?;
        let mut policies = vec![transfer_policy_from_features(
            TransferTables::Df { table: &df, source: mdp, lambda: t.lambda },
            &target,
        )?];
        for (_, table) in &sf_tables {
            policies.push(transfer_policy_from_features(TransferTables::Sf { table, phi: &phi }, &target)?);
        }
        policies.push(optimal_q_values(&target, t.gamma, 1e-10, 100_000)?.greedy_policy());
        for ((_, returns), policy) in methods.iter_mut().zip(&policies) {
            returns.push(greedy_rollout_return(&target, policy, t.eval_cap, &mut rng)?);
        }
    }
    Ok(TransferOutcome { methods })
}

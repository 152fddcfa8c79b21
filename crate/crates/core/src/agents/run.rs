use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    count_bonus, epsilon_greedy, q_learning_update, sarsa_update, shaping_reward, transition_reward, QTable,
    ShapingConfig, ShapingMode,
};
use crate::error::{Error, Result};
use crate::mdp::{rescale_rewards, sample_step, TabularMdp, TransitionSample};
use crate::repr::dr_sa_td_update;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    Sarsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub init_value: f64,
}

/// DR-norm exploration bonus learned online from rewards rescaled to `rescale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountBonus {
    pub beta: f64,
    pub lambda: f64,
    /// Step size of the DR update.
    pub alpha: f64,
    pub rescale: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Episodes from the start distribution, each cut at `step_cap` steps.
    Episodes { episodes: usize, step_cap: usize },
    /// A fixed number of environment steps; episodes restart as needed.
    Steps { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub steps: usize,
}

/// Per-episode undiscounted returns under the environment's own reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub total_return: f64,
    pub total_steps: usize,
}

impl RunResult {
    /// Rows `seed,episode,return,steps`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["seed", "episode", "return", "steps"])?;
        for e in &self.episodes {
            w.write_record([
                self.seed.to_string(),
                e.episode.to_string(),
                e.ret.to_string(),
                e.steps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.ret).collect()
    }
}

struct BonusState {
    cfg: CountBonus,
    rescaled: TabularMdp,
    z_bar: DMatrix<f64>,
}

fn check_spec(spec: &AgentSpec) -> Result<()> {
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return Err(Error::Config(format!("step size {} outside (0, 1]", spec.alpha)));
    }
    if !(0.0..=1.0).contains(&spec.gamma) {
        return Err(Error::Config(format!("discount {} outside [0, 1]", spec.gamma)));
    }
    if !(0.0..=1.0).contains(&spec.epsilon) {
        return Err(Error::Config(format!("epsilon {} outside [0, 1]", spec.epsilon)));
    }
    Ok(())
}

/// Trains a tabular agent and logs returns of the original reward.
///
/// Shaping and the count bonus only change what the learner sees. At most
/// one of them may be given.
pub fn run_control_loop(
    mdp: &TabularMdp,
    spec: &AgentSpec,
    shaping: Option<&ShapingConfig>,
    bonus: Option<&CountBonus>,
    budget: Budget,
    seed: u64,
) -> Result<RunResult> {
    Ok(run_inner(mdp, spec, shaping, bonus, budget, seed)?.0)
}

/// Plain training run that also hands back the learned action values.
pub fn train_q_table(mdp: &TabularMdp, spec: &AgentSpec, budget: Budget, seed: u64) -> Result<(QTable, RunResult)> {
    let (run, q) = run_inner(mdp, spec, None, None, budget, seed)?;
    Ok((q, run))
}

fn run_inner(
    mdp: &TabularMdp,
    spec: &AgentSpec,
    shaping: Option<&ShapingConfig>,
    bonus: Option<&CountBonus>,
    budget: Budget,
    seed: u64,
) -> Result<(RunResult, QTable)> {
    check_spec(spec)?;
    let shaping = shaping.filter(|s| s.mode != ShapingMode::None);
    if shaping.is_some() && bonus.is_some() {
        return Err(Error::Config("shaping and a count bonus cannot be combined".into()));
    }
    if let Some(s) = shaping {
        s.validate()?;
    }
    let mut bonus = match bonus {
        Some(cfg) => {
            if !(cfg.lambda > 0.0) || !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
                return Err(Error::Config("count bonus needs λ > 0 and a step size in (0, 1]".into()));
            }
            Some(BonusState {
                cfg: *cfg,
                rescaled: rescale_rewards(mdp, cfg.rescale.0, cfg.rescale.1)?,
                z_bar: DMatrix::identity(mdp.n_pairs(), mdp.n_pairs()),
            })
        }
        None => None,
    };
    let na = mdp.n_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::new(mdp.n_states(), na, spec.init_value);
    let (episode_limit, step_cap, step_limit) = match budget {
        Budget::Episodes { episodes, step_cap } => (episodes, step_cap, usize::MAX),
        Budget::Steps { steps } => (usize::MAX, usize::MAX, steps),
    };
    let mut episodes = Vec::new();
    let mut total_steps = 0usize;
    let mut total_return = 0.0;
    while episodes.len() < episode_limit && total_steps < step_limit {
        let mut s = mdp.sample_start(&mut rng);
        let mut a = epsilon_greedy(q.row(s), spec.epsilon, &mut rng)?;
        let mut ret = 0.0;
        let mut steps = 0usize;
        while steps < step_cap && total_steps < step_limit && !mdp.is_terminal(s) {
            let sample = sample_step(mdp, s, a, &mut rng)?;
            let extrinsic = transition_reward(mdp, &sample);
            ret += extrinsic;
            steps += 1;
            total_steps += 1;
            let next_action = if sample.done {
                0
            } else {
                epsilon_greedy(q.row(sample.next), spec.epsilon, &mut rng)?
            };
            let learner_reward = match (shaping, bonus.as_mut()) {
                (Some(cfg), _) => shaping_reward(cfg, s, sample.next, sample.done, extrinsic)?,
                (None, Some(b)) => {
                    let sa = s * na + a;
                    let next_sa = (!sample.done).then_some(sample.next * na + next_action);
                    let r = b.rescaled.reward_of(s, a);
                    dr_sa_td_update(&mut b.z_bar, sa, r, next_sa, b.cfg.alpha, b.cfg.lambda);
                    let row: Vec<f64> = b.z_bar.row(sa).iter().copied().collect();
                    extrinsic + count_bonus(&row, b.cfg.beta)?
                }
                (None, None) => extrinsic,
            };
            let learn = TransitionSample {
                r: learner_reward,
                ..sample
            };
            match spec.algorithm {
                Algorithm::QLearning => q_learning_update(&mut q, &learn, spec.alpha, spec.gamma),
                Algorithm::Sarsa => sarsa_update(&mut q, &learn, next_action, spec.alpha, spec.gamma),
            }
            s = sample.next;
            a = next_action;
        }
        total_return += ret;
        episodes.push(EpisodeRecord {
            episode: episodes.len(),
            ret,
            steps,
        });
    }
    Ok((
        RunResult {
            seed,
            episodes,
            total_return,
            total_steps,
        },
        q,
    ))
}

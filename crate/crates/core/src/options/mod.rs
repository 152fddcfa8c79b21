//! Representation-driven option discovery (RACE, CEO and a random-walk baseline).

mod rod;

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::agents::{q_learning_update, QTable};
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TransitionSample};
use crate::repr::EigenSummary;

pub use rod::{rod_iteration, run_rod, OfflineQ, RodConfig, RodKind, RodResult, RodState};

/// Hard cap on the length of one option execution.
pub const OPTION_STEP_CAP: usize = 100;

/// Upper bound on intrinsic Q-learning sweeps when learning an option.
pub const OPTION_SWEEPS: usize = 200;

/// An option greedy over an intrinsic Q-table.
#[derive(Debug, Clone)]
pub struct EigenOption {
    pub q_int: QTable,
    pub source_iter: usize,
}

impl EigenOption {
    /// True where every intrinsic value is non-positive (this covers states
    /// never seen in the data, whose row stays at zero).
    pub fn terminates(&self, s: usize) -> bool {
        self.q_int.max(s) <= 0.0
    }

    /// Greedy action at `s`, `None` when the option stops there.
    pub fn action(&self, s: usize) -> Option<usize> {
        (!self.terminates(s)).then(|| self.q_int.greedy(s))
    }
}

/// Unique transitions of `dataset`, most recent first.
fn unique_backward(dataset: &[TransitionSample]) -> Vec<TransitionSample> {
    let mut seen = HashSet::new();
    dataset
        .iter()
        .rev()
        .filter(|t| seen.insert((t.s, t.a, t.next, t.done)))
        .copied()
        .collect()
}

/// Offline Q-learning on `r_i(s, s') = e(s') − e(s)` over the dataset.
///
/// Sweeps run backwards over the distinct transitions until no value moves
/// by more than `1e-9`, or for at most [`OPTION_SWEEPS`] sweeps.
pub fn learn_eigenoption(
    dataset: &[TransitionSample],
    e: &EigenSummary,
    n_actions: usize,
    alpha0: f64,
    gamma0: f64,
    source_iter: usize,
) -> Result<EigenOption> {
    if dataset.is_empty() {
        return Err(Error::Empty("option dataset"));
    }
    let n_states = e.vector.len();
    let mut q = QTable::new(n_states, n_actions, 0.0);
    let data: Vec<TransitionSample> = unique_backward(dataset)
        .into_iter()
        .map(|t| -> Result<TransitionSample> {
            Ok(TransitionSample {
                r: e.value(t.next)? - e.value(t.s)?,
                ..t
            })
        })
        .collect::<Result<_>>()?;
    for _ in 0..OPTION_SWEEPS {
        let mut moved: f64 = 0.0;
        for t in &data {
            let before = q.get(t.s, t.a);
            q_learning_update(&mut q, t, alpha0, gamma0);
            moved = moved.max((q.get(t.s, t.a) - before).abs());
        }
        if moved < 1e-9 {
            break;
        }
    }
    Ok(EigenOption { q_int: q, source_iter })
}

/// Offline Q-learning with the rewards and terminals of `mdp`.
///
/// Rewards in the dataset are ignored: each `(s, a, s')` is re-labelled with
/// `mdp`'s reward, arrival reward and terminal flag, so data gathered on a
/// variant without goals can train an agent for the original task.
pub fn offline_q_learning(
    dataset: &[TransitionSample],
    mdp: &TabularMdp,
    q: &mut QTable,
    alpha: f64,
    gamma: f64,
    sweeps: usize,
) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Empty("offline dataset"));
    }
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::Shape("Q-table does not match the MDP".into()));
    }
    let mut data = Vec::with_capacity(dataset.len());
    for t in dataset {
        if t.s >= mdp.n_states() || t.next >= mdp.n_states() || t.a >= mdp.n_actions() {
            return Err(Error::Shape(format!("transition {t:?} outside the MDP")));
        }
        if mdp.is_terminal(t.s) {
            continue;
        }
        let done = mdp.is_terminal(t.next);
        let r = mdp.reward_of(t.s, t.a) + if done { mdp.terminal_reward(t.next) } else { 0.0 };
        data.push(TransitionSample { r, done, ..*t });
    }
    for _ in 0..sweeps {
        for t in &data {
            q_learning_update(q, t, alpha, gamma);
        }
    }
    Ok(())
}

/// States reachable from the start distribution.
pub fn reachable_states(mdp: &TabularMdp) -> Vec<bool> {
    let n = mdp.n_states();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (s, &p) in mdp.start_distribution().iter().enumerate() {
        if p > 0.0 {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..mdp.n_actions() {
            for (next, &p) in mdp.next_distribution(s, a).iter().enumerate() {
                if p > 0.0 && !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    seen
}

/// Cumulative exploration statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationMetrics {
    /// Percentage of reachable states seen up to the end of each segment.
    pub visit_pct: Vec<f64>,
    /// Mean reward per step up to the end of each segment.
    pub mean_reward: Vec<f64>,
    /// Steps taken from each state.
    pub counts: Vec<u64>,
}

/// Metrics of a transition log split into segments ending at `ends`.
///
/// A state counts as visited once it appears as the source or the successor
/// of a logged transition.
pub fn exploration_metrics(log: &[TransitionSample], ends: &[usize], reachable: &[bool]) -> Result<ExplorationMetrics> {
    if log.is_empty() {
        return Err(Error::Empty("visit log"));
    }
    let n_reachable = reachable.iter().filter(|&&r| r).count();
    if n_reachable == 0 {
        return Err(Error::Empty("reachable states"));
    }
    if ends.windows(2).any(|w| w[0] > w[1]) || ends.last().is_some_and(|&e| e > log.len()) {
        return Err(Error::Shape("segment ends must be sorted and within the log".into()));
    }
    let n = reachable.len();
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut counts = vec![0u64; n];
    let mut total = 0.0;
    let mut visit_pct = Vec::with_capacity(ends.len());
    let mut mean_reward = Vec::with_capacity(ends.len());
    let mut at = 0;
    for &end in ends {
        for t in &log[at..end] {
            if t.s >= n || t.next >= n {
                return Err(Error::Shape(format!("transition {t:?} outside the state space")));
            }
            counts[t.s] += 1;
            total += t.r;
            for s in [t.s, t.next] {
                if !seen[s] && reachable[s] {
                    seen[s] = true;
                    n_seen += 1;
                }
            }
        }
        at = end;
        visit_pct.push(100.0 * n_seen as f64 / n_reachable as f64);
        mean_reward.push(if end == 0 { 0.0 } else { total / end as f64 });
    }
    Ok(ExplorationMetrics {
        visit_pct,
        mean_reward,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::optimal_q_values;
    use crate::mdp::{chain, make_environment, sample_step, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(s: usize, next: usize, r: f64) -> TransitionSample {
        TransitionSample { s, a: 0, r, next, done: false }
    }

    fn summary(vector: Vec<f64>) -> EigenSummary {
        let visited = (0..vector.len()).collect();
        EigenSummary {
            top_eigenvalue: 1.0,
            vector,
            log_transformed: false,
            visited,
        }
    }

    /// Every transition of a deterministic MDP, from every non-terminal state.
    fn all_transitions(mdp: &TabularMdp) -> Vec<TransitionSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::new();
        for s in mdp.non_terminal_states() {
            for a in 0..mdp.n_actions() {
                out.push(sample_step(mdp, s, a, &mut rng).unwrap());
            }
        }
        out
    }

    #[test]
    fn constant_vector_stops_everywhere() {
        let mdp = make_environment("grid_task", Variant::NoTerminals).unwrap();
        let option = learn_eigenoption(&all_transitions(&mdp), &summary(vec![0.3; mdp.n_states()]), 4, 0.1, 0.99, 0).unwrap();
        assert!((0..mdp.n_states()).all(|s| option.action(s).is_none()));
    }

    #[test]
    fn option_climbs_to_the_peak() {
        // open corridor of 6 cells, e peaks at the right end
        let mdp = crate::mdp::GridMap::parse("!reward empty=-1 low=-20 goal=0\n########\n#S.....#\n########\n").unwrap().to_mdp();
        let n = mdp.n_states();
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let data = all_transitions(&mdp);
        let option = learn_eigenoption(&data, &summary(e.clone()), 4, 0.1, 0.99, 3).unwrap();
        assert_eq!(option.source_iter, 3);

        // exact Q-iteration on the intrinsic reward
        let mut q = vec![vec![0.0; 4]; n];
        for _ in 0..5000 {
            let prev = q.clone();
            for t in &data {
                let best = prev[t.next].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                q[t.s][t.a] = e[t.next] - e[t.s] + 0.99 * best;
            }
        }
        // sweeps are capped, so values are close and greedy actions agree
        for s in 0..n - 1 {
            for a in 0..4 {
                assert!((option.q_int.get(s, a) - q[s][a]).abs() < 1e-3);
            }
            assert_eq!(option.action(s), Some(crate::mdp::argmax(&q[s])));
        }
        let mut s = mdp.sample_start(&mut ChaCha8Rng::seed_from_u64(0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut steps = 0;
        while let Some(a) = option.action(s) {
            s = sample_step(&mdp, s, a, &mut rng).unwrap().next;
            steps += 1;
            assert!(steps <= n);
        }
        assert_eq!(s, n - 1);
        assert_eq!(steps, n - 1);
    }

    #[test]
    fn shifting_the_vector_keeps_the_option() {
        let mdp = make_environment("four_rooms", Variant::NoTerminals).unwrap();
        let e: Vec<f64> = (0..mdp.n_states()).map(|s| ((s * 37) % 11) as f64 / 7.0).collect();
        let data = all_transitions(&mdp);
        let a = learn_eigenoption(&data, &summary(e.clone()), 4, 0.1, 0.99, 0).unwrap();
        let b = learn_eigenoption(&data, &summary(e).shifted(-4.5), 4, 0.1, 0.99, 0).unwrap();
        for s in 0..mdp.n_states() {
            assert_eq!(a.action(s), b.action(s));
        }
    }

    #[test]
    fn empty_data_is_refused() {
        assert!(matches!(learn_eigenoption(&[], &summary(vec![0.0]), 1, 0.1, 0.99, 0), Err(Error::Empty(_))));
        let mdp = chain(3);
        let mut q = QTable::new(3, 1, 0.0);
        assert!(offline_q_learning(&[], &mdp, &mut q, 0.1, 0.9, 1).is_err());
    }

    #[test]
    fn offline_q_on_complete_data_reaches_value_iteration() {
        let mdp = make_environment("grid_task", Variant::Standard).unwrap();
        let mut q = QTable::new(mdp.n_states(), 4, 0.0);
        offline_q_learning(&all_transitions(&mdp), &mdp, &mut q, 0.5, 0.9, 2000).unwrap();
        let oracle = optimal_q_values(&mdp, 0.9, 1e-13, 100_000).unwrap();
        for s in mdp.non_terminal_states() {
            for a in 0..4 {
                assert!((q.get(s, a) - oracle.get(s, a)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn offline_q_relabels_from_the_task() {
        // data collected without goals still trains towards the goal
        let plain = make_environment("grid_task", Variant::NoTerminals).unwrap();
        let task = make_environment("grid_task", Variant::Standard).unwrap();
        assert_eq!(plain.n_states(), task.n_states());
        let mut q = QTable::new(task.n_states(), 4, 0.0);
        offline_q_learning(&all_transitions(&plain), &task, &mut q, 0.5, 0.9, 2000).unwrap();
        let oracle = optimal_q_values(&task, 0.9, 1e-13, 100_000).unwrap();
        for s in task.non_terminal_states() {
            assert_eq!(q.greedy(s), oracle.greedy(s));
        }
    }

    #[test]
    fn censored_data_cannot_beat_its_own_mdp() {
        // chain 0 -> 1 -> 2 (terminal); without the last step nothing reaches the goal
        let mdp = chain(3);
        let data = vec![step(0, 1, -1.0)];
        let mut q = QTable::new(3, 1, 0.0);
        offline_q_learning(&data, &mdp, &mut q, 1.0, 1.0, 10).unwrap();
        assert_eq!(q.get(0, 0), -1.0);
        assert_eq!(q.get(1, 0), 0.0);
    }

    #[test]
    fn zero_sweeps_keep_the_initial_table() {
        let mdp = chain(3);
        let mut q = QTable::new(3, 1, 2.5);
        offline_q_learning(&[step(0, 1, -1.0)], &mdp, &mut q, 0.5, 0.9, 0).unwrap();
        assert!(q.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn metrics_examples() {
        let reachable = vec![true; 10];
        let log = vec![step(0, 0, -1.0), step(0, 0, -1.0)];
        let m = exploration_metrics(&log, &[1, 2], &reachable).unwrap();
        assert_eq!(m.visit_pct, vec![10.0, 10.0]);
        assert_eq!(m.mean_reward, vec![-1.0, -1.0]);
        assert_eq!(m.counts.iter().sum::<u64>(), 2);

        let log: Vec<_> = (0..9).map(|s| step(s, s + 1, if s % 2 == 0 { -1.0 } else { -3.0 })).collect();
        let m = exploration_metrics(&log, &[3, 9], &reachable).unwrap();
        assert_eq!(m.visit_pct, vec![40.0, 100.0]);
        assert!((m.mean_reward[0] + 5.0 / 3.0).abs() < 1e-15);
        assert!(m.visit_pct.windows(2).all(|w| w[0] <= w[1]));
        assert!(exploration_metrics(&[], &[0], &reachable).is_err());
    }

    #[test]
    fn every_map_state_is_reachable() {
        for name in ["grid_task", "four_rooms", "grid_room", "grid_maze"] {
            let mdp = make_environment(name, Variant::NoTerminals).unwrap();
            assert!(reachable_states(&mdp).iter().all(|&r| r), "{name}");
        }
    }
}

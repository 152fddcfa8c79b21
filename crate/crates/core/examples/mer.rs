//! Maximum-entropy representation of a corridor: `λ ln M(s, goal)` is the
//! cost of the shortest path to the goal.

use protorep::linalg::DEFAULT_PRECISION;
use protorep::mdp::{chain, Reward};
use protorep::repr::{adjacency_matrix, mer_closed_form};

fn main() -> protorep::Result<()> {
    let rewards = vec![-1.0, -2.0, -0.5, -3.0, 0.0];
    let mdp = chain(rewards.len()).with_reward(Reward::State(rewards.clone()))?;
    let lambda = 1.3;
    let m = mer_closed_form(&rewards, &adjacency_matrix(&mdp), lambda, DEFAULT_PRECISION)?;
    let goal = rewards.len() - 1;
    for s in 0..goal {
        let cost: f64 = rewards[s..goal].iter().sum();
        println!("state {s}: MER value {:.6}, path cost {cost:.6}", lambda * m.get(s, goal).ln());
    }
    Ok(())
}

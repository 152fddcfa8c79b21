//! Optimal values and policy of the grid task read off the state-action DR.

use protorep::linalg::DEFAULT_PRECISION;
use protorep::mdp::{make_environment, sa_transition_matrix, uniform_policy, Variant, ACTION_NAMES};
use protorep::planning::{optimal_policy, optimal_q_from_dr};
use protorep::repr::dr_sa_closed_form;

fn main() -> protorep::Result<()> {
    let lambda = 1.3;
    let mdp = make_environment("grid_task", Variant::Standard)?;
    let pd = uniform_policy(&mdp);
    let p_bar = sa_transition_matrix(&mdp, &pd)?;
    let r_bar = mdp.pair_rewards();
    let z_bar = dr_sa_closed_form(&r_bar, &p_bar, lambda, DEFAULT_PRECISION, "uniform")?;
    let q = optimal_q_from_dr(&z_bar, &p_bar, &r_bar, lambda)?;
    let pi = optimal_policy(&q, &pd, lambda)?;

    let na = mdp.n_actions();
    let start = (0..mdp.n_states()).find(|&s| mdp.start_distribution()[s] > 0.0).expect("a start state");
    println!("start state {start}");
    for a in 0..na {
        println!(
            "  {:>5}: q = {:8.3}, pi = {:.3}",
            ACTION_NAMES[a],
            q[start * na + a],
            pi.prob(start, a)
        );
    }
    Ok(())
}

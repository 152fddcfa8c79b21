//! Q-learning on the grid task with DR and SR potentials.

use protorep::agents::{run_control_loop, AgentSpec, Algorithm, Budget, ShapingConfig, ShapingMode};
use protorep::experiment::{last_tenth_mean, point_summary};
use protorep::linalg::DEFAULT_PRECISION;
use protorep::mdp::{make_environment, transition_matrix, uniform_policy, Variant};
use protorep::repr::{dr_closed_form, sr_closed_form, top_log_eigenvector};

fn main() -> protorep::Result<()> {
    let mdp = make_environment("grid_task", Variant::Standard)?;
    let p = transition_matrix(&mdp, &uniform_policy(&mdp))?;
    let r = mdp.state_rewards().expect("grid maps have state rewards");
    let dr = top_log_eigenvector(&dr_closed_form(r, &p, 1.3, DEFAULT_PRECISION, "uniform")?, None)?;
    let sr = top_log_eigenvector(&sr_closed_form(&p, 0.99, "uniform")?, None)?;
    let goal = mdp.terminal_states().first().copied();

    let spec = AgentSpec { algorithm: Algorithm::QLearning, alpha: 0.3, gamma: 0.99, epsilon: 0.05, init_value: 0.0 };
    for (mode, eigvec) in [(ShapingMode::None, None), (ShapingMode::DrPot, Some(dr)), (ShapingMode::SrPot, Some(sr))] {
        let shaping = ShapingConfig { mode, eigvec, beta: 0.5, gamma: 0.99, goal_state: goal };
        let finals: Vec<f64> = (0..20)
            .map(|seed| {
                let run = run_control_loop(&mdp, &spec, Some(&shaping), None, Budget::Episodes { episodes: 50, step_cap: 500 }, seed)?;
                last_tenth_mean(&run.returns())
            })
            .collect::<protorep::Result<_>>()?;
        let s = point_summary(&finals);
        println!("{mode:?}: final return {:.2} ± {:.2}", s.mean, s.ci_half_width.unwrap_or(0.0));
    }
    Ok(())
}

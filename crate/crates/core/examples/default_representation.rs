//! Closed-form DR of grid room, checked against dynamic programming, and its
//! top eigenvector next to the SR's.

use protorep::linalg::DEFAULT_PRECISION;
use protorep::mdp::{make_environment, transition_matrix, uniform_policy, Variant};
use protorep::repr::{dr_closed_form, dr_dp_solve, sr_closed_form, top_log_eigenvector};

fn main() -> protorep::Result<()> {
    let mdp = make_environment("grid_room", Variant::Standard)?;
    let p = transition_matrix(&mdp, &uniform_policy(&mdp))?;
    let r = mdp.state_rewards().expect("grid maps have state rewards");

    let z = dr_closed_form(r, &p, 1.3, DEFAULT_PRECISION, "uniform")?;
    let dp = dr_dp_solve(r, &p, 1.3, 1e-12, 100_000, DEFAULT_PRECISION)?;
    let (a, b) = (z.to_f64(), dp.rep.to_f64());
    let worst = a
        .iter()
        .zip(b.iter())
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| ((x - y) / x).abs())
        .fold(0.0, f64::max);
    println!("{} states, DP converged in {} sweeps", mdp.n_states(), dp.iterations);
    println!("closed form vs DP: worst relative gap {worst:.2e}");
    println!("contraction bound {:.4}", dp.contraction_bound);

    let dr_vec = top_log_eigenvector(&z, None)?;
    let sr_vec = top_log_eigenvector(&sr_closed_form(&p, 0.99, "uniform")?, None)?;
    println!("log top DR eigenvalue {:.4}", dr_vec.top_eigenvalue);
    println!("SR top eigenvalue {:.4}", sr_vec.top_eigenvalue);
    let layout = mdp.layout().expect("grid map");
    for (s, &(row, col)) in layout.coords.iter().enumerate().take(6) {
        println!("state {s} at ({row}, {col}): log DR {:.3}, SR {:.4}", dr_vec.vector[s], sr_vec.vector[s]);
    }
    Ok(())
}

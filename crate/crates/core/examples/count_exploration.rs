//! Sarsa with and without the DR-norm exploration bonus on RiverSwim.

use protorep::agents::{run_control_loop, AgentSpec, Algorithm, Budget, CountBonus};
use protorep::experiment::point_summary;
use protorep::mdp::{make_environment, Variant};

fn main() -> protorep::Result<()> {
    let mdp = make_environment("riverswim", Variant::Standard)?;
    let spec = AgentSpec { algorithm: Algorithm::Sarsa, alpha: 0.25, gamma: 0.95, epsilon: 0.01, init_value: 0.0 };
    let bonus = CountBonus { beta: 100.0, lambda: 1.0, alpha: 0.5, rescale: (-1.0, 0.0) };
    for (name, b) in [("sarsa", None), ("sarsa+dr", Some(&bonus))] {
        let totals: Vec<f64> = (0..100)
            .map(|seed| run_control_loop(&mdp, &spec, None, b, Budget::Steps { steps: 5000 }, seed).map(|r| r.total_return))
            .collect::<protorep::Result<_>>()?;
        let s = point_summary(&totals);
        println!("{name:>9}: total return {:.0} ± {:.0}", s.mean, s.ci_half_width.unwrap_or(0.0));
    }
    Ok(())
}

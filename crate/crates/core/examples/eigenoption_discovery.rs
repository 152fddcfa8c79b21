//! RACE, CEO and a random walk exploring grid room without terminal states.

use protorep::mdp::{make_environment, Variant};
use protorep::options::{run_rod, OfflineQ, RodConfig, RodKind};

fn main() -> protorep::Result<()> {
    let mdp = make_environment("grid_room", Variant::NoTerminals)?;
    let task = make_environment("grid_room", Variant::Standard)?;
    for kind in [RodKind::Race, RodKind::Ceo, RodKind::Rw] {
        let cfg = RodConfig { kind, n_iter: 50, ..RodConfig::default() };
        let res = run_rod(&mdp, &cfg, Some((&task, OfflineQ::default())), 7)?;
        println!(
            "{:>4}: visited {:5.1}%, mean reward {:6.2}, options used {}, offline Q return {:.1}",
            kind.as_str(),
            res.visit_pct.last().copied().unwrap_or(0.0),
            res.mean_reward.last().copied().unwrap_or(0.0),
            res.option_events,
            res.q_returns.as_ref().and_then(|q| q.last().copied()).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

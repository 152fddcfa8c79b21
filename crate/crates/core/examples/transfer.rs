//! Default features against successor features on four rooms with four goals.

use protorep::experiment::{point_summary, transfer_run, TransferSettings};
use protorep::mdp::{make_environment, Variant};

fn main() -> protorep::Result<()> {
    let mdp = make_environment("four_rooms_multigoal", Variant::Standard)?;
    let settings = TransferSettings { tests: 20, ..TransferSettings::default() };
    let out = transfer_run(&mdp, &settings, 11)?;
    for (name, returns) in &out.methods {
        let s = point_summary(returns);
        println!("{name:>6}: mean return {:8.2}, cumulative {:9.1}", s.mean, returns.iter().sum::<f64>());
    }
    Ok(())
}

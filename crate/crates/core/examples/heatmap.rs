//! Writes SVG heatmaps of the SR and log-DR top eigenvectors of grid room.
//!
//! Usage: `cargo run --example heatmap [out_dir]`

use std::path::PathBuf;

use protorep::experiment::emit_heatmap;
use protorep::linalg::DEFAULT_PRECISION;
use protorep::mdp::{make_environment, transition_matrix, uniform_policy, Variant};
use protorep::repr::{dr_closed_form, sr_closed_form, top_log_eigenvector};

fn main() -> protorep::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;
    let mdp = make_environment("grid_room", Variant::Standard)?;
    let layout = mdp.layout().expect("grid map");
    let p = transition_matrix(&mdp, &uniform_policy(&mdp))?;
    let r = mdp.state_rewards().expect("grid maps have state rewards");
    let dr = top_log_eigenvector(&dr_closed_form(r, &p, 1.3, DEFAULT_PRECISION, "uniform")?, None)?;
    let sr = top_log_eigenvector(&sr_closed_form(&p, 0.99, "uniform")?, None)?;
    for (name, e) in [("grid_room_dr", dr), ("grid_room_sr", sr)] {
        let (csv, svg) = emit_heatmap(&e.vector, layout, &out.join(name))?;
        println!("{} {}", csv.display(), svg.display());
    }
    Ok(())
}

use nalgebra::DMatrix;

use super::{ProtoRep, RepKind, RepMatrix, RepParams};
use crate::error::{Error, Result};
use crate::linalg::{exp_diagonal, hp_solve, HpMatrix};
use crate::mdp::TabularMdp;

/// `A(s, s') = 1` when some action moves `s` to `s'`; terminal rows are zero.
pub fn adjacency_matrix(mdp: &TabularMdp) -> DMatrix<f64> {
    let n = mdp.n_states();
    DMatrix::from_fn(n, n, |s, next| {
        let reachable = !mdp.is_terminal(s) && (0..mdp.n_actions()).any(|a| mdp.p(s, a, next) > 0.0);
        if reachable {
            1.0
        } else {
            0.0
        }
    })
}

/// `M = [diag(exp(−r/λ)) − A]⁻¹`.
///
/// Rows of `adjacency` that are entirely zero mark terminal states.
/// The inverse only represents the path sum when the series converges; a
/// negative entry in the solution is reported as a domain error.
pub fn mer_closed_form(r: &[f64], adjacency: &DMatrix<f64>, lambda: f64, precision: usize) -> Result<ProtoRep> {
    let n = adjacency.nrows();
    if !adjacency.is_square() {
        return Err(Error::Shape("adjacency matrix must be square".into()));
    }
    if r.len() != n {
        return Err(Error::Shape(format!("{} rewards for {n} states", r.len())));
    }
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("temperature {lambda} must be positive")));
    }
    for (i, &ri) in r.iter().enumerate() {
        let terminal = adjacency.row(i).iter().all(|&x| x == 0.0);
        if !terminal && !(ri < 0.0) {
            return Err(Error::Precondition(format!("reward {ri} at non-terminal state {i} must be negative")));
        }
    }
    let scaled: Vec<f64> = r.iter().map(|ri| -ri / lambda).collect();
    let a = exp_diagonal(&scaled, precision)?.sub(&HpMatrix::from_f64(adjacency, precision)?)?;
    let m = hp_solve(&a, &HpMatrix::identity(n, precision)?)?;
    for i in 0..n {
        for j in 0..n {
            if m.get(i, j).is_negative() {
                return Err(Error::Domain(format!(
                    "path sum diverges: entry ({i}, {j}) of the inverse is negative"
                )));
            }
        }
    }
    Ok(ProtoRep {
        kind: RepKind::Mer,
        params: RepParams::Lambda(lambda),
        policy_id: "adjacency".into(),
        matrix: RepMatrix::Hp(m),
    })
}

use nalgebra::DMatrix;

use super::{ProtoRep, RepKind, RepParams};
use crate::error::{Error, Result};
use crate::mdp::{TransitionMatrix, TransitionSample};

/// `Ψ = (I − γP)⁻¹`.
pub fn sr_closed_form(p: &TransitionMatrix, gamma: f64, policy_id: &str) -> Result<ProtoRep> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Precondition(format!("discount {gamma} must lie in [0, 1)")));
    }
    let n = p.dim();
    let a = DMatrix::identity(n, n) - p.entries() * gamma;
    let psi = a.lu().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    Ok(ProtoRep::dense(RepKind::Sr, RepParams::Gamma(gamma), policy_id, psi))
}

/// Identity table: terminal rows already hold their converged value `e_s`.
pub fn sr_td_init(n_states: usize) -> DMatrix<f64> {
    DMatrix::identity(n_states, n_states)
}

/// `Ψ(s, ·) += α [1{s = ·} + γ Ψ(s', ·) − Ψ(s, ·)]`.
///
/// Bootstraps from the stored row of `s'`; with [`sr_td_init`] terminal rows
/// stay at `e_s'`, matching zeroed terminal rows of `P`.
pub fn sr_td_update(psi: &mut DMatrix<f64>, sample: &TransitionSample, alpha: f64, gamma: f64) {
    let (s, next) = (sample.s, sample.next);
    for j in 0..psi.ncols() {
        let target = if s == j { 1.0 } else { 0.0 } + gamma * psi[(next, j)];
        psi[(s, j)] += alpha * (target - psi[(s, j)]);
    }
}

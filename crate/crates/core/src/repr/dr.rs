use nalgebra::DMatrix;

use super::{ProtoRep, RepKind, RepMatrix, RepParams};
use crate::error::{Error, Result};
use crate::linalg::{exp_diagonal, hp_solve, HpMatrix};
use crate::mdp::TransitionMatrix;

fn check_inputs(r: &[f64], p: &TransitionMatrix, lambda: f64) -> Result<Vec<f64>> {
    if r.len() != p.dim() {
        return Err(Error::Shape(format!("{} rewards for a {}-row transition matrix", r.len(), p.dim())));
    }
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("temperature {lambda} must be positive")));
    }
    for (i, (&ri, &term)) in r.iter().zip(p.terminal_rows()).enumerate() {
        if !term && !(ri < 0.0) {
            return Err(Error::Precondition(format!("reward {ri} at non-terminal index {i} must be negative")));
        }
    }
    Ok(r.iter().map(|&ri| -ri / lambda).collect())
}

fn closed_form(r: &[f64], p: &TransitionMatrix, lambda: f64, precision: usize) -> Result<HpMatrix> {
    let neg_scaled = check_inputs(r, p, lambda)?;
    let a = exp_diagonal(&neg_scaled, precision)?.sub(&HpMatrix::from_f64(p.entries(), precision)?)?;
    hp_solve(&a, &HpMatrix::identity(p.dim(), precision)?)
}

/// `Z = [diag(exp(−r/λ)) − P]⁻¹` at `precision` bits.
pub fn dr_closed_form(
    r: &[f64],
    p: &TransitionMatrix,
    lambda: f64,
    precision: usize,
    policy_id: &str,
) -> Result<ProtoRep> {
    Ok(ProtoRep {
        kind: RepKind::Dr,
        params: RepParams::Lambda(lambda),
        policy_id: policy_id.to_string(),
        matrix: RepMatrix::Hp(closed_form(r, p, lambda, precision)?),
    })
}

/// State-action DR `Z̄ = [diag(exp(−r̄/λ)) − P̄]⁻¹`.
pub fn dr_sa_closed_form(
    r_bar: &[f64],
    p_bar: &TransitionMatrix,
    lambda: f64,
    precision: usize,
    policy_id: &str,
) -> Result<ProtoRep> {
    Ok(ProtoRep {
        kind: RepKind::DrSa,
        params: RepParams::Lambda(lambda),
        policy_id: policy_id.to_string(),
        matrix: RepMatrix::Hp(closed_form(r_bar, p_bar, lambda, precision)?),
    })
}

/// Iterates `Z_{k+1} = R⁻¹ + R⁻¹ P Z_k` starting from `Z₀ = R⁻¹`.
pub fn dr_dp_iterates(
    r: &[f64],
    p: &TransitionMatrix,
    lambda: f64,
    precision: usize,
) -> Result<impl Iterator<Item = HpMatrix>> {
    let neg_scaled = check_inputs(r, p, lambda)?;
    let scaled: Vec<f64> = neg_scaled.iter().map(|x| -x).collect();
    let r_inv = exp_diagonal(&scaled, precision)?;
    let step = r_inv.matmul(&HpMatrix::from_f64(p.entries(), precision)?)?;
    let mut current = Some(r_inv.clone());
    Ok(std::iter::from_fn(move || {
        let z = current.take()?;
        let next = step.matmul(&z).and_then(|pz| r_inv.add(&pz)).ok();
        current = next;
        Some(z)
    }))
}

/// Outcome of [`dr_dp_solve`].
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub rep: ProtoRep,
    pub iterations: usize,
    /// `max_s exp(r(s)/λ)` over non-terminal states.
    pub contraction_bound: f64,
    /// Ratios of successive update norms.
    pub observed_ratios: Vec<f64>,
}

/// Runs the dynamic-programming iteration until successive iterates differ
/// by less than `tol` in the max-row-sum norm.
pub fn dr_dp_solve(
    r: &[f64],
    p: &TransitionMatrix,
    lambda: f64,
    tol: f64,
    max_iters: usize,
    precision: usize,
) -> Result<DpSolution> {
    let contraction_bound = r
        .iter()
        .zip(p.terminal_rows())
        .filter(|(_, &t)| !t)
        .map(|(&ri, _)| (ri / lambda).exp())
        .fold(0.0, f64::max);
    let mut iterates = dr_dp_iterates(r, p, lambda, precision)?;
    let mut prev = iterates.next().ok_or(Error::Empty("iterates"))?;
    let mut ratios = Vec::new();
    let mut last_change = f64::INFINITY;
    for k in 1..=max_iters {
        let next = iterates.next().ok_or(Error::Empty("iterates"))?;
        let change = next.sub(&prev)?.norm_inf();
        if last_change.is_finite() && last_change > 0.0 {
            ratios.push(change / last_change);
        }
        last_change = change;
        prev = next;
        if change < tol {
            return Ok(DpSolution {
                rep: ProtoRep {
                    kind: RepKind::Dr,
                    params: RepParams::Lambda(lambda),
                    policy_id: "default".into(),
                    matrix: RepMatrix::Hp(prev),
                },
                iterations: k,
                contraction_bound,
                observed_ratios: ratios,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_change,
        gap_estimate: 1.0 - ratios.last().copied().unwrap_or(1.0),
        last_iterate: Vec::new(),
    })
}

fn td_row_update(z: &mut DMatrix<f64>, row: usize, r: f64, next: Option<usize>, alpha: f64, lambda: f64) {
    let scale = (r / lambda).exp();
    let boot: Option<Vec<f64>> = next.map(|n| z.row(n).iter().copied().collect());
    for j in 0..z.ncols() {
        let own = if row == j { 1.0 } else { 0.0 };
        let target = scale * (own + boot.as_ref().map_or(0.0, |b| b[j]));
        z[(row, j)] += alpha * (target - z[(row, j)]);
    }
}

/// TD update of row `s` of the DR.
///
/// `next` is the successor of a non-terminal `s`, or `None` when `s` itself is
/// terminal, in which case the target is `exp(r/λ)·e_s`.
pub fn dr_td_update(z: &mut DMatrix<f64>, s: usize, r: f64, next: Option<usize>, alpha: f64, lambda: f64) {
    td_row_update(z, s, r, next, alpha, lambda);
}

/// TD update of the state-action DR for pair `sa` with successor pair `next_sa`.
pub fn dr_sa_td_update(
    z_bar: &mut DMatrix<f64>,
    sa: usize,
    r: f64,
    next_sa: Option<usize>,
    alpha: f64,
    lambda: f64,
) {
    td_row_update(z_bar, sa, r, next_sa, alpha, lambda);
}

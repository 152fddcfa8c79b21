use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProtoRep, RepKind, RepMatrix};
use crate::error::{Error, Result};
use crate::linalg::{log_matvec, log_power_iteration, logsumexp, symmetrize, LogNonNegMatrix};

const EIGEN_TOL: f64 = 1e-11;
const EIGEN_MAX_ITERS: usize = 200_000;
/// The log-domain iteration runs on `Sym(Z)^(2^SQUARINGS)`.
const SQUARINGS: u32 = 3;
/// Iterations per stage before the log-domain path squares again.
const STAGE_ITERS: usize = 5_000;
const MAX_SQUARINGS: u32 = 48;

/// Top eigenvector of a symmetrized representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    /// Top eigenvalue; its natural log when `log_transformed`.
    pub top_eigenvalue: f64,
    /// Eigenvector entries over all states, zero for unvisited states.
    pub vector: Vec<f64>,
    pub log_transformed: bool,
    pub visited: Vec<usize>,
}

impl EigenSummary {
    pub fn value(&self, s: usize) -> Result<f64> {
        self.vector.get(s).copied().ok_or(Error::MissingEntry(s))
    }

    /// Same vector with a constant added to every visited entry.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for &s in &self.visited {
            out.vector[s] += c;
        }
        out
    }
}

/// Power iteration on a symmetric matrix.
///
/// The returned vector has unit norm and its largest-magnitude entry positive.
pub fn power_iteration(m: &DMatrix<f64>, tol: f64, max_iters: usize) -> Result<(f64, Vec<f64>)> {
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return Err(Error::Shape("power iteration needs a non-empty square matrix".into()));
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut prev_change = f64::INFINITY;
    for it in 0..max_iters {
        let mut next = m * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return Err(Error::Domain("matrix annihilates the iterate".into()));
        }
        next /= norm;
        let change = (&next - &v).amax().min((&next + &v).amax());
        v = next;
        if change < tol {
            if v[v.iamax()] < 0.0 {
                v = -v;
            }
            let value = v.dot(&(m * &v));
            return Ok((value, v.iter().copied().collect()));
        }
        if it + 1 == max_iters {
            return Err(Error::NoConvergence {
                iterations: max_iters,
                last_change: change,
                gap_estimate: 1.0 - change / prev_change,
                last_iterate: v.iter().copied().collect(),
            });
        }
        prev_change = change;
    }
    unreachable!("loop returns on its last iteration")
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector with its
/// largest-magnitude entry positive. Near-ties at the top make power iteration
/// crawl, so this uses the dense solver.
fn symmetric_top(m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut v = eig.eigenvectors.column(top).into_owned();
    v /= v.norm();
    if v[v.iamax()] < 0.0 {
        v = -v;
    }
    Ok((eig.eigenvalues[top], v.iter().copied().collect()))
}

/// Log of the top eigenvector of a moderately scaled matrix, in ordinary
/// floating point.
///
/// A dense eigensolver gives the starting vector and power iteration on
/// `M^(2^SQUARINGS)` refines it; all arithmetic is on non-negative numbers so
/// small entries keep their relative accuracy. Returns `None` when the
/// powered matrix underflows, leaving the log-domain path to do the work.
fn dense_top_vector(sym: &LogNonNegMatrix) -> Result<Dense> {
    let mut m = sym.to_matrix();
    let scale = m.max();
    if !(scale > 0.0) || !scale.is_finite() {
        return Ok(Dense::Skipped);
    }
    m /= scale;
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let mut v = eig.eigenvectors.column(top).into_owned();
    if v.sum() < 0.0 {
        v = -v;
    }
    v.apply(|x| *x = x.abs().max(f64::MIN_POSITIVE));
    let mut powered = m;
    for _ in 0..SQUARINGS {
        powered = &powered * &powered;
        let top = powered.max();
        powered /= top;
    }
    // subnormal products lose relative accuracy
    if powered.iter().any(|&x| x < 1e-150) {
        return Ok(Dense::Skipped);
    }
    v /= v.norm();
    for _ in 0..STAGE_ITERS {
        let mut next = &powered * &v;
        next /= next.norm();
        let change = v.iter().zip(next.iter()).map(|(a, b)| (a.ln() - b.ln()).abs()).fold(0.0, f64::max);
        v = next;
        if change < EIGEN_TOL {
            return Ok(Dense::Converged(v.iter().map(|x| x.ln()).collect()));
        }
    }
    Ok(Dense::Stalled(v.iter().map(|x| x.ln()).collect()))
}

enum Dense {
    Converged(Vec<f64>),
    /// Last iterate, in logs.
    Stalled(Vec<f64>),
    Skipped,
}

/// Log-domain power iteration on `Sym^(2^k)`, squaring again whenever a stage
/// stalls. Nearly decoupled blocks make the plain iteration crawl.
fn log_top_vector(sym: &LogNonNegMatrix, warm: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let mut powered = sym.clone();
    for _ in 0..SQUARINGS {
        powered = log_square(&powered)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut warm = warm;
    let mut squarings = SQUARINGS;
    loop {
        let iters = if squarings == MAX_SQUARINGS { EIGEN_MAX_ITERS } else { STAGE_ITERS };
        match log_power_iteration(&powered, EIGEN_TOL, iters, &mut rng, warm.as_deref()) {
            Ok(pair) => return Ok(pair.log_vector),
            Err(Error::NoConvergence { last_iterate, .. }) if squarings < MAX_SQUARINGS => {
                warm = Some(last_iterate);
                powered = log_square(&powered)?;
                squarings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn log_square(m: &LogNonNegMatrix) -> Result<LogNonNegMatrix> {
    let a = m.log_entries();
    let n = a.nrows();
    let mut out = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    let mut buf = vec![0.0; n];
    for i in 0..n {
        for j in 0..=i {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = a[(i, k)] + a[(k, j)];
            }
            let v = logsumexp(&buf);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    // rescale so repeated squaring keeps the logs small
    let top = out.max();
    if top.is_finite() {
        out.apply(|x| *x -= top);
    }
    LogNonNegMatrix::from_log(out)
}

fn check_primitive(sym: &LogNonNegMatrix, visited: &[usize]) -> Result<()> {
    let a = sym.log_entries();
    let n = a.nrows();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..n {
        let zeros = (0..n).filter(|&j| a[(i, j)] == f64::NEG_INFINITY).count();
        if zeros == 0 {
            return Ok(());
        }
        if best.is_none_or(|(_, z)| zeros < z) {
            best = Some((i, zeros));
        }
    }
    let (row, _) = best.expect("non-empty matrix");
    let col = (0..n).find(|&j| a[(row, j)] == f64::NEG_INFINITY).expect("row has a zero");
    Err(Error::NotPositive { state: visited[col] })
}

/// Top eigenvector of `Sym(M_VV)` over the `visited` states (all states when `None`).
///
/// DR-family matrices go through the log-domain power iteration and the
/// result is the log of the (positive) eigenvector; the SR uses ordinary
/// power iteration with the largest-magnitude entry made positive. Unvisited
/// states get zero.
pub fn top_log_eigenvector(rep: &ProtoRep, visited: Option<&[usize]>) -> Result<EigenSummary> {
    let n = rep.dim();
    let visited: Vec<usize> = match visited {
        Some(v) => {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => (0..n).collect(),
    };
    if visited.is_empty() {
        return Err(Error::Empty("visited set"));
    }
    if let Some(&bad) = visited.iter().find(|&&s| s >= n) {
        return Err(Error::MissingEntry(bad));
    }
    let mut vector = vec![0.0; n];
    match rep.kind {
        RepKind::Sr => {
            let dense = rep.to_f64();
            let sub = DMatrix::from_fn(visited.len(), visited.len(), |i, j| dense[(visited[i], visited[j])]);
            let (value, v) = symmetric_top(&symmetrize(&sub)?)?;
            for (&s, x) in visited.iter().zip(v) {
                vector[s] = x;
            }
            Ok(EigenSummary {
                top_eigenvalue: value,
                vector,
                log_transformed: false,
                visited,
            })
        }
        RepKind::Dr | RepKind::DrSa | RepKind::Mer => {
            let sym = rep.log_matrix()?.submatrix(&visited).symmetrize()?;
            check_primitive(&sym, &visited)?;
            let dense = match &rep.matrix {
                RepMatrix::Dense(_) => dense_top_vector(&sym)?,
                _ => Dense::Skipped,
            };
            let log_vector = match dense {
                Dense::Converged(v) => v,
                Dense::Stalled(v) => log_top_vector(&sym, Some(v))?,
                Dense::Skipped => log_top_vector(&sym, None)?,
            };
            for (&s, &x) in visited.iter().zip(&log_vector) {
                if !x.is_finite() {
                    return Err(Error::NotPositive { state: s });
                }
                vector[s] = x;
            }
            let mv = log_matvec(&sym, &log_vector)?;
            let terms: Vec<f64> = log_vector.iter().zip(&mv).map(|(a, b)| a + b).collect();
            let top_eigenvalue = logsumexp(&terms);
            Ok(EigenSummary {
                top_eigenvalue,
                vector,
                log_transformed: true,
                visited,
            })
        }
    }
}

/// SR eigenvalue paired with a DR eigenvalue under a constant reward `r_const`.
pub fn sr_eigenvalue_from_dr(mu_dr: f64, gamma: f64, r_const: f64, lambda: f64) -> Result<f64> {
    if !(r_const < 0.0) {
        return Err(Error::Precondition(format!("reward {r_const} must be negative")));
    }
    if !(gamma > 0.0 && gamma < 1.0) || !(lambda > 0.0) {
        return Err(Error::Precondition("need 0 < γ < 1 and λ > 0".into()));
    }
    let c = (-r_const / lambda).exp();
    let upper = 1.0 / (c - 1.0);
    if !(mu_dr > 0.0) || mu_dr > upper * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("DR eigenvalue {mu_dr} outside (0, {upper}]")));
    }
    let denom = gamma * (1.0 / mu_dr - c + 1.0 / gamma);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Domain(format!("DR eigenvalue {mu_dr} sits on the asymptote")));
    }
    Ok(1.0 / denom)
}

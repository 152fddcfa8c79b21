//! Log-domain arithmetic on non-negative matrices.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// `log Σ exp(v_i)` with a max shift; `-inf` for empty or all `-inf` input.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// A non-negative matrix stored as entrywise natural logs (`-inf` is zero).
#[derive(Debug, Clone, PartialEq)]
pub struct LogNonNegMatrix {
    log_entries: DMatrix<f64>,
}

impl LogNonNegMatrix {
    pub fn from_log(log_entries: DMatrix<f64>) -> Result<Self> {
        if log_entries.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Domain("log entries must be finite or -inf".into()));
        }
        Ok(Self { log_entries })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("matrix has negative or non-finite entries".into()));
        }
        Ok(Self {
            log_entries: m.map(f64::ln),
        })
    }

    pub fn log_entries(&self) -> &DMatrix<f64> {
        &self.log_entries
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        self.log_entries.map(f64::exp)
    }

    pub fn nrows(&self) -> usize {
        self.log_entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.log_entries.ncols()
    }

    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self {
            log_entries: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.log_entries[(idx[i], idx[j])]),
        }
    }

    /// `(M + Mᵀ)/2` computed in the log domain.
    pub fn symmetrize(&self) -> Result<Self> {
        let m = &self.log_entries;
        if !m.is_square() {
            return Err(Error::Shape("cannot symmetrize a non-square matrix".into()));
        }
        let n = m.nrows();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = logsumexp(&[m[(i, j)], m[(j, i)]]) - std::f64::consts::LN_2;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(Self { log_entries: out })
    }
}

/// Matrix-vector product in the log domain.
pub fn log_matvec(m: &LogNonNegMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.ncols() != v.len() {
        return Err(Error::Shape(format!("{}-column matrix times {}-vector", m.ncols(), v.len())));
    }
    let mut buf = vec![0.0; v.len()];
    Ok((0..m.nrows())
        .map(|i| {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = m.log_entries[(i, j)] + v[j];
            }
            logsumexp(&buf)
        })
        .collect())
}

/// Result of [`log_power_iteration`].
#[derive(Debug, Clone)]
pub struct LogEigenpair {
    pub log_eigenvalue: f64,
    /// Log of a unit-norm eigenvector.
    pub log_vector: Vec<f64>,
    pub iterations: usize,
}

/// Entries of a unit vector below this log value are flushed to exact zero;
/// they would underflow a double anyway.
const LOG_FLOOR: f64 = -745.0;

fn normalize(v: &mut [f64]) {
    let norm = 0.5 * logsumexp(&v.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
    for x in v.iter_mut() {
        *x -= norm;
        if *x < LOG_FLOOR {
            *x = f64::NEG_INFINITY;
        }
    }
}

/// Top eigenpair of a symmetric non-negative matrix by power iteration on logs.
///
/// The iterate starts from a random positive vector drawn from `rng` (or from
/// `warm_start` when given). Convergence is declared once successive
/// log-vectors differ by less than `tol` in the max norm.
pub fn log_power_iteration<R: Rng + ?Sized>(
    m: &LogNonNegMatrix,
    tol: f64,
    max_iters: usize,
    rng: &mut R,
    warm_start: Option<&[f64]>,
) -> Result<LogEigenpair> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Shape("power iteration needs a square matrix".into()));
    }
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let mut v: Vec<f64> = match warm_start {
        Some(w) if w.len() == n && w.iter().all(|x| x.is_finite()) => w.to_vec(),
        _ => (0..n).map(|_| rng.random_range(0.5f64..1.5).ln()).collect(),
    };
    normalize(&mut v);
    let mut prev_change = f64::INFINITY;
    let mut change = f64::INFINITY;
    for it in 1..=max_iters {
        let mut next = log_matvec(m, &v)?;
        if next.iter().all(|x| *x == f64::NEG_INFINITY) {
            return Err(Error::Domain("matrix annihilates the iterate".into()));
        }
        normalize(&mut next);
        prev_change = change;
        change = v
            .iter()
            .zip(&next)
            .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max);
        v = next;
        if change < tol {
            let mv = log_matvec(m, &v)?;
            let terms: Vec<f64> = v.iter().zip(&mv).map(|(a, b)| a + b).collect();
            return Ok(LogEigenpair {
                log_eigenvalue: logsumexp(&terms),
                log_vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_change: change,
        gap_estimate: 1.0 - change / prev_change,
        last_iterate: v,
    })
}

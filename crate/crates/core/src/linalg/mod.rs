//! Extended-precision solves and log-domain arithmetic.

pub mod hp;
pub mod logspace;

pub use hp::{big_ln, big_to_f64, exp_column, exp_diagonal, hp_solve, F64Conversion, HpMatrix, DEFAULT_PRECISION};
pub use logspace::{log_matvec, log_power_iteration, logsumexp, LogEigenpair, LogNonNegMatrix};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("cannot symmetrize a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = (m[(i, j)] + m[(j, i)]) / 2.0;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

//! Proto-representations: SR, DR (state and state-action) and MER.

mod dr;
mod eigen;
mod io;
mod mer;
mod sr;
mod trajectory;

pub use dr::{
    dr_closed_form, dr_dp_iterates, dr_dp_solve, dr_sa_closed_form, dr_sa_td_update, dr_td_update, DpSolution,
};
pub use eigen::{power_iteration, sr_eigenvalue_from_dr, top_log_eigenvector, EigenSummary};
pub use io::{read_rep_csv, read_vector_csv, write_rep_csv, write_vector_csv, RepSidecar};
pub use mer::{adjacency_matrix, mer_closed_form};
pub use sr::{sr_closed_form, sr_td_init, sr_td_update};
pub use trajectory::{trajectory_value_oracle, OracleMode, DEFAULT_PATH_CAP};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{HpMatrix, LogNonNegMatrix};

/// Default temperature.
pub const DEFAULT_LAMBDA: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepKind {
    Sr,
    Dr,
    DrSa,
    Mer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepParams {
    Gamma(f64),
    Lambda(f64),
}

#[derive(Debug, Clone)]
pub enum RepMatrix {
    Hp(HpMatrix),
    Dense(DMatrix<f64>),
    Log(LogNonNegMatrix),
}

/// A representation matrix tagged with how it was produced.
#[derive(Debug, Clone)]
pub struct ProtoRep {
    pub kind: RepKind,
    pub params: RepParams,
    pub policy_id: String,
    pub matrix: RepMatrix,
}

impl ProtoRep {
    pub fn dense(kind: RepKind, params: RepParams, policy_id: &str, matrix: DMatrix<f64>) -> Self {
        Self {
            kind,
            params,
            policy_id: policy_id.to_string(),
            matrix: RepMatrix::Dense(matrix),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.matrix {
            RepMatrix::Hp(m) => m.rows(),
            RepMatrix::Dense(m) => m.nrows(),
            RepMatrix::Log(m) => m.nrows(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.matrix {
            RepMatrix::Hp(m) => m.get_f64(i, j),
            RepMatrix::Dense(m) => m[(i, j)],
            RepMatrix::Log(m) => m.log_entries()[(i, j)].exp(),
        }
    }

    /// Standard-precision copy; entries below the double range become zero.
    pub fn to_f64(&self) -> DMatrix<f64> {
        match &self.matrix {
            RepMatrix::Hp(m) => m.to_f64().matrix,
            RepMatrix::Dense(m) => m.clone(),
            RepMatrix::Log(m) => m.to_matrix(),
        }
    }

    pub fn hp(&self) -> Option<&HpMatrix> {
        match &self.matrix {
            RepMatrix::Hp(m) => Some(m),
            _ => None,
        }
    }

    /// Entrywise logarithm, exact for extended-precision matrices.
    pub fn log_matrix(&self) -> Result<LogNonNegMatrix> {
        match &self.matrix {
            RepMatrix::Hp(m) => LogNonNegMatrix::from_log(m.ln_entries()?),
            RepMatrix::Dense(m) => LogNonNegMatrix::from_matrix(m),
            RepMatrix::Log(m) => Ok(m.clone()),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self.params {
            RepParams::Lambda(l) => Some(l),
            RepParams::Gamma(_) => None,
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;
    use rand::Rng;

    use crate::mdp::{Reward, TabularMdp};

    /// Random MDP with state rewards in `[-3, -0.1]`; acyclic when asked.
    pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, m: usize, acyclic: bool) -> TabularMdp {
        let mut transition = vec![0.0; n * m * n];
        let mut terminal = vec![false; n];
        terminal[n - 1] = true;
        if !acyclic && rng.random_bool(0.3) {
            terminal[n - 1] = false;
        }
        for s in 0..n {
            for a in 0..m {
                let row = &mut transition[(s * m + a) * n..][..n];
                let lo = if acyclic { (s + 1).min(n - 1) } else { 0 };
                let mut total = 0.0;
                for x in row.iter_mut().skip(lo) {
                    if rng.random_bool(0.6) {
                        *x = rng.random_range(0.05..1.0);
                        total += *x;
                    }
                }
                if total == 0.0 {
                    row[rng.random_range(lo..n)] = 1.0;
                    total = 1.0;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
        }
        let reward: Vec<f64> = (0..n)
            .map(|s| if terminal[s] { rng.random_range(-3.0..0.0) } else { rng.random_range(-3.0..-0.1) })
            .collect();
        let mut start = vec![0.0; n];
        start[0] = 1.0;
        TabularMdp::new(n, m, transition, Reward::State(reward), terminal, start).unwrap()
    }

    pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }
}

use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{hp_matrix, split_rows};
use crate::error::{Error, Result};
use crate::linalg::HpMatrix;
use crate::mdp::{TabularMdp, TransitionMatrix, TransitionSample};
use crate::repr::ProtoRep;

/// `k × k` identity: one feature per terminal state.
pub fn terminal_one_hot(k: usize) -> DMatrix<f64> {
    DMatrix::identity(k, k)
}

/// Repeats the feature row of each terminal state once per action, matching
/// the terminal rows of a state-action transition matrix.
pub fn pair_feature_rows(mdp: &TabularMdp, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let terminals = mdp.terminal_states();
    if phi.nrows() != terminals.len() {
        return Err(Error::Shape(format!("{} feature rows for {} terminal states", phi.nrows(), terminals.len())));
    }
    let na = mdp.n_actions();
    let mut out = DMatrix::zeros(terminals.len() * na, phi.ncols());
    for k in 0..terminals.len() {
        for a in 0..na {
            out.row_mut(k * na + a).copy_from(&phi.row(k));
        }
    }
    Ok(out)
}

/// Default features `ζ`, one row per state (or state-action pair).
///
/// Terminal rows hold `φ` and never change.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultFeatureTable {
    zeta: DMatrix<f64>,
    phi: DMatrix<f64>,
    pinned: Vec<Option<usize>>,
}

impl DefaultFeatureTable {
    /// Zero features at non-terminal rows. `phi` has one row per terminal row, in order.
    pub fn new(terminal_rows: &[bool], phi: DMatrix<f64>) -> Result<Self> {
        let mut pinned = Vec::with_capacity(terminal_rows.len());
        let mut k = 0;
        for &t in terminal_rows {
            if t {
                pinned.push(Some(k));
                k += 1;
            } else {
                pinned.push(None);
            }
        }
        if k != phi.nrows() {
            return Err(Error::Shape(format!("{} feature rows for {k} terminal rows", phi.nrows())));
        }
        let mut zeta = DMatrix::zeros(terminal_rows.len(), phi.ncols());
        for (i, p) in pinned.iter().enumerate() {
            if let Some(k) = p {
                zeta.row_mut(i).copy_from(&phi.row(*k));
            }
        }
        Ok(Self { zeta, phi, pinned })
    }

    pub fn d(&self) -> usize {
        self.phi.ncols()
    }

    pub fn zeta(&self) -> &DMatrix<f64> {
        &self.zeta
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn is_pinned(&self, row: usize) -> bool {
        self.pinned[row].is_some()
    }

    /// Indices of the pinned rows, in `φ` order.
    pub fn pinned_rows(&self) -> Vec<usize> {
        self.pinned.iter().enumerate().filter(|(_, p)| p.is_some()).map(|(i, _)| i).collect()
    }

    pub fn rows(&self) -> usize {
        self.zeta.nrows()
    }

    /// `ζ w` for every row.
    pub fn values(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.d() {
            return Err(Error::Shape(format!("{} weights for {} features", w.len(), self.d())));
        }
        Ok(self.zeta.row_iter().map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum()).collect())
    }

    /// Writes `ζ` as CSV with a JSON sidecar describing `φ`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(&self.zeta, path)?;
        let phi: Vec<Vec<f64>> = self.phi.row_iter().map(|r| r.iter().copied().collect()).collect();
        let sidecar = FeatureSidecar {
            kind: "default_features",
            d: self.d(),
            phi: Some(phi),
            pinned_rows: self.pinned_rows(),
            policies: Vec::new(),
        };
        serde_json::to_writer_pretty(File::create(path.with_extension("json"))?, &sidecar)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct FeatureSidecar {
    kind: &'static str,
    d: usize,
    phi: Option<Vec<Vec<f64>>>,
    pinned_rows: Vec<usize>,
    policies: Vec<String>,
}

fn write_rows(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header = vec!["row".to_string()];
    header.extend((0..m.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// `ζ_N = Z_NN P_NT Φ`, with terminal rows set to `Φ`.
///
/// `phi` has one row per terminal row of `p`; works for the state and the
/// state-action DR alike.
pub fn default_features_closed(z: &ProtoRep, p: &TransitionMatrix, phi: &DMatrix<f64>) -> Result<DefaultFeatureTable> {
    if z.dim() != p.dim() {
        return Err(Error::Shape(format!("representation of size {} for {} rows", z.dim(), p.dim())));
    }
    let mut table = DefaultFeatureTable::new(p.terminal_rows(), phi.clone())?;
    let (nt, term) = split_rows(p);
    if nt.is_empty() {
        return Ok(table);
    }
    let zm = hp_matrix(z)?;
    let precision = zm.precision();
    let p_nt = HpMatrix::from_f64(p.entries(), precision)?.submatrix(&nt, &term);
    let product = zm.submatrix(&nt, &nt).matmul(&p_nt.matmul(&HpMatrix::from_f64(phi, precision)?)?)?;
    let product = product.to_f64().matrix;
    for (k, &i) in nt.iter().enumerate() {
        table.zeta.row_mut(i).copy_from(&product.row(k));
    }
    Ok(table)
}

/// `ζ(row) ← ζ(row) + α(exp(r/λ) ζ(next) − ζ(row))`; pinned rows are left alone.
pub fn df_td_update(table: &mut DefaultFeatureTable, row: usize, r: f64, next: usize, alpha: f64, lambda: f64) {
    if table.is_pinned(row) {
        return;
    }
    let scale = (r / lambda).exp();
    for j in 0..table.zeta.ncols() {
        let target = scale * table.zeta[(next, j)];
        table.zeta[(row, j)] += alpha * (target - table.zeta[(row, j)]);
    }
}

/// The same update with the bootstrap averaged over successor rows,
/// `ζ(row) ← ζ(row) + α(exp(r/λ) Σ_i w_i ζ(next_i) − ζ(row))`.
///
/// Used for state-action features, where the next action's distribution
/// under the default policy is known.
pub fn df_expected_td_update(
    table: &mut DefaultFeatureTable,
    row: usize,
    r: f64,
    next: &[(usize, f64)],
    alpha: f64,
    lambda: f64,
) {
    if table.is_pinned(row) {
        return;
    }
    let scale = (r / lambda).exp();
    for j in 0..table.zeta.ncols() {
        let boot: f64 = next.iter().map(|&(i, w)| w * table.zeta[(i, j)]).sum();
        table.zeta[(row, j)] += alpha * (scale * boot - table.zeta[(row, j)]);
    }
}

/// Successor features `ψ_k(s, a)` for a set of policies.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessorFeatureTable {
    n_actions: usize,
    d: usize,
    psi: Vec<DMatrix<f64>>,
    policies: Vec<String>,
}

impl SuccessorFeatureTable {
    pub fn new(n_actions: usize, d: usize) -> Self {
        Self {
            n_actions,
            d,
            psi: Vec::new(),
            policies: Vec::new(),
        }
    }

    /// Adds a zero-initialised policy slot and returns its index.
    pub fn add_policy(&mut self, id: &str, n_states: usize) -> usize {
        self.psi.push(DMatrix::zeros(n_states * self.n_actions, self.d));
        self.policies.push(id.to_string());
        self.psi.len() - 1
    }

    pub fn policies(&self) -> &[String] {
        &self.policies
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn psi(&self, k: usize) -> &DMatrix<f64> {
        &self.psi[k]
    }

    /// Replaces `ψ_k` wholesale, e.g. with an exactly computed table.
    pub fn set_psi(&mut self, k: usize, psi: DMatrix<f64>) {
        assert_eq!(psi.shape(), self.psi[k].shape(), "successor feature shape");
        self.psi[k] = psi;
    }

    /// Keeps only the first `k` policies.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            n_actions: self.n_actions,
            d: self.d,
            psi: self.psi[..k.min(self.psi.len())].to_vec(),
            policies: self.policies[..k.min(self.policies.len())].to_vec(),
        }
    }

    /// `ψ_k(s, a)ᵀ w`.
    pub fn value(&self, k: usize, s: usize, a: usize, w: &[f64]) -> f64 {
        self.psi[k].row(s * self.n_actions + a).iter().zip(w).map(|(x, y)| x * y).sum()
    }

    /// Writes every policy's table as `<stem>_<k>.csv` plus one sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sf");
        for (k, m) in self.psi.iter().enumerate() {
            write_rows(m, &path.with_file_name(format!("{stem}_{k}.csv")))?;
        }
        let sidecar = FeatureSidecar {
            kind: "successor_features",
            d: self.d,
            phi: None,
            pinned_rows: Vec::new(),
            policies: self.policies.clone(),
        };
        serde_json::to_writer_pretty(File::create(path.with_extension("json"))?, &sidecar)?;
        Ok(())
    }
}

/// `ψ_k(s,a) ← ψ_k(s,a) + α[φ(s) + γψ_k(s',a') − ψ_k(s,a)]`.
///
/// On arrival at a terminal state the target is `φ(s) + φ(s')` with no
/// bootstrap. `phi` has one row per state.
pub fn sf_td_update(
    table: &mut SuccessorFeatureTable,
    k: usize,
    sample: &TransitionSample,
    next_action: usize,
    alpha: f64,
    gamma: f64,
    phi: &DMatrix<f64>,
) {
    let na = table.n_actions;
    let row = sample.s * na + sample.a;
    let next_row = sample.next * na + next_action;
    let psi = &mut table.psi[k];
    for j in 0..table.d {
        let tail = if sample.done {
            phi[(sample.next, j)]
        } else {
            gamma * psi[(next_row, j)]
        };
        let target = phi[(sample.s, j)] + tail;
        psi[(row, j)] += alpha * (target - psi[(row, j)]);
    }
}

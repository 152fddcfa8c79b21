//! CSV export of representations with a JSON sidecar.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ProtoRep, RepKind, RepMatrix, RepParams};
use crate::error::{Error, Result};
use crate::linalg::LogNonNegMatrix;

/// Metadata stored next to a representation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepSidecar {
    pub kind: RepKind,
    pub params: RepParams,
    pub policy_id: String,
    pub dim: usize,
    pub log_domain: bool,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the matrix as dense CSV; `log_domain` stores natural logs instead.
///
/// The first header cell is `row` for plain values and `log_row` for logs.
pub fn write_rep_csv(rep: &ProtoRep, path: &Path, log_domain: bool) -> Result<()> {
    let values = if log_domain {
        rep.log_matrix()?.log_entries().clone()
    } else {
        rep.to_f64()
    };
    let n = rep.dim();
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let mut header = vec![if log_domain { "log_row".to_string() } else { "row".to_string() }];
    header.extend((0..n).map(|j| j.to_string()));
    w.write_record(&header)?;
    for i in 0..n {
        let mut record = vec![i.to_string()];
        record.extend((0..values.ncols()).map(|j| values[(i, j)].to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    let sidecar = RepSidecar {
        kind: rep.kind,
        params: rep.params,
        policy_id: rep.policy_id.clone(),
        dim: n,
        log_domain,
    };
    serde_json::to_writer_pretty(File::create(sidecar_path(path))?, &sidecar)?;
    Ok(())
}

/// Reads a representation written by [`write_rep_csv`].
pub fn read_rep_csv(path: &Path) -> Result<ProtoRep> {
    let sidecar: RepSidecar = serde_json::from_reader(File::open(sidecar_path(path))?)?;
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let log_domain = match r.headers()?.get(0) {
        Some("row") => false,
        Some("log_row") => true,
        other => return Err(Error::Config(format!("unexpected first header cell {other:?}"))),
    };
    if log_domain != sidecar.log_domain {
        return Err(Error::Config("CSV header and sidecar disagree on the log flag".into()));
    }
    let n = sidecar.dim;
    let mut values = Vec::with_capacity(n * n);
    for (i, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != n + 1 {
            return Err(Error::Shape(format!("row {i} has {} cells, expected {}", record.len(), n + 1)));
        }
        for cell in record.iter().skip(1) {
            values.push(
                cell.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number {cell:?} in row {i}")))?,
            );
        }
    }
    if values.len() != n * n {
        return Err(Error::Shape(format!("expected {n} rows")));
    }
    let m = DMatrix::from_row_slice(n, n, &values);
    Ok(ProtoRep {
        kind: sidecar.kind,
        params: sidecar.params,
        policy_id: sidecar.policy_id,
        matrix: if log_domain {
            RepMatrix::Log(LogNonNegMatrix::from_log(m)?)
        } else {
            RepMatrix::Dense(m)
        },
    })
}

/// Writes one value per state as `state,value` rows.
pub fn write_vector_csv(values: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["state", "value"])?;
    for (s, v) in values.iter().enumerate() {
        w.write_record([s.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for (i, record) in r.deserialize::<(usize, f64)>().enumerate() {
        let (s, v) = record?;
        if s != i {
            return Err(Error::Shape(format!("state column out of order at row {i}")));
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{chain, transition_matrix, uniform_policy};
    use crate::repr::dr_closed_form;

    #[test]
    fn round_trip_plain_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let mdp = chain(3);
        let p = transition_matrix(&mdp, &uniform_policy(&mdp)).unwrap();
        let z = dr_closed_form(mdp.state_rewards().unwrap(), &p, 1.3, 256, "uniform").unwrap();
        let plain = dir.path().join("z.csv");
        write_rep_csv(&z, &plain, false).unwrap();
        let back = read_rep_csv(&plain).unwrap();
        assert_eq!(back.to_f64(), z.to_f64());
        assert_eq!(back.policy_id, "uniform");
        let logp = dir.path().join("zlog.csv");
        write_rep_csv(&z, &logp, true).unwrap();
        let back = read_rep_csv(&logp).unwrap();
        assert!(matches!(back.matrix, RepMatrix::Log(_)));
        assert_eq!(back.log_matrix().unwrap(), z.log_matrix().unwrap());
        let text = std::fs::read_to_string(&logp).unwrap();
        assert!(text.starts_with("log_row,0,1,2\n"));
        assert!(text.contains("-inf"));
    }

    #[test]
    fn vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let v = vec![0.1, -2.5, 1e-300];
        write_vector_csv(&v, &path).unwrap();
        assert_eq!(read_vector_csv(&path).unwrap(), v);
    }
}

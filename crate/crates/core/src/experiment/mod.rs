//! Config-driven experiments: seeded runs, sweeps, summaries and heatmaps.
//!
//! An output directory holds `config.toml` (the config text as given),
//! `raw/<phase>/c<cell>_s<seed index>.csv` with rows
//! `method,cell,seed,metric,x,value`, `summary.csv` and `manifest.json`.
//! Sweeps also write `best.json`.

mod config;
mod exec;
mod heatmap;
mod runners;
mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    AnalysisRep, CountGrid, CountMethod, ExperimentConfig, ExperimentKind, ReprSettings, RodGrid, ShapingGrid,
    SweepSettings, TransferSettings,
};
pub use exec::{derive_seed, parallel_map, worker_count, WORKERS_ENV};
pub use heatmap::{emit_heatmap, read_heatmap_csv};
pub use runners::{cells, evaluation_variant, rod_cells, run_cell, transfer_run, Cell, CellSpec, Context, RawRow, TransferOutcome};
pub use stats::{point_summary, summarize_ci, PointSummary};

use crate::error::{Error, Result};
use crate::mdp::{make_environment, transition_matrix, uniform_policy, GridLayout};
use crate::repr::{
    adjacency_matrix, dr_closed_form, mer_closed_form, read_rep_csv, sr_closed_form, top_log_eigenvector,
    write_rep_csv, write_vector_csv, ProtoRep, RepKind,
};
use crate::linalg::DEFAULT_PRECISION;

const RAW_HEADER: [&str; 6] = ["method", "cell", "seed", "metric", "x", "value"];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRecord {
    method: String,
    cell: usize,
    seed: u64,
    metric: String,
    x: usize,
    value: f64,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub phase: String,
    pub method: String,
    pub cell: usize,
    pub metric: String,
    pub x: usize,
    pub n: usize,
    pub mean: f64,
    pub ci_half_width: Option<f64>,
    /// `n<2` when the interval is omitted.
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub phase: String,
    pub cell: usize,
    pub method: String,
    pub seed_index: usize,
    pub seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub cells: Vec<serde_json::Value>,
    pub runs: Vec<RunEntry>,
    /// Every other file of the directory with its checksum.
    pub files: BTreeMap<String, String>,
}

/// Winner of one method in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub method: String,
    pub cell: usize,
    pub params: serde_json::Value,
    /// Selection score of every cell of this method in the first phase.
    pub phase1_scores: BTreeMap<usize, f64>,
    /// Selection score of each fresh seed of the winner.
    pub scores: Vec<f64>,
    pub summary: PointSummary,
    /// Last value of every metric per fresh seed.
    pub finals: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub experiment: String,
    pub n1: usize,
    pub n2: usize,
    pub best: Vec<BestCell>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let nonempty = std::fs::read_dir(dir)?.next().is_some();
        if nonempty && !dir.join("manifest.json").exists() {
            return Err(Error::Config(format!(
                "output directory {} is not empty and holds no earlier results",
                dir.display()
            )));
        }
        for stale in ["raw", "reps", "eigenvectors", "heatmaps"] {
            let p = dir.join(stale);
            if p.exists() {
                std::fs::remove_dir_all(p)?;
            }
        }
    }
    std::fs::create_dir_all(dir.join("raw"))?;
    Ok(())
}

fn output_dir(cfg: &ExperimentConfig, config_path: &Path, out: Option<&Path>) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    if let Some(o) = &cfg.output {
        return o.clone();
    }
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    PathBuf::from("results").join(stem)
}

fn write_raw(path: &Path, cell: &Cell, seed: u64, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            cell.index.to_string(),
            seed.to_string(),
            r.metric.to_string(),
            r.x.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Job<'a> {
    phase: &'static str,
    cell: &'a Cell,
    seed_index: usize,
}

/// Runs every job on the worker pool, one raw file per run.
fn execute(
    cfg: &ExperimentConfig,
    ctx: &Context,
    dir: &Path,
    jobs: &[Job<'_>],
) -> Result<(Vec<RunEntry>, Vec<Vec<RawRow>>)> {
    for phase in jobs.iter().map(|j| j.phase).collect::<std::collections::BTreeSet<_>>() {
        std::fs::create_dir_all(dir.join("raw").join(phase))?;
    }
    let results = parallel_map(jobs, worker_count(), |job| -> Result<(RunEntry, Vec<RawRow>)> {
        let seed = derive_seed(cfg.master_seed, job.cell.index, job.seed_index);
        let file = format!("raw/{}/c{}_s{}.csv", job.phase, job.cell.index, job.seed_index);
        let rows = run_cell(cfg, ctx, job.cell, seed)?;
        write_raw(&dir.join(&file), job.cell, seed, &rows)?;
        Ok((
            RunEntry {
                phase: job.phase.to_string(),
                cell: job.cell.index,
                method: job.cell.method.clone(),
                seed_index: job.seed_index,
                seed,
                file,
            },
            rows,
        ))
    });
    let mut entries = Vec::with_capacity(results.len());
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let (e, x) = r?;
        entries.push(e);
        rows.push(x);
    }
    Ok((entries, rows))
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, text: &str, cells: &[Cell], runs: Vec<RunEntry>) -> Result<()> {
    let mut files = BTreeMap::new();
    collect_files(dir, dir, &mut files)?;
    files.remove("manifest.json");
    let manifest = Manifest {
        experiment: cfg.experiment.as_str().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        master_seed: cfg.master_seed,
        cells: cells
            .iter()
            .map(|c| serde_json::json!({ "index": c.index, "method": c.method, "params": c.params() }))
            .collect(),
        runs,
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walk stays under the root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, sha256_hex(&std::fs::read(&p)?));
        }
    }
    Ok(())
}

/// Executes the config with `seeds` seeds per cell and returns the output directory.
///
/// `out` overrides the directory named in the config.
pub fn run_config(path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let (cfg, text) = ExperimentConfig::load(path)?;
    let dir = output_dir(&cfg, path, out);
    run_parsed(&cfg, &text, &dir)?;
    Ok(dir)
}

/// [`run_config`] on an already parsed config.
pub fn run_parsed(cfg: &ExperimentConfig, text: &str, dir: &Path) -> Result<()> {
    prepare_dir(dir)?;
    std::fs::write(dir.join("config.toml"), text)?;
    if cfg.experiment == ExperimentKind::ReprAnalysis {
        return repr_analysis(cfg, text, dir);
    }
    let ctx = Context::new(cfg)?;
    let cells = cells(cfg)?;
    let jobs: Vec<Job<'_>> = cells
        .iter()
        .flat_map(|cell| (0..cfg.seeds).map(move |seed_index| Job { phase: "run", cell, seed_index }))
        .collect();
    let (runs, _) = execute(cfg, &ctx, dir, &jobs)?;
    summarize_dir(dir)?;
    write_manifest(dir, cfg, text, &cells, runs)
}

/// Two-phase hyperparameter search; see [`sweep_parsed`].
pub fn sweep(path: &Path, out: Option<&Path>) -> Result<(PathBuf, SweepReport)> {
    let (cfg, text) = ExperimentConfig::load(path)?;
    let dir = output_dir(&cfg, path, out);
    let report = sweep_parsed(&cfg, &text, &dir)?;
    Ok((dir, report))
}

/// Runs `n1` seeds of every cell, keeps the best cell of each method and
/// re-runs it with `n2` fresh seeds.
pub fn sweep_parsed(cfg: &ExperimentConfig, text: &str, dir: &Path) -> Result<SweepReport> {
    let SweepSettings { n1, n2 } = cfg.sweep_settings();
    let cells = cells(cfg)?;
    prepare_dir(dir)?;
    std::fs::write(dir.join("config.toml"), text)?;
    let ctx = Context::new(cfg)?;

    let jobs: Vec<Job<'_>> = cells
        .iter()
        .flat_map(|cell| (0..n1).map(move |seed_index| Job { phase: "phase1", cell, seed_index }))
        .collect();
    let (mut runs, rows) = execute(cfg, &ctx, dir, &jobs)?;

    let mut phase1: BTreeMap<usize, Vec<Score>> = BTreeMap::new();
    for (job, r) in jobs.iter().zip(&rows) {
        phase1.entry(job.cell.index).or_default().push(score(cfg, r)?);
    }
    let mut methods: Vec<&str> = Vec::new();
    for c in &cells {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
    }
    let mut winners = Vec::new();
    for m in &methods {
        let mut best: Option<(&Cell, Score)> = None;
        for c in cells.iter().filter(|c| c.method == *m) {
            let s = Score::mean(&phase1[&c.index]);
            if best.as_ref().is_none_or(|(_, b)| s.beats(b)) {
                best = Some((c, s));
            }
        }
        winners.push(best.expect("every method has a cell").0);
    }

    let jobs2: Vec<Job<'_>> = winners
        .iter()
        .flat_map(|&cell| (n1..n1 + n2).map(move |seed_index| Job { phase: "phase2", cell, seed_index }))
        .collect();
    let (runs2, rows2) = execute(cfg, &ctx, dir, &jobs2)?;
    runs.extend(runs2);

    let mut best = Vec::new();
    for (i, cell) in winners.iter().enumerate() {
        let seeds = &rows2[i * n2..(i + 1) * n2];
        let scores: Vec<f64> = seeds.iter().map(|r| score(cfg, r).map(|s| s.0)).collect::<Result<_>>()?;
        let mut finals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in seeds {
            for (metric, v) in final_values(r) {
                finals.entry(metric).or_default().push(v);
            }
        }
        best.push(BestCell {
            method: cell.method.clone(),
            cell: cell.index,
            params: cell.params(),
            phase1_scores: cells
                .iter()
                .filter(|c| c.method == cell.method)
                .map(|c| (c.index, Score::mean(&phase1[&c.index]).0))
                .collect(),
            summary: point_summary(&scores),
            scores,
            finals,
        });
    }
    let report = SweepReport { experiment: cfg.experiment.as_str().to_string(), n1, n2, best };
    std::fs::write(dir.join("best.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    summarize_dir(dir)?;
    write_manifest(dir, cfg, text, &cells, runs)?;
    Ok(report)
}

/// Selection score with a tie-breaker.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(f64, f64);

impl Score {
    fn mean(scores: &[Score]) -> Score {
        let n = scores.len() as f64;
        Score(scores.iter().map(|s| s.0).sum::<f64>() / n, scores.iter().map(|s| s.1).sum::<f64>() / n)
    }

    fn beats(&self, other: &Score) -> bool {
        self.0 > other.0 || (self.0 == other.0 && self.1 > other.1)
    }
}

fn series<'a>(rows: &'a [RawRow], method: &'a str, metric: &'a str) -> impl Iterator<Item = f64> + 'a {
    rows.iter().filter(move |r| r.method == method && r.metric == metric).map(|r| r.value)
}

/// Final performance of one run.
///
/// Shaping: mean return over the last tenth of the episodes. Count: total
/// return. ROD: final visitation, ties broken by final mean reward.
/// Transfer: cumulative DF return.
fn score(cfg: &ExperimentConfig, rows: &[RawRow]) -> Result<Score> {
    let method = rows.first().map(|r| r.method.as_str()).ok_or(Error::Empty("run rows"))?;
    let last = |metric: &str| series(rows, method, metric).last().ok_or(Error::Empty("run metric"));
    Ok(match cfg.experiment {
        ExperimentKind::Shaping => {
            let returns: Vec<f64> = series(rows, method, "return").collect();
            Score(last_tenth_mean(&returns)?, 0.0)
        }
        ExperimentKind::Count => Score(last("total_return")?, 0.0),
        ExperimentKind::Rod => Score(last("visit_pct")?, last("mean_reward")?),
        ExperimentKind::Transfer => Score(last("cum_return")?, 0.0),
        ExperimentKind::ReprAnalysis => return Err(Error::Config("repr_analysis has no runs to sweep".into())),
    })
}

/// Mean of the last `ceil(n / 10)` values.
pub fn last_tenth_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("return series"));
    }
    let k = values.len().div_ceil(10);
    Ok(values[values.len() - k..].iter().sum::<f64>() / k as f64)
}

fn final_values(rows: &[RawRow]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in rows {
        let key = if r.method == rows[0].method { r.metric.to_string() } else { format!("{}.{}", r.method, r.metric) };
        out.insert(key, r.value);
    }
    out
}

/// Recomputes `summary.csv` from the raw files of `dir`.
///
/// Rows are grouped by phase, method, cell, metric and x; each group is one
/// value per seed.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let raw = dir.join("raw");
    if !raw.is_dir() {
        return Err(Error::Config(format!("{} has no raw/ directory", dir.display())));
    }
    let mut groups: BTreeMap<(String, String, usize, String, usize), Vec<f64>> = BTreeMap::new();
    let mut phases: Vec<PathBuf> = std::fs::read_dir(&raw)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    phases.sort();
    for phase_dir in phases.into_iter().filter(|p| p.is_dir()) {
        let phase = phase_dir.file_name().expect("directory entry").to_string_lossy().to_string();
        let mut files: Vec<PathBuf> =
            std::fs::read_dir(&phase_dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        files.sort();
        for f in files.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
            let mut r = csv::Reader::from_path(&f)?;
            for rec in r.deserialize::<RawRecord>() {
                let rec = rec?;
                groups
                    .entry((phase.clone(), rec.method, rec.cell, rec.metric, rec.x))
                    .or_default()
                    .push(rec.value);
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty("raw results"));
    }
    let rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((phase, method, cell, metric, x), values)| {
            let p = point_summary(&values);
            SummaryRow {
                phase,
                method,
                cell,
                metric,
                x,
                n: p.n,
                mean: p.mean,
                ci_half_width: p.ci_half_width,
                flag: if p.ci_half_width.is_none() { "n<2".into() } else { String::new() },
            }
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Reads `summary.csv` back.
pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv"))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn analysis_rep(cfg: &ExperimentConfig, kind: AnalysisRep) -> Result<ProtoRep> {
    let mdp = make_environment(cfg.environment.as_str(), cfg.variant)?;
    let r = cfg
        .environment
        .is_grid()
        .then(|| mdp.state_rewards())
        .flatten()
        .ok_or_else(|| Error::Config("repr_analysis needs state rewards".into()))?;
    let s = cfg.repr.clone().unwrap_or_default();
    match kind {
        AnalysisRep::Sr => sr_closed_form(&transition_matrix(&mdp, &uniform_policy(&mdp))?, s.gamma, "uniform"),
        AnalysisRep::Dr => dr_closed_form(
            r,
            &transition_matrix(&mdp, &uniform_policy(&mdp))?,
            s.lambda,
            DEFAULT_PRECISION,
            "uniform",
        ),
        AnalysisRep::Mer => mer_closed_form(r, &adjacency_matrix(&mdp), s.lambda, DEFAULT_PRECISION),
    }
}

fn repr_analysis(cfg: &ExperimentConfig, text: &str, dir: &Path) -> Result<()> {
    let mdp = make_environment(cfg.environment.as_str(), cfg.variant)?;
    let layout = mdp.layout().ok_or_else(|| Error::Config("repr_analysis needs a grid map".into()))?;
    let s = cfg.repr.clone().unwrap_or_default();
    for sub in ["reps", "eigenvectors", "heatmaps", "raw/run"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let mut runs = Vec::new();
    for (i, &kind) in s.kinds.iter().enumerate() {
        let name = match kind {
            AnalysisRep::Sr => "sr",
            AnalysisRep::Dr => "dr",
            AnalysisRep::Mer => "mer",
        };
        let rep = analysis_rep(cfg, kind)?;
        write_rep_csv(&rep, &dir.join("reps").join(format!("{name}.csv")), rep.kind != RepKind::Sr)?;
        let e = top_log_eigenvector(&rep, None)?;
        write_vector_csv(&e.vector, &dir.join("eigenvectors").join(format!("{name}.csv")))?;
        emit_heatmap(&e.vector, layout, &dir.join("heatmaps").join(name))?;
        let cell = Cell { index: i, method: name.to_string(), spec: CellSpec::Transfer };
        let rows: Vec<RawRow> = e
            .vector
            .iter()
            .enumerate()
            .map(|(x, &value)| RawRow { method: name.to_string(), metric: "eigvec", x, value })
            .collect();
        let file = format!("raw/run/c{i}_s0.csv");
        write_raw(&dir.join(&file), &cell, 0, &rows)?;
        runs.push(RunEntry { phase: "run".into(), cell: i, method: name.into(), seed_index: 0, seed: 0, file });
    }
    summarize_dir(dir)?;
    write_manifest(dir, cfg, text, &[], runs)
}

/// Top eigenvector heatmap of a stored representation on a grid map.
///
/// `map` is an environment name or a map file. DR-family vectors are drawn
/// in log scale. Writes `<repr stem>_eig.csv` and `.svg` beside the input.
pub fn heatmap_from_files(rep_csv: &Path, map: &str) -> Result<(PathBuf, PathBuf)> {
    let rep = read_rep_csv(rep_csv)?;
    let layout = load_layout(map)?;
    if layout.coords.len() != rep.dim() {
        return Err(Error::Shape(format!("map has {} states, representation {}", layout.coords.len(), rep.dim())));
    }
    let e = top_log_eigenvector(&rep, None)?;
    let stem = rep_csv.with_file_name(format!(
        "{}_eig",
        rep_csv.file_stem().and_then(|s| s.to_str()).unwrap_or("repr")
    ));
    emit_heatmap(&e.vector, &layout, &stem)
}

fn load_layout(map: &str) -> Result<GridLayout> {
    let mdp = match map.parse::<crate::mdp::EnvName>() {
        Ok(name) => make_environment(name.as_str(), Default::default())?,
        Err(_) => {
            let text = std::fs::read_to_string(map)
                .map_err(|e| Error::Config(format!("{map} is neither an environment nor a readable map file: {e}")))?;
            crate::mdp::GridMap::parse(&text)?.to_mdp()
        }
    };
    mdp.layout().cloned().ok_or_else(|| Error::Config(format!("{map} is not a grid map")))
}

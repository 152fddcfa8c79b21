use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::ShapingMode;
use crate::error::{Error, Result};
use crate::mdp::{EnvName, Variant};
use crate::options::RodKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Shaping,
    Rod,
    Count,
    Transfer,
    ReprAnalysis,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Shaping => "shaping",
            ExperimentKind::Rod => "rod",
            ExperimentKind::Count => "count",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::ReprAnalysis => "repr_analysis",
        }
    }
}

/// A parsed experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub environment: EnvName,
    #[serde(default)]
    pub variant: Variant,
    /// Seeds per grid cell for `run`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Output directory, relative to the working directory.
    pub output: Option<PathBuf>,
    pub shaping: Option<ShapingGrid>,
    pub rod: Option<RodGrid>,
    pub count: Option<CountGrid>,
    pub transfer: Option<TransferSettings>,
    pub repr: Option<ReprSettings>,
    pub sweep: Option<SweepSettings>,
}

fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingGrid {
    pub methods: Vec<ShapingMode>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub episodes: usize,
    pub step_cap: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    /// Discount of the SR whose eigenvector shapes `sr_pot` and `sr_prior`.
    pub sr_gamma: f64,
    pub init_value: f64,
}

impl Default for ShapingGrid {
    fn default() -> Self {
        Self {
            methods: vec![ShapingMode::DrPot, ShapingMode::SrPot, ShapingMode::SrPrior, ShapingMode::None],
            alpha: vec![0.1, 0.3, 1.0],
            beta: vec![0.25, 0.5, 0.75, 1.0],
            episodes: 50,
            step_cap: 500,
            gamma: 0.99,
            epsilon: 0.05,
            lambda: 1.3,
            sr_gamma: 0.99,
            init_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodGrid {
    pub kinds: Vec<RodKind>,
    pub p_option: Vec<f64>,
    pub n_learn: Vec<usize>,
    pub alpha: Vec<f64>,
    pub n_option: Vec<usize>,
    pub n_iter: usize,
    pub n_steps: usize,
    pub alpha0: f64,
    pub gamma0: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Also train and evaluate offline Q-learning after every iteration.
    pub offline_q: bool,
}

impl Default for RodGrid {
    fn default() -> Self {
        Self {
            kinds: vec![RodKind::Race, RodKind::Ceo, RodKind::Rw],
            p_option: vec![0.01, 0.05, 0.1],
            n_learn: vec![1, 10, 100],
            alpha: vec![0.01, 0.03, 0.1],
            n_option: vec![1, 8, 1000],
            n_iter: 50,
            n_steps: 100,
            alpha0: 0.1,
            gamma0: 0.99,
            lambda: 1.3,
            gamma: 0.99,
            offline_q: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Sarsa,
    SarsaDr,
}

impl CountMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CountMethod::Sarsa => "sarsa",
            CountMethod::SarsaDr => "sarsa_dr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountGrid {
    pub methods: Vec<CountMethod>,
    /// Sarsa step sizes.
    pub eta: Vec<f64>,
    /// DR step sizes.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub steps: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub init_value: f64,
}

impl Default for CountGrid {
    fn default() -> Self {
        Self {
            methods: vec![CountMethod::Sarsa, CountMethod::SarsaDr],
            eta: vec![0.25],
            alpha: vec![0.5],
            beta: vec![100.0],
            lambda: vec![1.0],
            steps: 5000,
            gamma: 0.95,
            epsilon: 0.01,
            init_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSettings {
    pub df_steps: usize,
    pub source_steps: usize,
    pub sf_steps: usize,
    /// Source tasks sampled per seed.
    pub sources: usize,
    /// Numbers of source policies to evaluate the SF transfer with.
    pub sf_counts: Vec<usize>,
    pub tests: usize,
    pub reward_std: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub eval_cap: usize,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            df_steps: 100_000,
            source_steps: 100_000,
            sf_steps: 100_000,
            sources: 8,
            sf_counts: vec![1, 8],
            tests: 50,
            reward_std: 50.0,
            alpha: 0.1,
            lambda: 1.3,
            gamma: 0.99,
            epsilon: 0.1,
            eval_cap: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisRep {
    Sr,
    Dr,
    Mer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReprSettings {
    pub kinds: Vec<AnalysisRep>,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for ReprSettings {
    fn default() -> Self {
        Self {
            kinds: vec![AnalysisRep::Sr, AnalysisRep::Dr],
            lambda: 1.3,
            gamma: 0.99,
        }
    }
}

/// Seed counts of the two sweep phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub n1: usize,
    pub n2: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    /// Default seed counts for a sweep of this experiment.
    pub fn sweep_settings(&self) -> SweepSettings {
        self.sweep.unwrap_or(match self.experiment {
            ExperimentKind::Rod => SweepSettings { n1: 10, n2: 10 },
            ExperimentKind::Count => SweepSettings { n1: 10, n2: 100 },
            _ => SweepSettings { n1: 20, n2: 50 },
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let sections = [
            ("shaping", self.shaping.is_some(), ExperimentKind::Shaping),
            ("rod", self.rod.is_some(), ExperimentKind::Rod),
            ("count", self.count.is_some(), ExperimentKind::Count),
            ("transfer", self.transfer.is_some(), ExperimentKind::Transfer),
            ("repr", self.repr.is_some(), ExperimentKind::ReprAnalysis),
        ];
        for (name, present, kind) in sections {
            if present && kind != self.experiment {
                return bad(format!("[{name}] does not belong to a {} experiment", self.experiment.as_str()));
            }
        }
        if self.seeds == 0 {
            return bad("seeds: must be positive".into());
        }
        if let Some(s) = self.sweep {
            if s.n1 == 0 || s.n2 == 0 {
                return bad("sweep: n1 and n2 must be positive".into());
            }
        }
        let grid = self.environment.is_grid();
        match self.experiment {
            ExperimentKind::Shaping => {
                let g = self.shaping.clone().unwrap_or_default();
                if !grid {
                    return bad(format!("shaping needs a grid map, not {}", self.environment));
                }
                if matches!(self.variant, Variant::NoTerminals | Variant::NoTerminalsNoLowReward) {
                    return bad("shaping needs goal states".into());
                }
                nonempty("shaping.methods", g.methods.len())?;
                nonempty("shaping.alpha", g.alpha.len())?;
                if g.methods.iter().any(|m| *m != ShapingMode::None) {
                    nonempty("shaping.beta", g.beta.len())?;
                }
                if g.beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    return bad("shaping.beta: values must lie in [0, 1]".into());
                }
                if g.episodes == 0 || g.step_cap == 0 {
                    return bad("shaping.episodes and shaping.step_cap must be positive".into());
                }
            }
            ExperimentKind::Rod => {
                let g = self.rod.clone().unwrap_or_default();
                if !grid || !matches!(self.variant, Variant::NoTerminals | Variant::NoTerminalsNoLowReward) {
                    return bad("rod runs on a grid map with variant no_terminals or no_terminals_no_low_reward".into());
                }
                nonempty("rod.kinds", g.kinds.len())?;
                if g.kinds.iter().any(|k| *k != RodKind::Rw) {
                    nonempty("rod.p_option", g.p_option.len())?;
                    nonempty("rod.n_learn", g.n_learn.len())?;
                    nonempty("rod.alpha", g.alpha.len())?;
                    nonempty("rod.n_option", g.n_option.len())?;
                }
                for c in super::runners::rod_cells(&g) {
                    c.validate()?;
                }
            }
            ExperimentKind::Count => {
                let g = self.count.clone().unwrap_or_default();
                if grid {
                    return bad(format!("count runs on riverswim or sixarms, not {}", self.environment));
                }
                nonempty("count.methods", g.methods.len())?;
                nonempty("count.eta", g.eta.len())?;
                if g.methods.contains(&CountMethod::SarsaDr) {
                    nonempty("count.alpha", g.alpha.len())?;
                    nonempty("count.beta", g.beta.len())?;
                    nonempty("count.lambda", g.lambda.len())?;
                }
                if g.steps == 0 {
                    return bad("count.steps must be positive".into());
                }
            }
            ExperimentKind::Transfer => {
                let t = self.transfer.clone().unwrap_or_default();
                if self.environment != EnvName::FourRoomsMultigoal || self.variant != Variant::Standard {
                    return bad("transfer runs on four_rooms_multigoal (standard)".into());
                }
                if t.sources == 0 || t.tests == 0 {
                    return bad("transfer.sources and transfer.tests must be positive".into());
                }
                if t.sf_counts.iter().any(|&k| k == 0 || k > t.sources) {
                    return bad("transfer.sf_counts: each count must lie in 1..=sources".into());
                }
                if !(t.reward_std > 0.0) {
                    return bad("transfer.reward_std must be positive".into());
                }
            }
            ExperimentKind::ReprAnalysis => {
                let r = self.repr.clone().unwrap_or_default();
                nonempty("repr.kinds", r.kinds.len())?;
                if !grid {
                    return bad("repr_analysis needs a grid map".into());
                }
            }
        }
        Ok(())
    }
}

fn nonempty(field: &str, len: usize) -> Result<()> {
    if len == 0 {
        Err(Error::Config(format!("{field}: empty grid")))
    } else {
        Ok(())
    }
}

//! Experiment configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use quantrisk::complexity::complexity_lambdas;
use quantrisk::dataio::{Month, PanelFormat, PredictorTransform, SplitSpec, TargetSpec};
use quantrisk::eval::{Bandwidth, EvalConfig, DEFAULT_SCALE};
use quantrisk::loss::LossSpec;
use quantrisk::net::Architecture;
use quantrisk::select::{GridProfile, HyperGrid, QUANTILES};
use quantrisk::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every training stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads. Defaults to the available parallelism.
    #[serde(default)]
    pub jobs: Option<usize>,
    pub data: DataConfig,
    pub target: TargetSpec,
    pub split: SplitDates,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: PanelFormat,
    /// First and last panel month kept (inclusive).
    #[serde(default)]
    pub start: Option<Month>,
    #[serde(default)]
    pub end: Option<Month>,
    pub transforms: Transforms,
}

fn default_format() -> PanelFormat {
    PanelFormat::FredmdCsv
}

/// `"from-codes"` uses the file's transform-code row, a single transform
/// name applies to every column, a list gives one entry per column, and a
/// table maps column names to transforms on top of a `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Transforms {
    Named(String),
    List(Vec<PredictorTransform>),
    Table {
        default: PredictorTransform,
        #[serde(default)]
        columns: BTreeMap<String, PredictorTransform>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDates {
    pub t1: Month,
    pub t2: Month,
    pub t3: Month,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainLoss {
    Pinball,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceArch {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub profile: GridProfile,
    pub quantiles: Vec<f64>,
    pub depths: Option<Vec<usize>>,
    pub widths: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    /// Training losses tried per quantile (raw grid only).
    pub train_losses: Vec<TrainLoss>,
    pub penalize_biases: bool,
    /// Denominator architecture of the complexity index; by default the
    /// unpenalized candidate with the largest fitted variance.
    pub reference: Option<ReferenceArch>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            profile: GridProfile::Complexity,
            quantiles: QUANTILES.to_vec(),
            depths: None,
            widths: None,
            alphas: None,
            lambdas: None,
            train_losses: vec![TrainLoss::Pinball],
            penalize_biases: false,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileRule {
    /// Inverted empirical CDF.
    #[default]
    Type1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bandwidth: Bandwidth,
    pub scale: f64,
    pub quantile_rule: QuantileRule,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::HorizonMinusOne,
            scale: DEFAULT_SCALE,
            quantile_rule: QuantileRule::Type1,
        }
    }
}

impl EvalSection {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            bandwidth: self.bandwidth,
            scale: self.scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointPolicy {
    /// Every origin of every job.
    All,
    /// Final checkpoint of each job, enough to continue the recursion.
    #[default]
    Last,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub checkpoints: CheckpointPolicy,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            checkpoints: CheckpointPolicy::Last,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("reading config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.path.is_relative() {
            cfg.data.path = base.join(&cfg.data.path);
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training settings with the master seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            t1: self.split.t1,
            t2: self.split.t2,
            t3: self.split.t3,
            horizon: self.target.horizon,
        }
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.target.validate().map_err(|e| config_err(e.to_string()))?;
        let s = &self.split;
        if !(s.t1 < s.t2 && s.t2 < s.t3) {
            return Err(config_err(format!("split dates must satisfy t1 < t2 < t3, got {} {} {}", s.t1, s.t2, s.t3)));
        }
        let h = self.target.horizon as i32;
        if s.t2.months_since(s.t1) < h {
            return Err(config_err(format!("validation span {}..{} is shorter than the horizon {h}", s.t1, s.t2)));
        }
        if let (Some(a), Some(b)) = (self.data.start, self.data.end) {
            if a >= b {
                return Err(config_err(format!("data.start {a} must precede data.end {b}")));
            }
        }
        if let Some(end) = self.data.end {
            if s.t3 > end {
                return Err(config_err(format!("t3 {} lies after data.end {end}", s.t3)));
            }
        }
        if let Transforms::Named(name) = &self.data.transforms {
            if name != "from-codes" {
                parse_transform(name)?;
            }
        }
        if self.jobs == Some(0) {
            return Err(config_err("jobs must be positive"));
        }
        self.train.validate().map_err(|e| config_err(e.to_string()))?;
        if self.train.seed != 0 {
            return Err(config_err("set the seed at the top level, not under [train]"));
        }
        if !(self.eval.scale > 0.0 && self.eval.scale.is_finite()) {
            return Err(config_err("eval.scale must be positive"));
        }
        let g = &self.grid;
        if g.quantiles.is_empty() {
            return Err(config_err("grid.quantiles is empty"));
        }
        for &tau in &g.quantiles {
            LossSpec::pinball(tau).map_err(|e| config_err(e.to_string()))?;
        }
        if g.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("grid.quantiles must be strictly increasing"));
        }
        if g.train_losses.is_empty() {
            return Err(config_err("grid.train_losses is empty"));
        }
        if g.profile == GridProfile::Complexity && g.train_losses != [TrainLoss::Pinball] {
            return Err(config_err("the complexity profile trains with the pinball loss only"));
        }
        if let Some(lambdas) = &g.lambdas {
            let (lo, hi) = match g.profile {
                GridProfile::Table1 => (0.2, 10.0),
                GridProfile::Complexity => (1e-3, 1e2),
            };
            // the complexity profile also admits the unpenalized fit
            let ok = |l: f64| (l >= lo * (1.0 - 1e-9) && l <= hi * (1.0 + 1e-9)) || (l == 0.0 && g.profile == GridProfile::Complexity);
            if let Some(bad) = lambdas.iter().find(|&&l| !ok(l)) {
                return Err(config_err(format!(
                    "lambda {bad} is outside the {:?} profile range [{lo}, {hi}]",
                    g.profile
                )));
            }
            if g.profile == GridProfile::Complexity && !lambdas.contains(&0.0) {
                return Err(config_err("the complexity profile needs lambda 0 for the index denominator"));
            }
        }
        if let Some(r) = &g.reference {
            if r.widths.contains(&0) || !(0.0..=1.0).contains(&r.alpha) {
                return Err(config_err("grid.reference needs positive widths and alpha in [0, 1]"));
            }
        }
        self.hyper_grid().validate().map_err(|e| config_err(e.to_string()))
    }

    /// Grid with the configured overrides applied. Losses are filled per
    /// quantile by the pipeline.
    pub fn hyper_grid(&self) -> HyperGrid {
        let mut grid = HyperGrid::for_profile(self.grid.profile);
        if let Some(v) = &self.grid.depths {
            grid.depths = v.clone();
        }
        if let Some(v) = &self.grid.widths {
            grid.widths = v.clone();
        }
        if let Some(v) = &self.grid.alphas {
            grid.alphas = v.clone();
        }
        if let Some(v) = &self.grid.lambdas {
            grid.lambdas = v.clone();
        } else if self.grid.profile == GridProfile::Complexity {
            grid.lambdas = complexity_lambdas();
        }
        grid
    }

    /// Training losses competing at quantile `tau`.
    pub fn losses_for(&self, tau: f64) -> Vec<LossSpec> {
        self.grid
            .train_losses
            .iter()
            .map(|l| match l {
                TrainLoss::Pinball => LossSpec::Pinball { tau },
                TrainLoss::Mse => LossSpec::Mse,
            })
            .collect()
    }

    pub fn reference_architecture(&self, input_dim: usize) -> Result<Option<Architecture>, CliError> {
        self.grid
            .reference
            .as_ref()
            .map(|r| Architecture::new(input_dim, r.widths.clone(), r.alpha).map_err(|e| config_err(e.to_string())))
            .transpose()
    }

    /// Transform per panel column.
    pub fn resolve_transforms(&self, names: &[String], codes: Option<&[i32]>) -> Result<Vec<PredictorTransform>, CliError> {
        match &self.data.transforms {
            Transforms::Named(n) if n == "from-codes" => {
                let codes = codes.ok_or_else(|| {
                    CliError::Data("transforms = \"from-codes\" but the file has no transform-code row".into())
                })?;
                codes
                    .iter()
                    .zip(names)
                    .map(|(&c, name)| {
                        PredictorTransform::from_code(c)
                            .ok_or_else(|| CliError::Data(format!("column {name}: unknown transform code {c}")))
                    })
                    .collect()
            }
            Transforms::Named(n) => Ok(vec![parse_transform(n)?; names.len()]),
            Transforms::List(list) => {
                if list.len() != names.len() {
                    return Err(config_err(format!(
                        "data.transforms lists {} entries for {} columns",
                        list.len(),
                        names.len()
                    )));
                }
                Ok(list.clone())
            }
            Transforms::Table { default, columns } => {
                if let Some(unknown) = columns.keys().find(|k| !names.contains(k)) {
                    return Err(config_err(format!("data.transforms names unknown column {unknown}")));
                }
                Ok(names.iter().map(|n| columns.get(n).copied().unwrap_or(*default)).collect())
            }
        }
    }

    /// Identity of everything that affects results: the resolved config
    /// (minus worker count and output location) and the data file's bytes.
    pub fn hash(&self, data_bytes: &[u8]) -> String {
        let mut canonical = self.clone();
        canonical.jobs = None;
        canonical.output.dir = PathBuf::new();
        canonical.data.path = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(Sha256::digest(data_bytes));
        format!("{:x}", h.finalize())[..16].to_string()
    }
}

fn parse_transform(name: &str) -> Result<PredictorTransform, CliError> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| config_err(format!("unknown transform {name:?}")))
}

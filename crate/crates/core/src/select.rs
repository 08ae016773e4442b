//! Hyperparameter selection on the validation segment, over the raw grid or
//! along the complexity grid.

use std::collections::BTreeMap;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::complexity_lambdas;
use crate::dataio::{expanding_windows, Segment, SplitSpec, SupervisedDataset};
use crate::error::{Error, Result};
use crate::loss::{LossSpec, Penalty};
use crate::net::Architecture;
use crate::train::{ForecastPoint, ForecastSeries, Job, TrainConfig};

/// Quantile levels reported throughout.
pub const QUANTILES: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

/// 40 log-spaced penalties from 0.2 to 10 inclusive.
pub fn table1_lambdas() -> Vec<f64> {
    let (lo, hi) = (0.2f64.ln(), 10f64.ln());
    (0..40).map(|i| (lo + (hi - lo) * i as f64 / 39.0).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridProfile {
    /// Penalties in `[0.2, 10]`.
    Table1,
    /// Penalties `{0} U [1e-3, 1e2]`.
    Complexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub losses: Vec<LossSpec>,
}

impl HyperGrid {
    pub fn for_profile(profile: GridProfile) -> Self {
        let lambdas = match profile {
            GridProfile::Table1 => table1_lambdas(),
            GridProfile::Complexity => complexity_lambdas(),
        };
        Self {
            depths: vec![0, 1, 2],
            widths: vec![2, 4, 8],
            alphas: vec![0.0, 0.5, 1.0],
            lambdas,
            losses: std::iter::once(LossSpec::Mse)
                .chain(QUANTILES.iter().map(|&tau| LossSpec::Pinball { tau }))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("grid: {m}")));
        if self.depths.is_empty() || self.lambdas.is_empty() || self.losses.is_empty() {
            return bad("depths, lambdas and losses must be nonempty");
        }
        if self.depths.iter().any(|&d| d > 0) && (self.widths.is_empty() || self.alphas.is_empty()) {
            return bad("hidden layers need at least one width and one slope");
        }
        if self.widths.contains(&0) {
            return bad("widths must be positive");
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("slopes must lie in [0, 1]");
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("penalties must be finite and nonnegative");
        }
        self.losses.iter().try_for_each(LossSpec::validate)
    }

    /// Architectures in enumeration order. Width and slope are not varied for
    /// the linear model; deeper models use the same width in every layer.
    pub fn architectures(&self, input_dim: usize) -> Result<Vec<Architecture>> {
        let mut out = Vec::new();
        for &d in &self.depths {
            if d == 0 {
                out.push(Architecture::linear(input_dim));
                continue;
            }
            for &w in &self.widths {
                for &a in &self.alphas {
                    out.push(Architecture::new(input_dim, vec![w; d], a)?);
                }
            }
        }
        Ok(out)
    }

    /// Every (architecture, penalty, training loss) triple.
    pub fn configs(&self, input_dim: usize, penalize_biases: bool) -> Result<Vec<HyperConfig>> {
        let mut out = Vec::new();
        for arch in self.architectures(input_dim)? {
            for &lambda in &self.lambdas {
                for &loss in &self.losses {
                    out.push(HyperConfig {
                        arch: arch.clone(),
                        penalty: Penalty {
                            lambda,
                            penalize_biases,
                        },
                        loss,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Deepest, widest architecture, with the smallest slope on ties.
    pub fn reference_architecture(&self, input_dim: usize) -> Result<Architecture> {
        let archs = self.architectures(input_dim)?;
        archs
            .into_iter()
            .max_by(|a, b| {
                (a.depth(), a.num_params())
                    .cmp(&(b.depth(), b.num_params()))
                    .then(b.alpha().unwrap_or(1.0).total_cmp(&a.alpha().unwrap_or(1.0)))
            })
            .ok_or(Error::Empty("architecture grid"))
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub arch: Architecture,
    pub penalty: Penalty,
    pub loss: LossSpec,
}

impl HyperConfig {
    /// Stable identifier such as `d1-w4-a0.5_l0.2_q0.05`.
    pub fn key(&self) -> String {
        format!("{}_l{}_{}", self.arch, self.penalty.lambda, self.loss.label())
    }
}

/// Orders two configurations by simplicity: fewer layers first, then larger
/// penalty.
fn simpler(a: &HyperConfig, b: &HyperConfig) -> bool {
    if a.arch.depth() != b.arch.depth() {
        a.arch.depth() < b.arch.depth()
    } else {
        a.penalty.lambda > b.penalty.lambda
    }
}

/// Forecasts restricted to the validation segment. Test-segment points are
/// discarded on construction, so nothing built from a view can read them.
#[derive(Debug, Clone)]
pub struct ValidationView {
    points: Vec<ForecastPoint>,
}

impl ValidationView {
    pub fn new(series: &ForecastSeries) -> Result<Self> {
        let points: Vec<ForecastPoint> = series
            .segment(Segment::Validation)
            .filter(|p| p.realization.is_some())
            .cloned()
            .collect();
        if points.is_empty() {
            return Err(Error::Empty("validation segment"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ForecastPoint] {
        &self.points
    }

    /// Mean loss over the validation origins.
    pub fn score(&self, loss: &LossSpec) -> f64 {
        self.points
            .iter()
            .map(|p| loss.value(p.realization.expect("filtered"), p.prediction))
            .sum::<f64>()
            / self.points.len() as f64
    }
}

/// Mean loss over the validation segment.
pub fn validation_score(series: &ForecastSeries, loss: &LossSpec) -> Result<f64> {
    loss.validate()?;
    Ok(ValidationView::new(series)?.score(loss))
}

/// Result of one grid job.
#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome {
    Forecasts(ForecastSeries),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub key: String,
    pub config: HyperConfig,
    pub tau: f64,
    pub validation: Option<f64>,
    pub test: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: HyperConfig,
    pub score: f64,
    pub ledger: Vec<LedgerEntry>,
}

/// Picks the configuration with the lowest validation pinball loss at `tau`.
/// Every configuration must have an outcome; failed jobs are kept in the
/// ledger but cannot win.
pub fn select_hyperparams(
    configs: &[HyperConfig],
    outcomes: &BTreeMap<String, JobOutcome>,
    tau: f64,
) -> Result<Selection> {
    let scoring = LossSpec::pinball(tau)?;
    let missing: Vec<String> = configs
        .iter()
        .map(HyperConfig::key)
        .filter(|k| !outcomes.contains_key(k))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }
    let mut ledger = Vec::with_capacity(configs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, config) in configs.iter().enumerate() {
        let key = config.key();
        let (validation, error) = match &outcomes[&key] {
            JobOutcome::Forecasts(s) => match validation_score(s, &scoring) {
                Ok(v) if v.is_finite() => (Some(v), None),
                Ok(v) => (None, Some(format!("non-finite score {v}"))),
                Err(e) => (None, Some(e.to_string())),
            },
            JobOutcome::Failed(msg) => (None, Some(msg.clone())),
        };
        if let Some(v) = validation {
            let wins = match best {
                None => true,
                Some((j, b)) => v < b - 1e-12 || ((v - b).abs() <= 1e-12 && simpler(config, &configs[j])),
            };
            if wins {
                best = Some((i, v));
            }
        }
        ledger.push(LedgerEntry {
            key,
            config: config.clone(),
            tau,
            validation,
            test: None,
            error,
        });
    }
    let (i, score) = best.ok_or_else(|| Error::Degenerate(format!("no configuration produced a score at tau = {tau}")))?;
    info!("tau {tau}: selected {} with validation loss {score:.6}", configs[i].key());
    Ok(Selection {
        best: configs[i].clone(),
        score,
        ledger,
    })
}

/// Runs validation-segment recursions for every configuration in parallel.
/// Only windows whose target falls in the validation segment are fitted.
pub fn run_validation_grid(
    dataset: &SupervisedDataset,
    split: &SplitSpec,
    configs: &[HyperConfig],
    train: &TrainConfig,
) -> Result<BTreeMap<String, JobOutcome>> {
    let windows: Vec<_> = expanding_windows(dataset, split)?
        .into_iter()
        .filter(|w| w.segment == Segment::Validation)
        .collect();
    Ok(configs
        .par_iter()
        .map(|c| {
            let job = Job {
                dataset,
                arch: &c.arch,
                penalty: &c.penalty,
                loss: &c.loss,
                config: train,
            };
            let outcome = match job.run(&windows, None, |_, _| Ok(())) {
                Ok((series, _)) => JobOutcome::Forecasts(series),
                Err(e) => JobOutcome::Failed(e.to_string()),
            };
            (c.key(), outcome)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityLedgerEntry {
    pub grid_point: f64,
    pub validation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexitySelection {
    pub r_hat: f64,
    /// Position of `r_hat` in the input.
    pub index: usize,
    pub score: f64,
    pub ledger: Vec<ComplexityLedgerEntry>,
}

/// Picks the complexity grid point with the lowest validation pinball loss.
/// Ties go to the smaller grid point.
pub fn select_complexity(outcomes: &[(f64, JobOutcome)], tau: f64) -> Result<ComplexitySelection> {
    let scoring = LossSpec::pinball(tau)?;
    if outcomes.is_empty() {
        return Err(Error::Empty("complexity grid"));
    }
    let mut ledger = Vec::with_capacity(outcomes.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (g, outcome)) in outcomes.iter().enumerate() {
        let (validation, error) = match outcome {
            JobOutcome::Forecasts(s) => match validation_score(s, &scoring) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            },
            JobOutcome::Failed(m) => (None, Some(m.clone())),
        };
        if let Some(v) = validation {
            let wins = match best {
                None => true,
                Some((j, b)) => v < b - 1e-12 || ((v - b).abs() <= 1e-12 && *g < outcomes[j].0),
            };
            if wins {
                best = Some((i, v));
            }
        }
        ledger.push(ComplexityLedgerEntry {
            grid_point: *g,
            validation,
            error,
        });
    }
    let (index, score) = best.ok_or_else(|| Error::Degenerate(format!("no grid point produced a score at tau = {tau}")))?;
    Ok(ComplexitySelection {
        r_hat: outcomes[index].0,
        index,
        score,
        ledger,
    })
}

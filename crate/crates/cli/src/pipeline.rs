//! Stages of an experiment and the artifacts they leave in the output
//! directory.
//!
//! Layout under the output directory:
//! - `manifest.json`: config hash, seed, status of every job
//! - `ingest.json`: dataset summary
//! - `complexity/<q>.json`, `complexity/<q>.csv`: index records and grid mapping
//! - `jobs/validate/<key>.json`, `jobs/test/<key>.json`: forecasts per job
//! - `checkpoints/<stage>/<key>/...`: training checkpoints
//! - `selection/<q>.json`: validation choice and score ledger per quantile
//! - `reports/...`: tables, fan chart, ledger

use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use quantrisk::complexity::{complexity_records, map_complexity_grid, write_records_csv, Candidate, ComplexityRecord, GridAssignment};
use quantrisk::dataio::{build_dataset, expanding_windows, parse_panel, Month, Segment, SeriesPanel, SplitSpec, SupervisedDataset, Window};
use quantrisk::eval::{build_table, naive_forecasts, write_fanchart_csv};
use quantrisk::loss::{LossSpec, Penalty};
use quantrisk::net::Architecture;
use quantrisk::select::{select_complexity, select_hyperparams, validation_score, HyperConfig, JobOutcome};
use quantrisk::train::{Checkpoint, ForecastSeries, Job};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CheckpointPolicy, ExperimentConfig};
use crate::store::{JobRecord, JobStatus, Store};
use crate::CliError;
use quantrisk::select::GridProfile;

/// Complexity grid points, 0.0 through 1.0.
pub fn grid_points() -> Vec<f64> {
    quantrisk::complexity::complexity_grid()
}

pub fn tau_label(tau: f64) -> String {
    format!("q{tau}")
}

fn row_label(g: f64) -> String {
    format!("{g:.1}")
}

/// Parsed panel, dataset and the raw file bytes (for hashing).
pub struct Loaded {
    pub panel: SeriesPanel,
    pub dataset: SupervisedDataset,
    pub bytes: Vec<u8>,
}

pub fn load(cfg: &ExperimentConfig) -> Result<Loaded, CliError> {
    let path = &cfg.data.path;
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("failed to read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let panel = parse_panel(text, cfg.data.format)
        .and_then(|p| p.slice(cfg.data.start, cfg.data.end))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let transforms = cfg.resolve_transforms(panel.names(), panel.transform_codes())?;
    let dataset = build_dataset(&panel, &transforms, &cfg.target).map_err(CliError::from)?;
    Ok(Loaded { panel, dataset, bytes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityArtifact {
    pub config_hash: String,
    pub tau: f64,
    pub reference: Architecture,
    pub var0_max: f64,
    pub records: Vec<ComplexityRecord>,
    pub mapping: Vec<GridAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobArtifact {
    pub config_hash: String,
    pub key: String,
    pub config: HyperConfig,
    pub forecasts: Option<ForecastSeries>,
    pub error: Option<String>,
}

impl JobArtifact {
    fn outcome(&self) -> JobOutcome {
        match (&self.forecasts, &self.error) {
            (Some(f), None) => JobOutcome::Forecasts(f.clone()),
            (_, e) => JobOutcome::Failed(e.clone().unwrap_or_else(|| "no forecasts".into())),
        }
    }
}

/// One line of the per-quantile selection ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    /// Complexity grid point, or the job key on the raw grid.
    pub row: String,
    /// `None` for the benchmark row.
    pub config: Option<HyperConfig>,
    pub validation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub config_hash: String,
    pub tau: f64,
    pub row: String,
    /// `None` when the benchmark wins.
    pub selected: Option<HyperConfig>,
    pub score: f64,
    pub ledger: Vec<LedgerRow>,
}

/// Rows evaluated at one quantile: a label and the model behind it, `None`
/// standing for the benchmark.
pub type Plan = Vec<(String, Option<HyperConfig>)>;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub dataset: SupervisedDataset,
    pub split: SplitSpec,
    pub windows: Vec<Window>,
    pub store: Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Validate,
    Test,
}

impl Stage {
    fn dir(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Test => "test",
        }
    }

    fn segment(self) -> Segment {
        match self {
            Stage::Validate => Segment::Validation,
            Stage::Test => Segment::Test,
        }
    }
}

fn job_path(stage: Stage, key: &str) -> String {
    format!("jobs/{}/{key}.json", stage.dir())
}

fn checkpoint_path(stage: Stage, key: &str, origin: Option<Month>) -> String {
    match origin {
        Some(o) => format!("checkpoints/{}/{key}/{o}.json", stage.dir()),
        None => format!("checkpoints/{}/{key}/last.json", stage.dir()),
    }
}

impl Context {
    pub fn new(cfg: ExperimentConfig, dataset: SupervisedDataset, store: Store) -> Result<Self, CliError> {
        let split = cfg.split();
        let windows = expanding_windows(&dataset, &split)?;
        Ok(Self {
            cfg,
            dataset,
            split,
            windows,
            store,
        })
    }

    fn hash(&self) -> &str {
        self.store.hash()
    }

    fn taus(&self) -> &[f64] {
        &self.cfg.grid.quantiles
    }

    fn windows_of(&self, seg: Segment) -> Vec<Window> {
        self.windows.iter().filter(|w| w.segment == seg).cloned().collect()
    }

    fn penalty(&self, lambda: f64) -> Penalty {
        Penalty {
            lambda,
            penalize_biases: self.cfg.grid.penalize_biases,
        }
    }

    fn naive(&self, tau: f64, seg: Segment) -> Result<ForecastSeries, CliError> {
        Ok(naive_forecasts(&self.dataset, &self.windows_of(seg), tau)?)
    }

    // ---- complexity ----

    pub fn complexity(&self) -> Result<Vec<ComplexityArtifact>, CliError> {
        let grid = self.cfg.hyper_grid();
        let archs = grid.architectures(self.dataset.num_features())?;
        let reference = self.cfg.reference_architecture(self.dataset.num_features())?;
        let candidates: Vec<Candidate> = archs
            .iter()
            .flat_map(|a| {
                grid.lambdas.iter().map(|&l| Candidate {
                    arch: a.clone(),
                    penalty: self.penalty(l),
                })
            })
            .collect();
        let train = self.cfg.train_config();
        let mut out = Vec::new();
        for &tau in self.taus() {
            let label = tau_label(tau);
            let id = format!("complexity/{label}");
            let rel = format!("{id}.json");
            if self.store.is_done(&id) {
                out.push(self.store.read_json(&rel)?);
                continue;
            }
            info!("complexity index at {label}: {} candidates", candidates.len());
            let loss = LossSpec::pinball(tau)?;
            let table = complexity_records(&self.dataset, self.split.t1, &candidates, reference.as_ref(), &loss, &train)?;
            let mapping = map_complexity_grid(&table.records, &grid_points())?;
            let mut csv = Vec::new();
            write_records_csv(&mut csv, &table.records, &mapping)?;
            self.store.write(&format!("{id}.csv"), &csv)?;
            let artifact = ComplexityArtifact {
                config_hash: self.hash().to_string(),
                tau,
                reference: table.reference,
                var0_max: table.var0_max,
                records: table.records,
                mapping,
            };
            self.store.write_json(&rel, &artifact)?;
            self.store.record(
                &id,
                JobRecord {
                    status: JobStatus::Done,
                    artifact: rel,
                    error: None,
                },
            )?;
            out.push(artifact);
        }
        Ok(out)
    }

    /// Rows evaluated at every quantile. On the complexity grid these are
    /// the grid points (0.0 being the benchmark); on the raw grid, every
    /// configuration.
    fn plans(&self) -> Result<Vec<Plan>, CliError> {
        match self.cfg.grid.profile {
            GridProfile::Complexity => {
                let tables = self.complexity()?;
                Ok(tables
                    .iter()
                    .map(|t| {
                        t.mapping
                            .iter()
                            .map(|a| {
                                let config = (a.grid_point != 0.0).then(|| {
                                    let rec = &t.records[a.record];
                                    HyperConfig {
                                        arch: rec.arch.clone(),
                                        penalty: self.penalty(rec.lambda),
                                        loss: LossSpec::Pinball { tau: t.tau },
                                    }
                                });
                                (row_label(a.grid_point), config)
                            })
                            .collect()
                    })
                    .collect())
            }
            GridProfile::Table1 => {
                let mut grid = self.cfg.hyper_grid();
                self.taus()
                    .iter()
                    .map(|&tau| {
                        grid.losses = self.cfg.losses_for(tau);
                        let configs = grid.configs(self.dataset.num_features(), self.cfg.grid.penalize_biases)?;
                        Ok(configs.into_iter().map(|c| (c.key(), Some(c))).collect())
                    })
                    .collect()
            }
        }
    }

    // ---- jobs ----

    fn run_jobs(&self, stage: Stage, configs: &[HyperConfig]) -> Result<(), CliError> {
        let mut seen = BTreeSet::new();
        let todo: Vec<&HyperConfig> = configs
            .iter()
            .filter(|c| seen.insert(c.key()))
            .filter(|c| !self.store.is_done(&format!("{}/{}", stage.dir(), c.key())))
            .collect();
        info!("{} stage: {} jobs, {} to run", stage.dir(), seen.len(), todo.len());
        todo.par_iter().try_for_each(|c| self.run_job(stage, c))
    }

    fn run_job(&self, stage: Stage, config: &HyperConfig) -> Result<(), CliError> {
        let key = config.key();
        let id = format!("{}/{key}", stage.dir());
        let result = match stage {
            Stage::Validate => self.fit_windows(stage, config, &self.windows_of(Segment::Validation), None),
            Stage::Test => self.test_forecasts(config),
        };
        let (forecasts, error) = match result {
            Ok(f) => (Some(f), None),
            Err(e) => {
                warn!("job {id} failed: {e}");
                (None, Some(e.to_string()))
            }
        };
        let status = if error.is_none() { JobStatus::Done } else { JobStatus::Failed };
        let rel = job_path(stage, &key);
        self.store.write_json(
            &rel,
            &JobArtifact {
                config_hash: self.hash().to_string(),
                key,
                config: config.clone(),
                forecasts,
                error: error.clone(),
            },
        )?;
        self.store.record(
            &id,
            JobRecord {
                status,
                artifact: rel,
                error,
            },
        )
    }

    /// Runs the recursion over `windows`, saving checkpoints per policy.
    fn fit_windows(
        &self,
        stage: Stage,
        config: &HyperConfig,
        windows: &[Window],
        warm: Option<Checkpoint>,
    ) -> Result<ForecastSeries, CliError> {
        let train = self.cfg.train_config();
        let job = Job {
            dataset: &self.dataset,
            arch: &config.arch,
            penalty: &config.penalty,
            loss: &config.loss,
            config: &train,
        };
        let key = config.key();
        let policy = self.cfg.output.checkpoints;
        let mut io_error = None;
        let (series, last) = job.run(windows, warm, |w, cp| {
            if policy == CheckpointPolicy::All {
                if let Err(e) = self.save_checkpoint(&checkpoint_path(stage, &key, Some(w.origin)), cp) {
                    io_error = Some(e);
                }
            }
            Ok(())
        })?;
        if let Some(e) = io_error {
            return Err(e);
        }
        if let (CheckpointPolicy::Last, Some(cp)) = (policy, &last) {
            self.save_checkpoint(&checkpoint_path(stage, &key, None), cp)?;
        }
        Ok(series)
    }

    fn save_checkpoint(&self, rel: &str, cp: &Checkpoint) -> Result<(), CliError> {
        self.store.write(rel, cp.to_json()?.as_bytes())
    }

    /// Continues the recursion through the test segment, from the stored
    /// end-of-validation checkpoint when one is available and otherwise by
    /// replaying the validation windows.
    fn test_forecasts(&self, config: &HyperConfig) -> Result<ForecastSeries, CliError> {
        let key = config.key();
        let val = self.windows_of(Segment::Validation);
        let last_origin = val.last().map(|w| w.origin);
        let stored = [checkpoint_path(Stage::Validate, &key, None), checkpoint_path(Stage::Validate, &key, last_origin)]
            .into_iter()
            .filter(|rel| self.store.exists(rel))
            .find_map(|rel| {
                let text = std::fs::read_to_string(self.store.path(&rel)).ok()?;
                Checkpoint::from_json(&text).ok()
            })
            .filter(|cp| Some(cp.origin) == last_origin && cp.arch == config.arch && cp.penalty == config.penalty && cp.loss == config.loss);
        let warm = match stored {
            Some(cp) => Some(cp),
            None => {
                info!("{key}: replaying validation windows");
                let train = self.cfg.train_config();
                let job = Job {
                    dataset: &self.dataset,
                    arch: &config.arch,
                    penalty: &config.penalty,
                    loss: &config.loss,
                    config: &train,
                };
                job.run(&val, None, |_, _| Ok(()))?.1
            }
        };
        self.fit_windows(Stage::Test, config, &self.windows_of(Segment::Test), warm)
    }

    fn artifact(&self, stage: Stage, key: &str) -> Result<JobArtifact, CliError> {
        let a: JobArtifact = self.store.read_json(&job_path(stage, key))?;
        if a.config_hash != self.hash() {
            return Err(CliError::Config(format!("artifact {} belongs to config {}", job_path(stage, key), a.config_hash)));
        }
        Ok(a)
    }

    // ---- stages ----

    pub fn validate(&self) -> Result<Vec<SelectionArtifact>, CliError> {
        let plans = self.plans()?;
        let configs: Vec<HyperConfig> = plans.iter().flatten().filter_map(|(_, c)| c.clone()).collect();
        self.run_jobs(Stage::Validate, &configs)?;
        let mut out = Vec::new();
        for (&tau, plan) in self.taus().iter().zip(&plans) {
            let sel = self.select(tau, plan)?;
            self.store.write_json(&format!("selection/{}.json", tau_label(tau)), &sel)?;
            out.push(sel);
        }
        Ok(out)
    }

    fn select(&self, tau: f64, plan: &Plan) -> Result<SelectionArtifact, CliError> {
        let loss = LossSpec::pinball(tau)?;
        let outcomes: Vec<(String, Option<HyperConfig>, JobOutcome)> = plan
            .iter()
            .map(|(row, c)| {
                let outcome = match c {
                    None => JobOutcome::Forecasts(self.naive(tau, Segment::Validation)?),
                    Some(c) => self.artifact(Stage::Validate, &c.key())?.outcome(),
                };
                Ok((row.clone(), c.clone(), outcome))
            })
            .collect::<Result<_, CliError>>()?;
        let ledger = outcomes
            .iter()
            .map(|(row, c, o)| {
                let (validation, error) = match o {
                    JobOutcome::Forecasts(f) => (Some(validation_score(f, &loss)?), None),
                    JobOutcome::Failed(e) => (None, Some(e.clone())),
                };
                Ok(LedgerRow {
                    row: row.clone(),
                    config: c.clone(),
                    validation,
                    error,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let (row, selected, score) = match self.cfg.grid.profile {
            GridProfile::Complexity => {
                let points: Vec<(f64, JobOutcome)> = outcomes
                    .iter()
                    .map(|(row, _, o)| (row.parse::<f64>().expect("grid label"), o.clone()))
                    .collect();
                let s = select_complexity(&points, tau)?;
                (outcomes[s.index].0.clone(), outcomes[s.index].1.clone(), s.score)
            }
            GridProfile::Table1 => {
                let configs: Vec<HyperConfig> = outcomes.iter().filter_map(|(_, c, _)| c.clone()).collect();
                let map: BTreeMap<String, JobOutcome> =
                    outcomes.iter().map(|(_, c, o)| (c.as_ref().expect("raw grid row").key(), o.clone())).collect();
                let s = select_hyperparams(&configs, &map, tau)?;
                (s.best.key(), Some(s.best), s.score)
            }
        };
        info!("{}: selected {row} with validation loss {score:.6}", tau_label(tau));
        Ok(SelectionArtifact {
            config_hash: self.hash().to_string(),
            tau,
            row,
            selected,
            score,
            ledger,
        })
    }

    /// Test-segment forecasts. On the complexity grid every grid point is
    /// carried into the test segment (that is what the table reports); on
    /// the raw grid only the selected configuration is.
    pub fn test(&self) -> Result<(), CliError> {
        let selections = self.validate()?;
        let configs: Vec<HyperConfig> = match self.cfg.grid.profile {
            GridProfile::Complexity => self.plans()?.into_iter().flatten().filter_map(|(_, c)| c).collect(),
            GridProfile::Table1 => selections.into_iter().filter_map(|s| s.selected).collect(),
        };
        self.run_jobs(Stage::Test, &configs)
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.store.failures()
    }

    // ---- reports ----

    fn selections(&self, missing: &mut Vec<String>) -> Vec<SelectionArtifact> {
        self.taus()
            .iter()
            .filter_map(|&tau| {
                let rel = format!("selection/{}.json", tau_label(tau));
                match self.store.read_json::<SelectionArtifact>(&rel) {
                    Ok(s) if s.config_hash == self.hash() => Some(s),
                    _ => {
                        missing.push(rel);
                        None
                    }
                }
            })
            .collect()
    }

    /// Forecasts of `config` on `stage`'s segment: `None` for a failed job,
    /// an entry in `missing` if the job never ran.
    fn forecasts(&self, stage: Stage, config: Option<&HyperConfig>, tau: f64, missing: &mut Vec<String>) -> Result<Option<ForecastSeries>, CliError> {
        match config {
            None => Ok(Some(self.naive(tau, stage.segment())?)),
            Some(c) => {
                let rel = job_path(stage, &c.key());
                if !self.store.exists(&rel) {
                    missing.push(rel);
                    return Ok(None);
                }
                Ok(self.artifact(stage, &c.key())?.forecasts)
            }
        }
    }

    fn check_missing(missing: Vec<String>) -> Result<(), CliError> {
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::Missing(missing))
        }
    }

    /// Loss tables for the validation and test segments.
    pub fn report_table(&self) -> Result<Vec<String>, CliError> {
        let mut missing = Vec::new();
        let plans: Vec<Plan> = match self.cfg.grid.profile {
            GridProfile::Complexity => self.read_plans(&mut missing),
            GridProfile::Table1 => self
                .selections(&mut missing)
                .into_iter()
                .map(|s| vec![("selected".to_string(), s.selected)])
                .collect(),
        };
        Self::check_missing(std::mem::take(&mut missing))?;
        // same row labels at every quantile, configs differ per quantile
        let labels: Vec<String> = plans[0].iter().map(|(l, _)| l.clone()).collect();
        let eval = self.cfg.eval.eval_config();
        let mut written = Vec::new();
        for stage in [Stage::Validate, Stage::Test] {
            let naive: Vec<ForecastSeries> = self
                .taus()
                .iter()
                .map(|&t| self.naive(t, stage.segment()))
                .collect::<Result<_, _>>()?;
            let mut table_rows = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                let mut cells = Vec::new();
                for (&tau, plan) in self.taus().iter().zip(&plans) {
                    cells.push(self.forecasts(stage, plan[i].1.as_ref(), tau, &mut missing)?);
                }
                table_rows.push((label.clone(), cells));
            }
            Self::check_missing(std::mem::take(&mut missing))?;
            let table = build_table(self.taus(), &naive, &table_rows, stage.segment(), self.split.horizon, &eval)?;
            let stem = format!("reports/table_{}", stage.segment());
            let mut csv = Vec::new();
            table.write_csv(&mut csv, self.hash())?;
            self.store.write(&format!("{stem}.csv"), &csv)?;
            self.store.write(&format!("{stem}.json"), table.to_json(self.hash())?.as_bytes())?;
            written.push(format!("{stem}.csv"));
            written.push(format!("{stem}.json"));
        }
        Ok(written)
    }

    /// Plans rebuilt from stored complexity mappings, without training.
    fn read_plans(&self, missing: &mut Vec<String>) -> Vec<Plan> {
        self.taus()
            .iter()
            .filter_map(|&tau| {
                let rel = format!("complexity/{}.json", tau_label(tau));
                match self.store.read_json::<ComplexityArtifact>(&rel) {
                    Ok(t) if t.config_hash == self.hash() => Some(
                        t.mapping
                            .iter()
                            .map(|a| {
                                let config = (a.grid_point != 0.0).then(|| HyperConfig {
                                    arch: t.records[a.record].arch.clone(),
                                    penalty: self.penalty(t.records[a.record].lambda),
                                    loss: LossSpec::Pinball { tau },
                                });
                                (row_label(a.grid_point), config)
                            })
                            .collect(),
                    ),
                    _ => {
                        missing.push(rel);
                        None
                    }
                }
            })
            .collect()
    }

    /// Out-of-sample quantile paths of the selected model at every quantile.
    pub fn report_fanchart(&self, sort_quantiles: bool) -> Result<Vec<String>, CliError> {
        let mut missing = Vec::new();
        let selections = self.selections(&mut missing);
        Self::check_missing(std::mem::take(&mut missing))?;
        let mut series = Vec::new();
        for s in &selections {
            let mut path = ForecastSeries::default();
            for stage in [Stage::Validate, Stage::Test] {
                match self.forecasts(stage, s.selected.as_ref(), s.tau, &mut missing)? {
                    Some(f) => path.extend(f),
                    None if missing.is_empty() => {
                        return Err(CliError::Job(format!("selected job {} at {} has no forecasts", s.row, tau_label(s.tau))))
                    }
                    None => {}
                }
            }
            series.push(path);
        }
        Self::check_missing(missing)?;
        let mut csv = Vec::new();
        write_fanchart_csv(&mut csv, self.taus(), &series, sort_quantiles, self.hash())?;
        let rel = "reports/fanchart.csv".to_string();
        self.store.write(&rel, &csv)?;
        Ok(vec![rel])
    }

    /// One line per grid configuration and quantile with its validation loss.
    pub fn report_ledger(&self) -> Result<Vec<String>, CliError> {
        let mut missing = Vec::new();
        let selections = self.selections(&mut missing);
        Self::check_missing(missing)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "config_hash", "tau", "row", "key", "depth", "widths", "alpha", "lambda", "loss", "validation", "selected", "status",
            "error",
        ];
        w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        for s in &selections {
            for l in &s.ledger {
                let (key, depth, widths, alpha, lambda, loss) = match &l.config {
                    Some(c) => (
                        c.key(),
                        c.arch.depth().to_string(),
                        c.arch.widths.iter().map(usize::to_string).collect::<Vec<_>>().join("x"),
                        c.arch.alpha().map_or(String::new(), |a| a.to_string()),
                        c.penalty.lambda.to_string(),
                        c.loss.label(),
                    ),
                    None => ("naive".into(), String::new(), String::new(), String::new(), String::new(), String::new()),
                };
                w.write_record([
                    self.hash(),
                    &s.tau.to_string(),
                    &l.row,
                    &key,
                    &depth,
                    &widths,
                    &alpha,
                    &lambda,
                    &loss,
                    &l.validation.map_or("NA".into(), |v| v.to_string()),
                    if l.row == s.row { "true" } else { "false" },
                    if l.error.is_none() { "done" } else { "failed" },
                    l.error.as_deref().unwrap_or(""),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let rel = "reports/ledger.csv".to_string();
        self.store.write(&rel, &bytes)?;
        Ok(vec![rel])
    }
}

//! Fitting a network on one training window and the expanding-window
//! recursion that refits it at every forecast origin.

use std::fmt;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataio::{expanding_windows, Month, Scaler, Segment, SplitSpec, SupervisedDataset, Window};
use crate::error::{Error, Result};
use crate::loss::{empirical_quantile, LossSpec, Penalty, TrainingData};
use crate::net::{backward_trace, forward, forward_trace, init_params, Architecture, ParamSet, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BatchSize;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"full\" or a positive integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<BatchSize, E> {
                if v == "full" {
                    Ok(BatchSize::Full)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<BatchSize, E> {
                if v == 0 {
                    return Err(E::invalid_value(de::Unexpected::Unsigned(v), &self));
                }
                Ok(BatchSize::Size(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<BatchSize, E> {
                if v <= 0 {
                    return Err(E::invalid_value(de::Unexpected::Signed(v), &self));
                }
                Ok(BatchSize::Size(v as usize))
            }
        }
        d.deserialize_any(V)
    }
}

/// Step-size profile within one call to [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from the base rate to zero over the call.
    #[default]
    Cosine,
}

impl Schedule {
    fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs for a cold start.
    pub epochs_initial: usize,
    /// Epochs when continuing from the previous origin's checkpoint.
    pub epochs_subsequent: usize,
    pub learning_rate: f64,
    /// `None` picks full batch for the linear model and 64 otherwise.
    pub batch_size: Option<BatchSize>,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Learning-rate halvings allowed when the objective blows up.
    pub max_retries: usize,
    /// Blow-up threshold relative to the objective at the start of the call.
    pub divergence_factor: f64,
    /// Finish every call by solving exactly for the (unpenalized) intercept
    /// with all other parameters held fixed.
    pub exact_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_initial: 500,
            epochs_subsequent: 100,
            learning_rate: 0.05,
            batch_size: None,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            schedule: Schedule::Cosine,
            seed: 0,
            max_retries: 3,
            divergence_factor: 10.0,
            exact_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs_initial == 0 || self.epochs_subsequent == 0 {
            return bad("epoch counts must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.divergence_factor <= 1.0 {
            return bad(format!("divergence factor {} must exceed 1", self.divergence_factor));
        }
        if self.batch_size == Some(BatchSize::Size(0)) {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }

    pub fn batch_for(&self, arch: &Architecture) -> BatchSize {
        self.batch_size.unwrap_or(if arch.depth() == 0 {
            BatchSize::Full
        } else {
            BatchSize::Size(64)
        })
    }
}

/// Parameters fitted at one origin plus everything needed to continue from
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub arch: Architecture,
    pub penalty: Penalty,
    pub loss: LossSpec,
    pub origin: Month,
    pub epoch_count: usize,
    /// Objective on the training window at the returned parameters.
    pub objective: f64,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    checkpoint: Checkpoint,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: "quantrisk-checkpoint".into(),
            version: CHECKPOINT_FORMAT_VERSION,
            checkpoint: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format != "quantrisk-checkpoint" {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                file.version
            )));
        }
        let cp = file.checkpoint;
        cp.arch.validate()?;
        cp.params.check_shapes(&cp.arch)?;
        Ok(cp)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffle seed for one origin. Depends only on the master seed and the date.
pub fn stream_seed(seed: u64, origin: Month) -> u64 {
    let month_key = (origin.year() as i64 * 12 + origin.month() as i64 - 1) as u64;
    splitmix64(seed ^ splitmix64(month_key))
}

fn intercept_for(loss: &LossSpec, residuals: &[f64]) -> Result<f64> {
    match loss {
        LossSpec::Pinball { tau } => empirical_quantile(residuals, *tau),
        LossSpec::Mse => Ok(residuals.iter().sum::<f64>() / residuals.len() as f64),
    }
}

struct Evaluator<'a> {
    data: &'a TrainingData,
    arch: &'a Architecture,
    loss: &'a LossSpec,
    penalty: &'a Penalty,
    trace: Trace,
}

impl Evaluator<'_> {
    fn objective(&mut self, params: &ParamSet) -> f64 {
        let mut total = 0.0;
        for (x, &y) in self.data.features.iter().zip(&self.data.targets) {
            total += self.loss.value(y, forward_trace(self.arch, params, x, &mut self.trace));
        }
        total / self.data.len() as f64 + self.penalty.value(params)
    }

    /// Mean data-loss gradient over `rows`.
    fn gradient(&mut self, params: &ParamSet, rows: &[usize], grad: &mut ParamSet) {
        grad.fill(0.0);
        let scale = 1.0 / rows.len() as f64;
        for &i in rows {
            let x = &self.data.features[i];
            let q = forward_trace(self.arch, params, x, &mut self.trace);
            let g = self.loss.grad(self.data.targets[i], q);
            if g != 0.0 {
                backward_trace(self.arch, params, x, &self.trace, g * scale, grad);
            }
        }
    }
}

/// Per-coordinate optimizer state. The penalty enters through an exact
/// proximal step, so very large penalties stay stable.
struct OptState {
    kind: Optimizer,
    momentum: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    fn new(kind: Optimizer, momentum: f64, n: usize) -> Self {
        Self {
            kind,
            momentum,
            m: vec![0.0; n],
            v: if kind == Optimizer::Adam { vec![0.0; n] } else { Vec::new() },
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet, grad: &ParamSet, eta: f64, penalty: &Penalty) {
        self.t += 1;
        let shrink = 2.0 * eta * penalty.lambda;
        let coords = params.coords_mut().zip(grad.coords());
        match self.kind {
            Optimizer::Sgd => {
                for ((kind, p), (_, g)) in coords {
                    let s = if penalty.applies_to(kind) { shrink } else { 0.0 };
                    *p = (*p - eta * g) / (1.0 + s);
                }
            }
            Optimizer::SgdMomentum => {
                for (j, ((kind, p), (_, g))) in coords.enumerate() {
                    self.m[j] = self.momentum * self.m[j] + g;
                    let s = if penalty.applies_to(kind) { shrink } else { 0.0 };
                    *p = (*p - eta * self.m[j]) / (1.0 + s);
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                for (j, ((kind, p), (_, g))) in coords.enumerate() {
                    self.m[j] = BETA1 * self.m[j] + (1.0 - BETA1) * g;
                    self.v[j] = BETA2 * self.v[j] + (1.0 - BETA2) * g * g;
                    let scale = (self.v[j] / c2).sqrt() + ADAM_EPS;
                    // prox of the penalty in the diagonal metric `scale`
                    let s = if penalty.applies_to(kind) { shrink / scale } else { 0.0 };
                    *p = (*p - eta * (self.m[j] / c1) / scale) / (1.0 + s);
                }
            }
        }
    }
}

enum Blowup {
    Diverged { epoch: usize, value: f64, start: f64 },
    NonFinite { epoch: usize },
}

struct Run {
    params: ParamSet,
    objective: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    eval: &mut Evaluator,
    start: &ParamSet,
    epochs: usize,
    lr: f64,
    opt: Optimizer,
    batch: usize,
    config: &TrainConfig,
    origin: Month,
) -> std::result::Result<Run, Blowup> {
    let n = eval.data.len();
    let start_obj = eval.objective(start);
    if !start_obj.is_finite() {
        return Err(Blowup::NonFinite { epoch: 0 });
    }
    let mut best = Run {
        params: start.clone(),
        objective: start_obj,
    };
    let mut params = start.clone();
    let mut grad = start.clone();
    let mut state = OptState::new(opt, config.momentum, params.num_params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, origin));
    let per_epoch = n.div_ceil(batch);
    let total = epochs * per_epoch;
    let mut step = 0;
    for epoch in 1..=epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for rows in order.chunks(batch) {
            eval.gradient(&params, rows, &mut grad);
            let eta = config.schedule.rate(lr, step, total);
            state.step(&mut params, &grad, eta, eval.penalty);
            step += 1;
        }
        let obj = eval.objective(&params);
        if !obj.is_finite() {
            return Err(Blowup::NonFinite { epoch });
        }
        if obj > config.divergence_factor * start_obj && obj > start_obj {
            return Err(Blowup::Diverged {
                epoch,
                value: obj,
                start: start_obj,
            });
        }
        if obj < best.objective {
            best.objective = obj;
            best.params.clone_from(&params);
        }
    }
    Ok(best)
}

/// Fits `arch` on one training window.
///
/// A cold start draws fresh parameters from `config.seed`, sets the intercept
/// to the target quantile and runs `epochs_initial` epochs. With `warm` the
/// run continues from its parameters for `epochs_subsequent` epochs. The
/// returned parameters are the best iterate seen, so the objective never
/// ends above its starting value.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    data: &TrainingData,
    arch: &Architecture,
    penalty: &Penalty,
    loss: &LossSpec,
    config: &TrainConfig,
    origin: Month,
    warm: Option<&Checkpoint>,
) -> Result<Checkpoint> {
    arch.validate()?;
    loss.validate()?;
    penalty.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training window"));
    }
    if data.num_features() != arch.input_dim {
        return Err(Error::Dimension {
            expected: arch.input_dim,
            found: data.num_features(),
        });
    }
    let (start, epochs) = match warm {
        Some(cp) => {
            if cp.arch != *arch {
                return Err(Error::InvalidArgument(format!(
                    "warm start from {} does not match {}",
                    cp.arch, arch
                )));
            }
            cp.params.check_shapes(arch)?;
            (cp.params.clone(), config.epochs_subsequent)
        }
        None => {
            let mut p = init_params(arch, config.seed);
            p.intercept = intercept_for(loss, &data.targets)?;
            (p, config.epochs_initial)
        }
    };
    let opt = config.optimizer;
    let batch = match config.batch_for(arch) {
        BatchSize::Full => data.len(),
        BatchSize::Size(b) => b.min(data.len()),
    };
    let mut eval = Evaluator {
        data,
        arch,
        loss,
        penalty,
        trace: Trace::default(),
    };
    let mut lr = config.learning_rate;
    let mut attempt = 0;
    let run = loop {
        match run_epochs(&mut eval, &start, epochs, lr, opt, batch, config, origin) {
            Ok(run) => break run,
            Err(Blowup::NonFinite { epoch }) => {
                return Err(Error::Diverged {
                    origin,
                    detail: format!("non-finite objective at epoch {epoch} with learning rate {lr}; lower the learning rate"),
                });
            }
            Err(Blowup::Diverged { epoch, value, start }) => {
                if attempt == config.max_retries {
                    return Err(Error::Diverged {
                        origin,
                        detail: format!(
                            "objective {value:.6e} exceeded {}x its starting value {start:.6e} at epoch {epoch} \
                             after {attempt} learning-rate halvings (last rate {lr})",
                            config.divergence_factor
                        ),
                    });
                }
                warn!("{origin}: objective blew up at epoch {epoch}, halving learning rate to {}", lr / 2.0);
                lr /= 2.0;
                attempt += 1;
            }
        }
    };
    let mut params = run.params;
    let mut objective = run.objective;
    if config.exact_intercept {
        let c = params.intercept;
        let residuals: Vec<f64> = data
            .features
            .iter()
            .zip(&data.targets)
            .map(|(x, &y)| y - (forward_trace(arch, &params, x, &mut eval.trace) - c))
            .collect();
        // c is unpenalized and the residual quantile (or mean) minimizes the
        // data term over c, so any rise in the objective is rounding. Taking
        // it unconditionally pins ties on flat stretches to the type 1 point.
        params.intercept = intercept_for(loss, &residuals)?;
        objective = eval.objective(&params);
    }
    debug!("{origin}: {arch} fitted in {epochs} epochs, objective {objective:.6e}");
    Ok(Checkpoint {
        params,
        arch: arch.clone(),
        penalty: *penalty,
        loss: *loss,
        origin,
        epoch_count: epochs,
        objective,
    })
}

/// Standardized training window at `origin`: rows whose target is dated on
/// or before `origin`, scaled with statistics from origins up to `origin`.
/// Columns dropped by the scaler are kept as zeros so the input width stays
/// fixed across origins.
pub fn window_data(dataset: &SupervisedDataset, origin: Month) -> Result<(Scaler, TrainingData)> {
    let scaler = Scaler::fit(dataset, origin)?;
    let rows = dataset.training_rows(origin);
    let features = rows.iter().map(|&r| scaler.transform_row(dataset.feature_row(r))).collect();
    let targets = rows.iter().map(|&r| dataset.target(r).expect("training rows have targets")).collect();
    Ok((scaler, TrainingData::new(features, targets)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub origin: Month,
    pub target_date: Month,
    pub prediction: f64,
    pub realization: Option<f64>,
    pub segment: Segment,
}

/// Out-of-sample forecasts, one per origin, in origin order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub points: Vec<ForecastPoint>,
}

impl ForecastSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment(&self, segment: Segment) -> impl Iterator<Item = &ForecastPoint> {
        self.points.iter().filter(move |p| p.segment == segment)
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.prediction).collect()
    }

    pub fn extend(&mut self, other: ForecastSeries) {
        self.points.extend(other.points);
    }
}

/// Fixed ingredients of one recursion job.
#[derive(Debug, Clone, Copy)]
pub struct Job<'a> {
    pub dataset: &'a SupervisedDataset,
    pub arch: &'a Architecture,
    pub penalty: &'a Penalty,
    pub loss: &'a LossSpec,
    pub config: &'a TrainConfig,
}

impl Job<'_> {
    fn check(&self) -> Result<()> {
        if self.arch.input_dim != self.dataset.num_features() {
            return Err(Error::Dimension {
                expected: self.dataset.num_features(),
                found: self.arch.input_dim,
            });
        }
        Ok(())
    }

    /// Fits at every window in order, each warm-started from the previous
    /// checkpoint (or from `warm` for the first). `on_step` sees every
    /// checkpoint as it is produced. Returns the forecasts and the last
    /// checkpoint.
    pub fn run(
        &self,
        windows: &[Window],
        warm: Option<Checkpoint>,
        mut on_step: impl FnMut(&Window, &Checkpoint) -> Result<()>,
    ) -> Result<(ForecastSeries, Option<Checkpoint>)> {
        self.check()?;
        let mut last = warm;
        let mut series = ForecastSeries::default();
        for w in windows {
            let at = |e: Error| match e {
                e @ Error::Diverged { .. } => e,
                e => Error::AtOrigin {
                    origin: w.origin,
                    source: Box::new(e),
                },
            };
            let (scaler, data) = window_data(self.dataset, w.origin).map_err(at)?;
            let cp = fit(&data, self.arch, self.penalty, self.loss, self.config, w.origin, last.as_ref()).map_err(at)?;
            let x = scaler.transform_row(self.dataset.feature_row(w.origin_row));
            let prediction = forward(self.arch, &cp.params, &x).map_err(at)?;
            on_step(w, &cp)?;
            series.points.push(ForecastPoint {
                origin: w.origin,
                target_date: w.target_date,
                prediction,
                realization: self.dataset.target(w.origin_row),
                segment: w.segment,
            });
            last = Some(cp);
        }
        Ok((series, last))
    }

    /// Cold fit on the initial window ending at `t1`.
    pub fn fit_initial(&self, t1: Month) -> Result<Checkpoint> {
        self.check()?;
        let (_, data) = window_data(self.dataset, t1)?;
        fit(&data, self.arch, self.penalty, self.loss, self.config, t1, None)
    }
}

/// Expanding-window forecasts over the whole out-of-sample span `(t1, t3]`.
pub fn recursive_forecast(
    dataset: &SupervisedDataset,
    split: &SplitSpec,
    arch: &Architecture,
    penalty: &Penalty,
    loss: &LossSpec,
    config: &TrainConfig,
) -> Result<ForecastSeries> {
    let windows = expanding_windows(dataset, split)?;
    let job = Job {
        dataset,
        arch,
        penalty,
        loss,
        config,
    };
    Ok(job.run(&windows, None, |_, _| Ok(()))?.0)
}

/// In-sample fitted values of a checkpoint over its own training window,
/// dated by target date.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSeries {
    pub target_dates: Vec<Month>,
    pub values: Vec<f64>,
}

pub fn fitted_insample(checkpoint: &Checkpoint, dataset: &SupervisedDataset) -> Result<FittedSeries> {
    let scaler = Scaler::fit(dataset, checkpoint.origin)?;
    let rows = dataset.training_rows(checkpoint.origin);
    let mut values = Vec::with_capacity(rows.len());
    for &r in &rows {
        values.push(forward(
            &checkpoint.arch,
            &checkpoint.params,
            &scaler.transform_row(dataset.feature_row(r)),
        )?);
    }
    Ok(FittedSeries {
        target_dates: rows.iter().map(|&r| dataset.target_date(r)).collect(),
        values,
    })
}

/// Spread of forecasts across seeds at one origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSpread {
    pub origin: Month,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Repeats the recursion under several master seeds and summarizes the
/// dispersion of the forecasts at each origin.
pub fn seed_dispersion(
    dataset: &SupervisedDataset,
    split: &SplitSpec,
    arch: &Architecture,
    penalty: &Penalty,
    loss: &LossSpec,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<SeedSpread>> {
    use rayon::prelude::*;

    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let runs: Vec<ForecastSeries> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            recursive_forecast(dataset, split, arch, penalty, loss, &cfg)
        })
        .collect::<Result<_>>()?;
    let n = seeds.len() as f64;
    Ok((0..runs[0].len())
        .map(|i| {
            let v: Vec<f64> = runs.iter().map(|r| r.points[i].prediction).collect();
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SeedSpread {
                origin: runs[0].points[i].origin,
                mean,
                sd,
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

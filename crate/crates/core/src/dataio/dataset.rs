use log::warn;

use super::transform::{build_target, PredictorTransform, TargetSpec};
use super::{Month, SeriesPanel};
use crate::error::{Error, Result};

/// Rows pair the predictors observed at origin `t` with the target `y[t+h]`.
///
/// Every panel month is kept as an origin; targets beyond the end of the
/// panel (or inside the transform burn-in) are `None` and never enter a
/// training window.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    dates: Vec<Month>,
    names: Vec<String>,
    features: Vec<Option<f64>>,
    targets: Vec<Option<f64>>,
    horizon: usize,
}

impl SupervisedDataset {
    pub fn new(
        dates: Vec<Month>,
        names: Vec<String>,
        features: Vec<Option<f64>>,
        targets: Vec<Option<f64>>,
        horizon: usize,
    ) -> Result<Self> {
        if dates.is_empty() || names.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if features.len() != dates.len() * names.len() {
            return Err(Error::Dimension {
                expected: dates.len() * names.len(),
                found: features.len(),
            });
        }
        if targets.len() != dates.len() {
            return Err(Error::Dimension {
                expected: dates.len(),
                found: targets.len(),
            });
        }
        if dates.windows(2).any(|w| w[1].months_since(w[0]) != 1) {
            return Err(Error::Structure("origin dates must be consecutive months".into()));
        }
        if features.iter().chain(&targets).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains inf or nan".into()));
        }
        Ok(Self {
            dates,
            names,
            features,
            targets,
            horizon,
        })
    }

    /// Convenience constructor for fully observed data.
    pub fn from_dense(
        start: Month,
        names: Vec<String>,
        features: &[Vec<f64>],
        targets: &[f64],
        horizon: usize,
    ) -> Result<Self> {
        let n = features.len();
        let dates = (0..n as i32).map(|i| start.add_months(i)).collect();
        let flat = features.iter().flatten().map(|&v| Some(v)).collect();
        Self::new(dates, names, flat, targets.iter().map(|&v| Some(v)).collect(), horizon)
    }

    pub fn dates(&self) -> &[Month] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_features(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn feature(&self, row: usize, col: usize) -> Option<f64> {
        self.features[row * self.names.len() + col]
    }

    pub fn feature_row(&self, row: usize) -> &[Option<f64>] {
        let k = self.names.len();
        &self.features[row * k..(row + 1) * k]
    }

    pub fn target(&self, row: usize) -> Option<f64> {
        self.targets[row]
    }

    pub fn targets(&self) -> &[Option<f64>] {
        &self.targets
    }

    /// Month that the target of `row` refers to.
    pub fn target_date(&self, row: usize) -> Month {
        self.dates[row].add_months(self.horizon as i32)
    }

    pub fn row_of(&self, date: Month) -> Option<usize> {
        let offset = date.months_since(self.dates[0]);
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Rows usable for training at forecast origin `origin`: target dated at
    /// or before `origin` and observed.
    pub fn training_rows(&self, origin: Month) -> Vec<usize> {
        (0..self.len())
            .take_while(|&r| self.target_date(r) <= origin)
            .filter(|&r| self.targets[r].is_some())
            .collect()
    }

    /// Returns a copy with `f` applied to every feature and target dated
    /// strictly after `after`. Used to check for look-ahead.
    pub fn perturb_after(&self, after: Month, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        let k = self.names.len();
        for r in 0..self.len() {
            if self.dates[r] > after {
                for v in out.features[r * k..(r + 1) * k].iter_mut().flatten() {
                    *v = f(*v);
                }
            }
            if self.target_date(r) > after {
                if let Some(v) = out.targets[r].as_mut() {
                    *v = f(*v);
                }
            }
        }
        out
    }
}

/// Builds the supervised dataset from a panel. `transforms` holds one entry
/// per panel column.
pub fn build_dataset(
    panel: &SeriesPanel,
    transforms: &[PredictorTransform],
    target: &TargetSpec,
) -> Result<SupervisedDataset> {
    if transforms.len() != panel.num_series() {
        return Err(Error::Dimension {
            expected: panel.num_series(),
            found: transforms.len(),
        });
    }
    let k = panel.num_series();
    let n = panel.len();
    let mut features = vec![None; n * k];
    for (j, tr) in transforms.iter().enumerate() {
        let col = tr.apply(&panel.column(j)).map_err(|t| Error::NonPositiveLog {
            series: panel.names()[j].clone(),
            date: panel.dates()[t],
            value: panel.get(t, j).unwrap_or(f64::NAN),
        })?;
        for (t, v) in col.into_iter().enumerate() {
            features[t * k + j] = v;
        }
    }
    let y = build_target(panel, target)?;
    let h = target.horizon;
    let targets = (0..n).map(|t| y.values.get(t + h).copied().flatten()).collect();
    SupervisedDataset::new(panel.dates().to_vec(), panel.names().to_vec(), features, targets, h)
}

/// Column statistics computed from origins up to `window_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub window_end: Month,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// `false` for columns dropped for lack of variation in the window.
    pub active: Vec<bool>,
    pub dropped: Vec<String>,
}

impl Scaler {
    pub fn fit(dataset: &SupervisedDataset, window_end: Month) -> Result<Self> {
        let first = dataset.dates()[0];
        if window_end < first {
            return Err(Error::InvalidArgument(format!(
                "window end {window_end} precedes the first origin {first}"
            )));
        }
        let rows = (window_end.months_since(first) as usize + 1).min(dataset.len());
        let k = dataset.num_features();
        let mut means = vec![0.0; k];
        let mut sds = vec![0.0; k];
        let mut active = vec![false; k];
        let mut dropped = Vec::new();
        for j in 0..k {
            let obs: Vec<f64> = (0..rows).filter_map(|r| dataset.feature(r, j)).collect();
            if obs.len() >= 2 {
                let n = obs.len() as f64;
                let mean = obs.iter().sum::<f64>() / n;
                let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                means[j] = mean;
                if var > 0.0 {
                    sds[j] = var.sqrt();
                    active[j] = true;
                    continue;
                }
            }
            warn!(
                "dropping {:?}: no variation in the window ending {window_end}",
                dataset.names()[j]
            );
            dropped.push(dataset.names()[j].clone());
        }
        Ok(Self {
            window_end,
            means,
            sds,
            active,
            dropped,
        })
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Standardized full-width row. Missing values are imputed with the window
    /// mean and dropped columns are zero, so both contribute 0.
    pub fn transform_row(&self, raw: &[Option<f64>]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, v)| match (self.active[j], v) {
                (true, Some(x)) => (x - self.means[j]) / self.sds[j],
                _ => 0.0,
            })
            .collect()
    }

    /// Like [`Scaler::transform_row`] but without the dropped columns.
    pub fn transform_row_compact(&self, raw: &[Option<f64>]) -> Vec<f64> {
        self.transform_row(raw)
            .into_iter()
            .zip(&self.active)
            .filter_map(|(v, a)| a.then_some(v))
            .collect()
    }
}

/// Standardized features for origins up to `window_end`, with dropped columns
/// removed.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub scaler: Scaler,
    pub dates: Vec<Month>,
    pub names: Vec<String>,
    /// Row-major, `dates.len() x names.len()`.
    pub matrix: Vec<f64>,
}

pub fn standardize(dataset: &SupervisedDataset, window_end: Month) -> Result<Standardized> {
    if dataset.row_of(window_end).is_none() {
        return Err(Error::InvalidArgument(format!(
            "window end {window_end} outside the dataset"
        )));
    }
    let scaler = Scaler::fit(dataset, window_end)?;
    let rows = dataset.row_of(window_end).unwrap() + 1;
    let names = dataset
        .names()
        .iter()
        .zip(&scaler.active)
        .filter(|(_, a)| **a)
        .map(|(n, _)| n.clone())
        .collect();
    let matrix = (0..rows)
        .flat_map(|r| scaler.transform_row_compact(dataset.feature_row(r)))
        .collect();
    Ok(Standardized {
        dates: dataset.dates()[..rows].to_vec(),
        names,
        matrix,
        scaler,
    })
}

//! Scoring against the recursive unconditional-quantile benchmark: loss
//! differentials, Newey-West standard errors and significance tiers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataio::{Segment, SupervisedDataset, Window};
use crate::error::{Error, Result};
use crate::loss::{empirical_quantile, LossSpec};
use crate::train::{ForecastPoint, ForecastSeries};

/// Presentation multiplier applied to normalized losses.
pub const DEFAULT_SCALE: f64 = 100.0;

/// Constant forecast from the history available at the origin.
pub fn naive_quantile(history: &[f64], tau: f64) -> Result<f64> {
    empirical_quantile(history, tau)
}

/// Benchmark forecasts: at each origin, the type 1 empirical quantile of the
/// targets dated on or before that origin.
pub fn naive_forecasts(dataset: &SupervisedDataset, windows: &[Window], tau: f64) -> Result<ForecastSeries> {
    let mut points = Vec::with_capacity(windows.len());
    for w in windows {
        let history: Vec<f64> = dataset
            .training_rows(w.origin)
            .into_iter()
            .filter_map(|r| dataset.target(r))
            .collect();
        points.push(ForecastPoint {
            origin: w.origin,
            target_date: w.target_date,
            prediction: naive_quantile(&history, tau)?,
            realization: dataset.target(w.origin_row),
            segment: w.segment,
        });
    }
    Ok(ForecastSeries { points })
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: a, found: b });
    }
    Ok(())
}

/// `scale * mean pinball / (tau (1 - tau))`.
pub fn normalized_mean_loss(forecasts: &[f64], realizations: &[f64], tau: f64, scale: f64) -> Result<f64> {
    check_aligned(forecasts.len(), realizations.len())?;
    if forecasts.is_empty() {
        return Err(Error::Empty("forecast series"));
    }
    let loss = LossSpec::pinball(tau)?;
    let mean = forecasts
        .iter()
        .zip(realizations)
        .map(|(&q, &y)| loss.value(y, q))
        .sum::<f64>()
        / forecasts.len() as f64;
    Ok(scale * mean / (tau * (1.0 - tau)))
}

/// Per-origin normalized loss of the model minus that of the benchmark.
pub fn loss_differential(model: &[f64], naive: &[f64], realizations: &[f64], tau: f64, scale: f64) -> Result<Vec<f64>> {
    check_aligned(model.len(), naive.len())?;
    check_aligned(model.len(), realizations.len())?;
    let loss = LossSpec::pinball(tau)?;
    let k = scale / (tau * (1.0 - tau));
    Ok(model
        .iter()
        .zip(naive)
        .zip(realizations)
        .map(|((&m, &b), &y)| k * (loss.value(y, m) - loss.value(y, b)))
        .collect())
}

/// Lag truncation for the long-run variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `h - 1`, the overlap of `h`-step forecast errors.
    HorizonMinusOne,
    /// `floor(4 (n / 100)^(2/9))`.
    Auto,
    Fixed(usize),
}

impl Bandwidth {
    pub fn lags(self, n: usize, horizon: usize) -> usize {
        match self {
            Bandwidth::HorizonMinusOne => horizon.saturating_sub(1),
            Bandwidth::Auto => auto_bandwidth(n),
            Bandwidth::Fixed(l) => l,
        }
    }
}

pub fn auto_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Newey-West standard error of the sample mean with Bartlett weights:
/// `sqrt((g0 + 2 sum_{l=1..L} (1 - l/(L+1)) g_l) / n)`, autocovariances
/// divided by `n`.
pub fn hac_se(series: &[f64], lags: usize) -> Result<f64> {
    let n = series.len();
    if n <= lags {
        return Err(Error::InvalidArgument(format!("{n} observations cannot support {lags} lags")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let gamma = |l: usize| c[l..].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut var = gamma(0);
    for l in 1..=lags {
        var += 2.0 * (1.0 - l as f64 / (lags + 1) as f64) * gamma(l);
    }
    Ok(var.max(0.0).sqrt() / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Light,
    Medium,
    Dark,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Light => "light",
            Tier::Medium => "medium",
            Tier::Dark => "dark",
        }
    }
}

/// Shading by `|mean_diff / se|`: below 1.28 light, below 1.65 medium, else
/// dark. A zero standard error is dark unless the difference is zero too.
pub fn tier(mean_diff: f64, se: f64) -> Tier {
    let ratio = if se > 0.0 {
        mean_diff.abs() / se
    } else if mean_diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    if ratio < 1.28 {
        Tier::Light
    } else if ratio < 1.65 {
        Tier::Medium
    } else {
        Tier::Dark
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Outperform,
    Underperform,
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub mean_diff: f64,
    pub hac_se: f64,
    pub tier: Tier,
    pub sign: Sign,
}

impl EvalCell {
    pub fn from_differential(d: &[f64], lags: usize) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Empty("loss differential"));
        }
        let mean_diff = d.iter().sum::<f64>() / d.len() as f64;
        let hac_se = hac_se(d, lags)?;
        let sign = if mean_diff < 0.0 {
            Sign::Outperform
        } else if mean_diff > 0.0 {
            Sign::Underperform
        } else {
            Sign::Even
        };
        Ok(Self {
            mean_diff,
            hac_se,
            tier: tier(mean_diff, hac_se),
            sign,
        })
    }
}

/// Predictions and realizations of one series on one segment, matched to the
/// benchmark by origin.
fn aligned(model: &ForecastSeries, naive: &ForecastSeries, segment: Segment) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m: Vec<&ForecastPoint> = model.segment(segment).filter(|p| p.realization.is_some()).collect();
    let b: Vec<&ForecastPoint> = naive.segment(segment).filter(|p| p.realization.is_some()).collect();
    check_aligned(b.len(), m.len())?;
    if let Some((x, y)) = m.iter().zip(&b).find(|(x, y)| x.origin != y.origin) {
        return Err(Error::InvalidArgument(format!(
            "model origin {} does not line up with benchmark origin {}",
            x.origin, y.origin
        )));
    }
    if m.is_empty() {
        return Err(Error::Empty("evaluation segment"));
    }
    Ok((
        m.iter().map(|p| p.prediction).collect(),
        b.iter().map(|p| p.prediction).collect(),
        m.iter().map(|p| p.realization.expect("filtered")).collect(),
    ))
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bandwidth: Bandwidth,
    pub scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::HorizonMinusOne,
            scale: DEFAULT_SCALE,
        }
    }
}

/// Normalized benchmark losses (top row) and model-minus-benchmark cells for
/// every complexity row and quantile. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub segment: Segment,
    pub taus: Vec<f64>,
    pub naive_row: Vec<Option<f64>>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Complexity grid point such as `0.3`, or a name for other row kinds.
    pub label: String,
    pub cells: Vec<Option<EvalCell>>,
}

/// Builds a loss table. `naive[j]` is the benchmark at `taus[j]`;
/// `rows[i].1[j]` holds the model forecasts for row `i` at `taus[j]`, if any.
pub fn build_table(
    taus: &[f64],
    naive: &[ForecastSeries],
    rows: &[(String, Vec<Option<ForecastSeries>>)],
    segment: Segment,
    horizon: usize,
    config: &EvalConfig,
) -> Result<LossTable> {
    check_aligned(taus.len(), naive.len())?;
    let mut naive_row = Vec::with_capacity(taus.len());
    for (&tau, b) in taus.iter().zip(naive) {
        let (_, q, y) = aligned(b, b, segment)?;
        naive_row.push(Some(normalized_mean_loss(&q, &y, tau, config.scale)?));
    }
    let mut out_rows = Vec::with_capacity(rows.len());
    for (label, per_tau) in rows {
        check_aligned(taus.len(), per_tau.len())?;
        let mut cells = Vec::with_capacity(taus.len());
        for ((&tau, b), model) in taus.iter().zip(naive).zip(per_tau) {
            let cell = match model {
                None => None,
                Some(m) => {
                    let (mq, bq, y) = aligned(m, b, segment)?;
                    let d = loss_differential(&mq, &bq, &y, tau, config.scale)?;
                    Some(EvalCell::from_differential(&d, config.bandwidth.lags(d.len(), horizon))?)
                }
            };
            cells.push(cell);
        }
        out_rows.push(TableRow {
            label: label.clone(),
            cells,
        });
    }
    Ok(LossTable {
        segment,
        taus: taus.to_vec(),
        naive_row,
        rows: out_rows,
    })
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("writing table: {e}"))
}

impl LossTable {
    /// Long format, one line per cell: `row,tau,value,hac_se,tier,sign`. The
    /// benchmark row is labelled `naive` and carries absolute losses; holes
    /// are written as `NA`.
    pub fn write_csv<W: Write>(&self, out: W, config_hash: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["config_hash", "segment", "row", "tau", "value", "hac_se", "tier", "sign"])
            .map_err(io_err)?;
        let seg = self.segment.as_str();
        for (tau, v) in self.taus.iter().zip(&self.naive_row) {
            let value = v.map_or("NA".to_string(), |v| v.to_string());
            w.write_record([config_hash, seg, "naive", &tau.to_string(), &value, "", "", ""])
                .map_err(io_err)?;
        }
        for row in &self.rows {
            let label = &row.label;
            for (tau, cell) in self.taus.iter().zip(&row.cells) {
                let tau = tau.to_string();
                match cell {
                    Some(c) => {
                        let sign = serde_json::to_value(c.sign).map_err(io_err)?;
                        w.write_record([
                            config_hash,
                            seg,
                            label,
                            &tau,
                            &c.mean_diff.to_string(),
                            &c.hac_se.to_string(),
                            c.tier.as_str(),
                            sign.as_str().unwrap_or_default(),
                        ])
                        .map_err(io_err)?
                    }
                    None => w
                        .write_record([config_hash, seg, label, &tau, "NA", "NA", "NA", "NA"])
                        .map_err(io_err)?,
                }
            }
        }
        w.flush().map_err(io_err)
    }

    /// JSON document with the benchmark row and a grid of `{diff, se, tier}`
    /// cells (`null` for holes).
    pub fn to_json(&self, config_hash: &str) -> Result<String> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "label": r.label,
                    "cells": r.cells.iter().map(|c| c.map(|c| serde_json::json!({
                        "diff": c.mean_diff,
                        "se": c.hac_se,
                        "tier": c.tier,
                        "sign": c.sign,
                    }))).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "config_hash": config_hash,
            "segment": self.segment,
            "taus": self.taus,
            "naive": self.naive_row,
            "rows": rows,
        });
        serde_json::to_string_pretty(&doc).map_err(io_err)
    }
}

/// Fan-chart data: one line per origin with the realization and one column
/// per quantile. With `sort_quantiles` each line's quantiles are sorted so
/// they never cross; this is cosmetic and only affects the export.
pub fn write_fanchart_csv<W: Write>(
    out: W,
    taus: &[f64],
    series: &[ForecastSeries],
    sort_quantiles: bool,
    config_hash: &str,
) -> Result<()> {
    check_aligned(taus.len(), series.len())?;
    let n = series.first().map_or(0, ForecastSeries::len);
    for s in series {
        check_aligned(n, s.len())?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "config_hash".to_string(),
        "origin".into(),
        "target_date".into(),
        "segment".into(),
        "realized".into(),
    ];
    header.extend(taus.iter().map(|t| format!("q{:02}", (t * 100.0).round() as u32)));
    w.write_record(&header).map_err(io_err)?;
    for i in 0..n {
        let p0 = &series[0].points[i];
        let mut qs: Vec<f64> = Vec::with_capacity(taus.len());
        for s in series {
            let p = &s.points[i];
            if p.origin != p0.origin {
                return Err(Error::InvalidArgument(format!("fan chart origins {} and {} differ", p.origin, p0.origin)));
            }
            qs.push(p.prediction);
        }
        if sort_quantiles {
            qs.sort_by(f64::total_cmp);
        }
        let mut rec = vec![
            config_hash.to_string(),
            p0.origin.to_string(),
            p0.target_date.to_string(),
            p0.segment.to_string(),
            p0.realization.map_or("NA".into(), |v| v.to_string()),
        ];
        rec.extend(qs.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

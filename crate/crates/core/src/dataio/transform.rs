//! Series transformations for forecast targets and predictors.

use serde::{Deserialize, Serialize};

use super::{Month, SeriesPanel};
use crate::error::{Error, Result};

/// How the raw target series is turned into the forecast target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetTransform {
    /// `v[s] - v[s-1]`
    Difference,
    /// `v[s] - v[s-12]`
    YoyDifference,
    /// `100 * (ln v[s] - ln v[s-1])`
    LogDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub variable: String,
    pub transform: TargetTransform,
    pub horizon: usize,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// A dated series with explicit missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    pub dates: Vec<Month>,
    pub values: Vec<Option<f64>>,
}

/// Target value dated at the month it refers to: entry `s` holds `y[s]`.
pub fn build_target(panel: &SeriesPanel, spec: &TargetSpec) -> Result<DatedSeries> {
    spec.validate()?;
    let col = panel.column_index(&spec.variable)?;
    let raw = panel.column(col);
    let dates = panel.dates();
    let lag = match spec.transform {
        TargetTransform::Difference | TargetTransform::LogDifference => 1,
        TargetTransform::YoyDifference => 12,
    };
    let mut values = vec![None; raw.len()];
    for s in lag..raw.len() {
        let (Some(now), Some(before)) = (raw[s], raw[s - lag]) else {
            continue;
        };
        values[s] = Some(match spec.transform {
            TargetTransform::Difference | TargetTransform::YoyDifference => now - before,
            TargetTransform::LogDifference => {
                for (v, d) in [(now, dates[s]), (before, dates[s - lag])] {
                    if v <= 0.0 {
                        return Err(Error::NonPositiveLog {
                            series: spec.variable.clone(),
                            date: d,
                            value: v,
                        });
                    }
                }
                100.0 * (now.ln() - before.ln())
            }
        });
    }
    Ok(DatedSeries {
        dates: dates.to_vec(),
        values,
    })
}

/// Stationarity transforms for predictors, numbered as in FRED-MD's
/// transform-code convention (1..=7).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorTransform {
    Level,
    Diff,
    Diff2,
    Log,
    LogDiff,
    LogDiff2,
    PctChangeDiff,
}

impl PredictorTransform {
    pub fn from_code(code: i32) -> Option<Self> {
        use PredictorTransform::*;
        Some(match code {
            1 => Level,
            2 => Diff,
            3 => Diff2,
            4 => Log,
            5 => LogDiff,
            6 => LogDiff2,
            7 => PctChangeDiff,
            _ => return None,
        })
    }

    pub fn code(self) -> i32 {
        self as i32 + 1
    }

    fn uses_log(self) -> bool {
        matches!(self, Self::Log | Self::LogDiff | Self::LogDiff2)
    }

    /// Applies the transform. Entries depending on missing or pre-sample
    /// values come back as `None`. Entry `t` only reads inputs at `<= t`.
    pub fn apply(self, values: &[Option<f64>]) -> std::result::Result<Vec<Option<f64>>, usize> {
        let base: Vec<Option<f64>> = if self.uses_log() {
            values
                .iter()
                .enumerate()
                .map(|(t, v)| match v {
                    Some(x) if *x <= 0.0 => Err(t),
                    Some(x) => Ok(Some(x.ln())),
                    None => Ok(None),
                })
                .collect::<std::result::Result<_, _>>()?
        } else {
            values.to_vec()
        };
        let diff = |s: &[Option<f64>]| -> Vec<Option<f64>> {
            (0..s.len())
                .map(|t| match (t.checked_sub(1).and_then(|p| s[p]), s[t]) {
                    (Some(prev), Some(now)) => Some(now - prev),
                    _ => None,
                })
                .collect()
        };
        Ok(match self {
            Self::Level | Self::Log => base,
            Self::Diff | Self::LogDiff => diff(&base),
            Self::Diff2 | Self::LogDiff2 => diff(&diff(&base)),
            Self::PctChangeDiff => {
                let growth: Vec<Option<f64>> = (0..base.len())
                    .map(|t| match (t.checked_sub(1).and_then(|p| base[p]), base[t]) {
                        (Some(prev), Some(now)) if prev != 0.0 => Some(now / prev - 1.0),
                        _ => None,
                    })
                    .collect();
                diff(&growth)
            }
        })
    }
}

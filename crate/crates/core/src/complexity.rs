//! Complexity index: in-sample forecast variance of a fitted model relative
//! to that of an unpenalized reference model.
//!
//! `r = 0` means flat forecasts and `r = 1` means as variable as the
//! reference. A grid of target values of `r` is mapped to representative
//! (architecture, penalty) pairs, reducing hyperparameter search to one
//! dimension.

use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Month, SupervisedDataset};
use crate::error::{Error, Result};
use crate::loss::{LossSpec, Penalty};
use crate::net::Architecture;
use crate::train::{fitted_insample, Job, TrainConfig};

/// Population variance of a fitted series.
pub fn forecast_variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("fitted series"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

/// Target grid `0.0, 0.1, ..., 1.0`.
pub fn complexity_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// `{0} U {10^-3, 10^-2.9, ..., 10^2}`.
pub fn complexity_lambdas() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..=50).map(|i| 10f64.powf(-3.0 + i as f64 / 10.0)))
        .collect()
}

/// One (architecture, penalty) pair considered for the mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub arch: Architecture,
    pub penalty: Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRecord {
    pub arch: Architecture,
    pub lambda: f64,
    pub var0: f64,
    /// Index after clamping to `[0, 1]`.
    pub r: f64,
    /// `var0 / var0_max` before clamping.
    pub raw_r: f64,
}

/// Fits on the initial window ending at `t1` and returns the in-sample
/// forecast variance.
pub fn insample_variance(
    dataset: &SupervisedDataset,
    t1: Month,
    candidate: &Candidate,
    loss: &LossSpec,
    config: &TrainConfig,
) -> Result<f64> {
    let job = Job {
        dataset,
        arch: &candidate.arch,
        penalty: &candidate.penalty,
        loss,
        config,
    };
    let cp = job.fit_initial(t1)?;
    forecast_variance(&fitted_insample(&cp, dataset)?.values)
}

/// Ratio clamped to `[0, 1]`, logging clamps larger than `1e-3`.
pub fn index_from(var0: f64, var0_max: f64) -> Result<(f64, f64)> {
    if var0_max.is_nan() || var0_max <= 0.0 {
        return Err(Error::Degenerate(format!(
            "reference forecast variance is {var0_max}; the target has no fitted variation"
        )));
    }
    let raw = var0 / var0_max;
    if !(-1e-3..=1.0 + 1e-3).contains(&raw) {
        warn!("complexity ratio {raw:.6} outside [0, 1] before clamping");
    }
    Ok((raw.clamp(0.0, 1.0), raw))
}

/// Records for a candidate set together with the common denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTable {
    pub reference: Architecture,
    pub var0_max: f64,
    pub records: Vec<ComplexityRecord>,
}

/// Complexity index of every candidate against the common denominator
/// `Var0(reference, 0)`. Without an explicit `reference`, the unpenalized
/// candidate with the largest in-sample variance is used, so `r <= 1` holds
/// for every unpenalized candidate. Candidates are fitted in parallel.
pub fn complexity_records(
    dataset: &SupervisedDataset,
    t1: Month,
    candidates: &[Candidate],
    reference: Option<&Architecture>,
    loss: &LossSpec,
    config: &TrainConfig,
) -> Result<ComplexityTable> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let var0s: Vec<f64> = candidates
        .par_iter()
        .map(|c| insample_variance(dataset, t1, c, loss, config))
        .collect::<Result<_>>()?;
    let unpenalized = |c: &Candidate| c.penalty.lambda == 0.0;
    let (reference, var0_max) = match reference {
        Some(arch) => {
            let known = candidates.iter().position(|c| c.arch == *arch && unpenalized(c));
            let v = match known {
                Some(i) => var0s[i],
                None => {
                    let c = Candidate {
                        arch: arch.clone(),
                        penalty: Penalty {
                            lambda: 0.0,
                            penalize_biases: candidates[0].penalty.penalize_biases,
                        },
                    };
                    insample_variance(dataset, t1, &c, loss, config)?
                }
            };
            (arch.clone(), v)
        }
        None => {
            let (i, _) = candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| unpenalized(c))
                .max_by(|(i, _), (j, _)| var0s[*i].total_cmp(&var0s[*j]).then(j.cmp(i)))
                .ok_or_else(|| Error::InvalidArgument("candidate set has no unpenalized model to normalize by".into()))?;
            (candidates[i].arch.clone(), var0s[i])
        }
    };
    info!("complexity reference {reference} with Var0 {var0_max:.6e}");
    report_denominator_spread(candidates, &var0s, var0_max);
    let records = candidates
        .iter()
        .zip(&var0s)
        .map(|(c, &v)| {
            let (r, raw_r) = index_from(v, var0_max)?;
            Ok(ComplexityRecord {
                arch: c.arch.clone(),
                lambda: c.penalty.lambda,
                var0: v,
                r,
                raw_r,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComplexityTable {
        reference,
        var0_max,
        records,
    })
}

fn report_denominator_spread(candidates: &[Candidate], var0s: &[f64], var0_max: f64) {
    for (c, v) in candidates.iter().zip(var0s) {
        if c.penalty.lambda == 0.0 {
            let rel = (v - var0_max).abs() / var0_max;
            if rel > 0.1 {
                info!("Var0({}, 0) = {v:.6e} differs from the reference {var0_max:.6e} by {:.1}%", c.arch, 100.0 * rel);
            }
        }
    }
}

/// Representative of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAssignment {
    pub grid_point: f64,
    /// Index into the record list.
    pub record: usize,
}

/// Nearest record to each grid point. Ties go to the record whose unclamped
/// ratio is closer, then the smaller depth, then the larger penalty, then the
/// earlier record.
pub fn map_complexity_grid(records: &[ComplexityRecord], grid: &[f64]) -> Result<Vec<GridAssignment>> {
    if records.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    const TIE: f64 = 1e-12;
    Ok(grid
        .iter()
        .map(|&g| {
            let mut best = 0;
            for (i, rec) in records.iter().enumerate().skip(1) {
                let cur = &records[best];
                let (d_new, d_cur) = ((rec.r - g).abs(), (cur.r - g).abs());
                let (raw_new, raw_cur) = ((rec.raw_r - g).abs(), (cur.raw_r - g).abs());
                let better = if (d_new - d_cur).abs() > TIE {
                    d_new < d_cur
                } else if (raw_new - raw_cur).abs() > TIE {
                    raw_new < raw_cur
                } else if rec.arch.depth() != cur.arch.depth() {
                    rec.arch.depth() < cur.arch.depth()
                } else {
                    rec.lambda > cur.lambda
                };
                if better {
                    best = i;
                }
            }
            GridAssignment {
                grid_point: g,
                record: best,
            }
        })
        .collect())
}

fn widths_label(arch: &Architecture) -> String {
    arch.widths.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// CSV with one row per record: `depth,widths,alpha,lambda,var0,r,grid_assignment`.
/// `grid_assignment` lists the grid points the record represents, separated
/// by `;`.
pub fn write_records_csv<W: Write>(out: W, records: &[ComplexityRecord], assignments: &[GridAssignment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("writing complexity csv: {e}"));
    w.write_record(["depth", "widths", "alpha", "lambda", "var0", "r", "grid_assignment"])
        .map_err(csv_err)?;
    for (i, rec) in records.iter().enumerate() {
        let grid: Vec<String> = assignments
            .iter()
            .filter(|a| a.record == i)
            .map(|a| format!("{:.1}", a.grid_point))
            .collect();
        w.write_record([
            rec.arch.depth().to_string(),
            widths_label(&rec.arch),
            rec.arch.alpha().map(|a| a.to_string()).unwrap_or_default(),
            rec.lambda.to_string(),
            rec.var0.to_string(),
            rec.r.to_string(),
            grid.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("writing complexity csv: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(depth: usize, lambda: f64, r: f64) -> ComplexityRecord {
        let arch = if depth == 0 {
            Architecture::linear(2)
        } else {
            Architecture::new(2, vec![4; depth], 0.5).unwrap()
        };
        ComplexityRecord {
            arch,
            lambda,
            var0: r,
            r,
            raw_r: r,
        }
    }

    #[test]
    fn variance_examples() {
        assert_eq!(forecast_variance(&[3.0; 7]).unwrap(), 0.0);
        assert_eq!(forecast_variance(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(forecast_variance(&[]).is_err());
    }

    #[test]
    fn grids() {
        let g = complexity_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        let l = complexity_lambdas();
        assert_eq!(l.len(), 52);
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 1e-3).abs() < 1e-15);
        assert!((l[51] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn index_clamps_and_rejects_flat_reference() {
        assert_eq!(index_from(2.0, 1.0).unwrap(), (1.0, 2.0));
        assert_eq!(index_from(0.5, 2.0).unwrap().0, 0.25);
        assert!(matches!(index_from(0.0, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn nearest_record_per_grid_point() {
        let recs = vec![record(1, 1.0, 0.07), record(1, 0.5, 0.12), record(1, 0.1, 0.31)];
        let m = map_complexity_grid(&recs, &[0.0, 0.1, 0.2, 0.3]).unwrap();
        let picked: Vec<usize> = m.iter().map(|a| a.record).collect();
        assert_eq!(picked, vec![0, 1, 1, 2]);
    }

    #[test]
    fn ties_prefer_shallow_then_heavily_penalized() {
        let recs = vec![record(2, 10.0, 0.0), record(0, 1.0, 0.0), record(0, 5.0, 0.0), record(1, 100.0, 0.0)];
        let m = map_complexity_grid(&recs, &[0.0]).unwrap();
        assert_eq!(m[0].record, 2);
        assert!(map_complexity_grid(&[], &[0.0]).is_err());
    }

    #[test]
    fn clamped_records_lose_ties_to_exact_ones() {
        let mut over = record(0, 0.1, 1.0);
        over.raw_r = 1.2;
        let exact = record(2, 0.0, 1.0);
        let m = map_complexity_grid(&[over, exact], &[1.0]).unwrap();
        assert_eq!(m[0].record, 1);
    }

    #[test]
    fn csv_layout() {
        let recs = vec![record(0, 0.0, 1.0), record(2, 3.0, 0.0)];
        let m = map_complexity_grid(&recs, &complexity_grid()).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "depth,widths,alpha,lambda,var0,r,grid_assignment");
        assert_eq!(lines[1], "0,,,0,1,1,0.5;0.6;0.7;0.8;0.9;1.0");
        assert_eq!(lines[2], "2,4x4,0.5,3,0,0,0.0;0.1;0.2;0.3;0.4");
    }

    proptest! {
        #[test]
        fn variance_matches_two_pass(values in proptest::collection::vec(-1e3..1e3f64, 1..200)) {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let mut acc = 0.0;
            for v in &values {
                acc += (v - mean).powi(2);
            }
            let oracle = acc / n;
            let got = forecast_variance(&values).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-12 * oracle.max(1e-300));
        }

        #[test]
        fn mapping_is_total(rs in proptest::collection::vec(0.0..1.0f64, 1..30)) {
            let recs: Vec<_> = rs.iter().enumerate().map(|(i, &r)| record(i % 3, i as f64, r)).collect();
            let grid = complexity_grid();
            let m = map_complexity_grid(&recs, &grid).unwrap();
            prop_assert_eq!(m.len(), grid.len());
            for a in &m {
                let best = rs.iter().map(|r| (r - a.grid_point).abs()).fold(f64::INFINITY, f64::min);
                prop_assert!(((recs[a.record].r - a.grid_point).abs() - best).abs() < 1e-12);
            }
        }
    }
}

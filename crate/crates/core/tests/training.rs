mod common;

use common::*;
use quantrisk::dataio::{expanding_windows, Segment, SupervisedDataset};
use quantrisk::eval::naive_forecasts;
use quantrisk::loss::{empirical_quantile, LossSpec, Penalty, TrainingData};
use quantrisk::net::Architecture;
use quantrisk::train::{
    fit, fitted_insample, recursive_forecast, seed_dispersion, window_data, Checkpoint, Job, TrainConfig,
};
use rand_distr::{Distribution, StandardNormal};

/// Exact one-predictor quantile regression: some optimal line passes
/// through two sample points, so enumerate all pairs.
fn pairwise_oracle(x: &[f64], y: &[f64], tau: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if x[i] == x[j] {
                continue;
            }
            let b = (y[j] - y[i]) / (x[j] - x[i]);
            let a = y[i] - b * x[i];
            let q: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            best = best.min(mean_pinball(y, &q, tau));
        }
    }
    best
}

#[test]
fn single_predictor_fit_reaches_pairwise_optimum() {
    let mut r = rng(21);
    for tau in [0.25, 0.5, 0.9] {
        let x: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut r)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 1.0 - 2.0 * v + Distribution::<f64>::sample(&StandardNormal, &mut r))
            .collect();
        let oracle = pairwise_oracle(&x, &y, tau);
        let data = TrainingData::new(x.iter().map(|&v| vec![v]).collect(), y.clone()).unwrap();
        let loss = LossSpec::pinball(tau).unwrap();
        let cp = fit(
            &data,
            &Architecture::linear(1),
            &Penalty::new(0.0).unwrap(),
            &loss,
            &TrainConfig::default(),
            month("2000-01"),
            None,
        )
        .unwrap();
        assert!((cp.objective - oracle) / oracle < 1e-3, "tau {tau}: {} vs {oracle}", cp.objective);
        assert!(cp.objective >= oracle - 1e-12);
    }
}

fn ar1_dataset(n: usize) -> SupervisedDataset {
    let mut r = rng(22);
    let mut v = vec![0.0];
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut r);
        v.push(0.8 * v.last().unwrap() + e);
    }
    let x: Vec<Vec<f64>> = v[..n].iter().map(|&s| vec![s]).collect();
    SupervisedDataset::from_dense(month("1960-01"), vec!["lag".into()], &x, &v[1..], 1).unwrap()
}

#[test]
fn persistent_series_beats_unconditional_quantile() {
    let ds = ar1_dataset(300);
    let split = row_split(&ds, 120, 200);
    let loss = LossSpec::pinball(0.5).unwrap();
    let config = TrainConfig {
        epochs_subsequent: 30,
        ..Default::default()
    };
    let model = recursive_forecast(&ds, &split, &Architecture::linear(1), &Penalty::new(1e-3).unwrap(), &loss, &config)
        .unwrap();
    let naive = naive_forecasts(&ds, &expanding_windows(&ds, &split).unwrap(), 0.5).unwrap();
    let score = |s: &quantrisk::train::ForecastSeries| {
        let pts: Vec<_> = s.segment(Segment::Test).collect();
        pts.iter().map(|p| loss.value(p.realization.unwrap(), p.prediction)).sum::<f64>() / pts.len() as f64
    };
    assert!(score(&model) < 0.85 * score(&naive), "{} vs {}", score(&model), score(&naive));
}

#[test]
fn first_forecast_targets_the_month_after_t1() {
    let ds = ar1_dataset(80);
    let split = row_split(&ds, 40, 60);
    let config = TrainConfig {
        epochs_initial: 20,
        epochs_subsequent: 5,
        ..Default::default()
    };
    let s = recursive_forecast(&ds, &split, &Architecture::linear(1), &Penalty::new(0.0).unwrap(), &LossSpec::Mse, &config)
        .unwrap();
    assert_eq!(s.points[0].origin, split.t1);
    assert_eq!(s.points[0].target_date, split.t1.add_months(1));
    assert_eq!(s.points.last().unwrap().target_date, split.t3);
    assert!(s.points.iter().all(|p| (p.segment == Segment::Validation) == (p.target_date <= split.t2)));
}

#[test]
fn fitted_series_covers_the_initial_window() {
    let ds = heteroskedastic_dataset(23, 120);
    let split = row_split(&ds, 60, 90);
    let loss = LossSpec::pinball(0.9).unwrap();
    let config = TrainConfig::default();
    let arch = Architecture::new(7, vec![4], 0.5).unwrap();
    let job = Job {
        dataset: &ds,
        arch: &arch,
        penalty: &Penalty::new(1e6).unwrap(),
        loss: &loss,
        config: &config,
    };
    let cp = job.fit_initial(split.t1).unwrap();
    let fitted = fitted_insample(&cp, &ds).unwrap();
    let (_, data) = window_data(&ds, split.t1).unwrap();
    assert_eq!(fitted.values.len(), data.len());
    assert_eq!(fitted.target_dates[0], ds.dates()[0].add_months(1));
    assert_eq!(*fitted.target_dates.last().unwrap(), split.t1);
    // fully shrunk: flat at the in-window quantile
    let q = empirical_quantile(&data.targets, 0.9).unwrap();
    assert!(fitted.values.iter().all(|v| (v - q).abs() < 1e-3));
}

#[test]
fn recursion_is_deterministic_per_seed() {
    let ds = heteroskedastic_dataset(24, 100);
    let split = row_split(&ds, 50, 75);
    let arch = Architecture::new(7, vec![4], 0.5).unwrap();
    let loss = LossSpec::pinball(0.25).unwrap();
    let config = TrainConfig {
        epochs_initial: 50,
        epochs_subsequent: 10,
        ..Default::default()
    };
    let run = |seed| {
        let cfg = TrainConfig { seed, ..config.clone() };
        recursive_forecast(&ds, &split, &arch, &Penalty::new(0.01).unwrap(), &loss, &cfg).unwrap()
    };
    let a = run(1);
    let b = run(1);
    let c = run(2);
    let bits = |s: &quantrisk::train::ForecastSeries| s.predictions().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));

    let spread = seed_dispersion(&ds, &split, &arch, &Penalty::new(0.01).unwrap(), &loss, &config, &[1, 2, 3]).unwrap();
    assert_eq!(spread.len(), a.len());
    assert!(spread.iter().all(|s| s.min <= s.mean && s.mean <= s.max && s.sd >= 0.0));
    assert!(spread.iter().any(|s| s.sd > 0.0));
}

#[test]
fn resuming_from_a_serialized_checkpoint_is_seamless() {
    let ds = heteroskedastic_dataset(25, 100);
    let split = row_split(&ds, 50, 75);
    let arch = Architecture::new(7, vec![3, 3], 0.0).unwrap();
    let loss = LossSpec::pinball(0.5).unwrap();
    let config = TrainConfig {
        epochs_initial: 40,
        epochs_subsequent: 10,
        ..Default::default()
    };
    let penalty = Penalty::new(0.05).unwrap();
    let job = Job {
        dataset: &ds,
        arch: &arch,
        penalty: &penalty,
        loss: &loss,
        config: &config,
    };
    let windows = expanding_windows(&ds, &split).unwrap();
    let (whole, _) = job.run(&windows, None, |_, _| Ok(())).unwrap();
    let (mid, _) = windows.split_at(20);
    let (mut first, cp) = job.run(mid, None, |_, _| Ok(())).unwrap();
    let restored = Checkpoint::from_json(&cp.unwrap().to_json().unwrap()).unwrap();
    let (rest, _) = job.run(&windows[20..], Some(restored), |_, _| Ok(())).unwrap();
    first.extend(rest);
    assert_eq!(first, whole);
}

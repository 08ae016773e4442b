mod common;

use common::*;
use proptest::prelude::*;
use quantrisk::dataio::{expanding_windows, Segment};
use quantrisk::eval::{
    build_table, hac_se, loss_differential, naive_forecasts, EvalCell, EvalConfig, Sign, Tier,
};
use quantrisk::select::QUANTILES;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn iid_standard_error_matches_monte_carlo_spread() {
    let mut r = rng(41);
    let (reps, n) = (2000, 200);
    let mut means = Vec::with_capacity(reps);
    let mut ses = Vec::with_capacity(reps);
    for _ in 0..reps {
        let x: Vec<f64> = (0..n).map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        means.push(x.iter().sum::<f64>() / n as f64);
        ses.push(hac_se(&x, 4).unwrap());
    }
    let m = means.iter().sum::<f64>() / reps as f64;
    let spread = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let avg_se = ses.iter().sum::<f64>() / reps as f64;
    assert!((avg_se - spread).abs() < 0.1 * spread, "{avg_se} vs {spread}");
}

#[test]
fn benchmark_row_ignores_model_rows() {
    let ds = heteroskedastic_dataset(42, 150);
    let split = row_split(&ds, 60, 100);
    let windows = expanding_windows(&ds, &split).unwrap();
    let naive: Vec<_> = QUANTILES.iter().map(|&t| naive_forecasts(&ds, &windows, t).unwrap()).collect();
    let config = EvalConfig::default();
    let shifted = |delta: f64| {
        naive
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.points.iter_mut().for_each(|p| p.prediction += delta);
                Some(s)
            })
            .collect::<Vec<_>>()
    };
    let bare = build_table(&QUANTILES, &naive, &[], Segment::Test, 1, &config).unwrap();
    let table = build_table(
        &QUANTILES,
        &naive,
        &[("0.0".into(), naive.iter().cloned().map(Some).collect()), ("0.5".into(), shifted(0.3))],
        Segment::Test,
        1,
        &config,
    )
    .unwrap();
    assert_eq!(bare.naive_row, table.naive_row);
    for cell in table.rows[0].cells.iter().flatten() {
        assert_eq!((cell.mean_diff, cell.tier, cell.sign), (0.0, Tier::Light, Sign::Even));
    }
    assert!(table.rows[1].cells.iter().all(Option::is_some));
}

proptest! {
    #[test]
    fn swapping_model_and_benchmark_negates_the_differential(
        pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 3..40),
        tau in 0.05..0.95f64,
    ) {
        let (a, rest): (Vec<f64>, Vec<(f64, f64)>) = pts.into_iter().map(|(a, b, y)| (a, (b, y))).unzip();
        let (b, y): (Vec<f64>, Vec<f64>) = rest.into_iter().unzip();
        let d = loss_differential(&a, &b, &y, tau, 100.0).unwrap();
        let e = loss_differential(&b, &a, &y, tau, 100.0).unwrap();
        prop_assert!(d.iter().zip(&e).all(|(x, z)| x == &-z));
        let cd = EvalCell::from_differential(&d, 1).unwrap();
        let ce = EvalCell::from_differential(&e, 1).unwrap();
        prop_assert!((cd.mean_diff + ce.mean_diff).abs() < 1e-9);
        prop_assert!((cd.hac_se - ce.hac_se).abs() < 1e-9 * (1.0 + cd.hac_se));
        let flipped = match cd.sign {
            Sign::Outperform => Sign::Underperform,
            Sign::Underperform => Sign::Outperform,
            Sign::Even => Sign::Even,
        };
        prop_assert!(ce.sign == flipped || cd.mean_diff.abs() < 1e-9);
    }

    #[test]
    fn standard_error_is_shift_invariant(xs in prop::collection::vec(-10.0..10.0f64, 15..60), c in -100.0..100.0f64, lags in 0usize..5) {
        let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
        let a = hac_se(&xs, lags).unwrap();
        let b = hac_se(&shifted, lags).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a));
    }
}

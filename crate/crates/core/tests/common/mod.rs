//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exact linear quantile regression with intercept, solved as a linear
/// program by a dense tableau simplex with Bland's rule:
///
/// min sum tau u_i + (1 - tau) v_i  s.t.  X b + c + u - v = y,  u, v >= 0.
///
/// Returns the optimal mean pinball loss.
pub fn quantile_regression_lp(x: &[Vec<f64>], y: &[f64], tau: f64) -> f64 {
    let n = y.len();
    let p = x[0].len() + 1;
    // columns: b+ (p), b- (p), u (n), v (n), rhs
    let cols = 2 * p + 2 * n;
    let mut t = vec![vec![0.0; cols + 1]; n];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let sign = if y[i] >= 0.0 { 1.0 } else { -1.0 };
        for j in 0..p {
            let a = if j + 1 < p { x[i][j] } else { 1.0 };
            t[i][j] = sign * a;
            t[i][p + j] = -sign * a;
        }
        t[i][2 * p + i] = sign;
        t[i][2 * p + n + i] = -sign;
        t[i][cols] = sign * y[i];
        basis[i] = if sign > 0.0 { 2 * p + i } else { 2 * p + n + i };
    }
    let cost = |j: usize| -> f64 {
        if j < 2 * p {
            0.0
        } else if j < 2 * p + n {
            tau
        } else {
            1.0 - tau
        }
    };
    loop {
        let entering = (0..cols).find(|&j| {
            let r = cost(j) - (0..n).map(|i| cost(basis[i]) * t[i][j]).sum::<f64>();
            r < -1e-11
        });
        let Some(j) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if t[i][j] > 1e-11 {
                let ratio = t[i][cols] / t[i][j];
                leave = match leave {
                    Some((li, lr)) if ratio > lr + 1e-12 || (ratio > lr - 1e-12 && basis[i] > basis[li]) => {
                        Some((li, lr))
                    }
                    _ => Some((i, ratio)),
                };
            }
        }
        let (r, _) = leave.expect("quantile regression LP is bounded");
        let piv = t[r][j];
        t[r].iter_mut().for_each(|v| *v /= piv);
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[j] != 0.0 {
                let f = row[j];
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        basis[r] = j;
    }
    (0..n).map(|i| cost(basis[i]) * t[i][cols]).sum::<f64>() / n as f64
}

/// Mean pinball loss computed directly from its definition.
pub fn mean_pinball(y: &[f64], q: &[f64], tau: f64) -> f64 {
    y.iter()
        .zip(q)
        .map(|(&y, &q)| if y >= q { tau * (y - q) } else { (1.0 - tau) * (q - y) })
        .sum::<f64>()
        / y.len() as f64
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..k).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// `y = x1 + (1 + |x2|) e` with five pure-noise predictors. Row `t` pairs
/// `x_t` with the target dated `t + 1`.
pub fn heteroskedastic_dataset(seed: u64, n: usize) -> quantrisk::dataio::SupervisedDataset {
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, n, 7);
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let e: f64 = StandardNormal.sample(&mut r);
            row[0] + (1.0 + row[1].abs()) * e
        })
        .collect();
    let names = (1..=7).map(|i| format!("x{i}")).collect();
    quantrisk::dataio::SupervisedDataset::from_dense(month("1970-01"), names, &x, &y, 1).unwrap()
}

/// Splits a dense dataset by row counts: the initial window ends at row
/// `t1`, validation ends at row `t2`, and the test segment runs to the last
/// target.
pub fn row_split(ds: &quantrisk::dataio::SupervisedDataset, t1: usize, t2: usize) -> quantrisk::dataio::SplitSpec {
    let first = ds.dates()[0];
    quantrisk::dataio::SplitSpec {
        t1: first.add_months(t1 as i32),
        t2: first.add_months(t2 as i32),
        t3: ds.target_date(ds.len() - 1),
        horizon: ds.horizon(),
    }
}

pub fn month(s: &str) -> quantrisk::dataio::Month {
    s.parse().unwrap()
}

/// Central finite differences of the network output in every parameter.
pub fn numeric_gradient(
    arch: &quantrisk::net::Architecture,
    params: &quantrisk::net::ParamSet,
    x: &[f64],
    step: f64,
) -> Vec<f64> {
    let n = params.num_params();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let eval = |delta: f64| {
            let mut p = params.clone();
            let (_, v) = p.coords_mut().nth(j).unwrap();
            *v += delta;
            quantrisk::net::forward(arch, &p, x).unwrap()
        };
        out.push((eval(step) - eval(-step)) / (2.0 * step));
    }
    out
}

/// Random architecture with depth in 0..=2, per-layer widths in 1..=6 and a
/// slope from `{0, 0.5, 1}`.
pub fn random_architecture(rng: &mut ChaCha8Rng, input_dim: usize) -> quantrisk::net::Architecture {
    let depth = rng.random_range(0..3usize);
    if depth == 0 {
        return quantrisk::net::Architecture::linear(input_dim);
    }
    let widths = (0..depth).map(|_| rng.random_range(1..7usize)).collect();
    let alpha = [0.0, 0.5, 1.0][rng.random_range(0..3usize)];
    let arch = quantrisk::net::Architecture {
        input_dim,
        widths,
        alphas: vec![alpha; depth],
    };
    arch.validate().unwrap();
    arch
}

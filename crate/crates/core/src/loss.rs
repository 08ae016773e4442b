//! Data losses, the quadratic weight penalty, and the training objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward_trace, Architecture, ParamKind, ParamSet, Trace};

/// Loss used both for training and for scoring forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossSpec {
    Pinball { tau: f64 },
    Mse,
}

impl LossSpec {
    pub fn pinball(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(LossSpec::Pinball { tau })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Pinball { tau } => check_tau(*tau),
            LossSpec::Mse => Ok(()),
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            LossSpec::Pinball { tau } => Some(*tau),
            LossSpec::Mse => None,
        }
    }

    #[inline]
    pub fn value(&self, y: f64, q: f64) -> f64 {
        match *self {
            LossSpec::Pinball { tau } => pinball_unchecked(y, q, tau),
            LossSpec::Mse => mse(y, q),
        }
    }

    #[inline]
    pub fn grad(&self, y: f64, q: f64) -> f64 {
        match *self {
            LossSpec::Pinball { tau } => pinball_grad_unchecked(y, q, tau),
            LossSpec::Mse => mse_grad(y, q),
        }
    }

    /// Short label such as `q0.05` or `mse`.
    pub fn label(&self) -> String {
        match self {
            LossSpec::Pinball { tau } => format!("q{tau:.2}"),
            LossSpec::Mse => "mse".into(),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantile level {tau} outside (0, 1)")))
    }
}

#[inline]
fn pinball_unchecked(y: f64, q: f64, tau: f64) -> f64 {
    tau * (y - q).max(0.0) + (1.0 - tau) * (q - y).max(0.0)
}

#[inline]
fn pinball_grad_unchecked(y: f64, q: f64, tau: f64) -> f64 {
    if q > y {
        1.0 - tau
    } else if q < y {
        -tau
    } else {
        0.0
    }
}

/// `tau * max(y - q, 0) + (1 - tau) * max(q - y, 0)`.
pub fn pinball(y: f64, q: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_unchecked(y, q, tau))
}

/// Derivative of [`pinball`] in `q`, with 0 chosen at `q == y`.
pub fn pinball_grad(y: f64, q: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_grad_unchecked(y, q, tau))
}

#[inline]
pub fn mse(y: f64, q: f64) -> f64 {
    (y - q) * (y - q)
}

#[inline]
pub fn mse_grad(y: f64, q: f64) -> f64 {
    2.0 * (q - y)
}

/// Inverted-CDF (type 1) empirical quantile: the smallest sample value whose
/// empirical CDF reaches `tau`, i.e. the `ceil(n tau)`-th order statistic.
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if values.is_empty() {
        return Err(Error::Empty("sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against tau * n landing a hair above an integer
    let k = ((n as f64 * tau) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[k.min(n) - 1])
}

/// Which parameters the quadratic penalty acts on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalty {
    pub lambda: f64,
    /// Also shrink hidden-layer biases. The output intercept is never
    /// penalized.
    #[serde(default)]
    pub penalize_biases: bool,
}

impl Penalty {
    pub fn new(lambda: f64) -> Result<Self> {
        let p = Self {
            lambda,
            penalize_biases: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda >= 0.0 && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("penalty {} must be finite and >= 0", self.lambda)))
        }
    }

    #[inline]
    pub fn applies_to(&self, kind: ParamKind) -> bool {
        match kind {
            ParamKind::Weight | ParamKind::Output => true,
            ParamKind::Bias => self.penalize_biases,
            ParamKind::Intercept => false,
        }
    }

    pub fn value(&self, params: &ParamSet) -> f64 {
        self.lambda
            * params
                .coords()
                .filter(|(k, _)| self.applies_to(*k))
                .map(|(_, v)| v * v)
                .sum::<f64>()
    }

    /// Adds the penalty gradient `2 lambda theta` into `grad`.
    pub fn add_gradient(&self, params: &ParamSet, grad: &mut ParamSet) {
        for ((kind, v), (_, g)) in params.coords().zip(grad.coords_mut()) {
            if self.applies_to(kind) {
                *g += 2.0 * self.lambda * v;
            }
        }
    }
}

/// `lambda * (sum_i ||W_i||_F^2 + ||gamma||^2)`; biases and intercept are
/// excluded.
pub fn l2_penalty(params: &ParamSet, lambda: f64) -> Result<f64> {
    Ok(Penalty::new(lambda)?.value(params))
}

/// Gradient of [`l2_penalty`].
pub fn l2_penalty_grad(params: &ParamSet, lambda: f64) -> Result<ParamSet> {
    let pen = Penalty::new(lambda)?;
    let mut grad = params.clone();
    grad.fill(0.0);
    pen.add_gradient(params, &mut grad);
    Ok(grad)
}

/// Training rows as dense standardized features with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TrainingData {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                found: targets.len(),
            });
        }
        if let Some(k) = features.first().map(Vec::len) {
            if let Some(bad) = features.iter().find(|r| r.len() != k) {
                return Err(Error::Dimension {
                    expected: k,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Mean data loss over the window.
pub fn mean_data_loss(data: &TrainingData, arch: &Architecture, params: &ParamSet, spec: &LossSpec) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("training window"));
    }
    if data.num_features() != arch.input_dim {
        return Err(Error::Dimension {
            expected: arch.input_dim,
            found: data.num_features(),
        });
    }
    params.check_shapes(arch)?;
    let mut trace = Trace::default();
    let total: f64 = data
        .features
        .iter()
        .zip(&data.targets)
        .map(|(x, &y)| spec.value(y, forward_trace(arch, params, x, &mut trace)))
        .sum();
    Ok(total / data.len() as f64)
}

/// Mean data loss over the window plus the penalty.
pub fn objective(
    data: &TrainingData,
    arch: &Architecture,
    params: &ParamSet,
    spec: &LossSpec,
    penalty: &Penalty,
) -> Result<f64> {
    spec.validate()?;
    penalty.validate()?;
    Ok(mean_data_loss(data, arch, params, spec)? + penalty.value(params))
}

//! Feed-forward quantile network: `d` Leaky-ReLU hidden layers and a linear
//! scalar output.
//!
//! ```text
//! h0 = x
//! hi = a(Wi h(i-1) + bi; alpha_i),   i = 1..d
//! f(x) = gamma' hd + c
//! ```
//!
//! With `d = 0` this is the linear quantile regression `gamma' x + c`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network hyperparameters `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Architecture {
    pub fn linear(input_dim: usize) -> Self {
        Self {
            input_dim,
            widths: Vec::new(),
            alphas: Vec::new(),
        }
    }

    /// Hidden layers share a single negative-side slope.
    pub fn new(input_dim: usize, widths: Vec<usize>, alpha: f64) -> Result<Self> {
        let alphas = vec![alpha; widths.len()];
        let arch = Self {
            input_dim,
            widths,
            alphas,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Common slope, `None` for the linear model.
    pub fn alpha(&self) -> Option<f64> {
        self.alphas.first().copied()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        if self.widths.len() != self.alphas.len() {
            return Err(Error::InvalidArgument("one slope per hidden layer required".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!("slope {a} outside [0, 1]")));
        }
        Ok(())
    }

    /// Input size of hidden layer `i` (0-based).
    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.widths[layer - 1]
        }
    }

    /// Width of the representation fed to the output layer.
    pub fn output_fan_in(&self) -> usize {
        self.widths.last().copied().unwrap_or(self.input_dim)
    }

    pub fn num_params(&self) -> usize {
        (0..self.depth())
            .map(|i| self.widths[i] * (self.fan_in(i) + 1))
            .sum::<usize>()
            + self.output_fan_in()
            + 1
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.widths.is_empty() {
            return write!(f, "linear");
        }
        let widths: Vec<String> = self.widths.iter().map(ToString::to_string).collect();
        write!(f, "d{}-w{}-a{}", self.depth(), widths.join("x"), self.alphas[0])
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            shape: [self.rows, self.cols],
            data: self.data.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        if repr.data.len() != repr.shape[0] * repr.shape[1] {
            return Err(serde::de::Error::custom(format!(
                "matrix shape {:?} does not match {} entries",
                repr.shape,
                repr.data.len()
            )));
        }
        Ok(Self {
            rows: repr.shape[0],
            cols: repr.shape[1],
            data: repr.data,
        })
    }
}

/// Trainable parameters `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub intercept: f64,
}

/// Role of a coordinate in the flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Output,
    Intercept,
}

impl ParamSet {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            weights: (0..arch.depth())
                .map(|i| Matrix::zeros(arch.widths[i], arch.fan_in(i)))
                .collect(),
            biases: arch.widths.iter().map(|&w| vec![0.0; w]).collect(),
            gamma: vec![0.0; arch.output_fan_in()],
            intercept: 0.0,
        }
    }

    pub fn check_shapes(&self, arch: &Architecture) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(format!("parameter shape mismatch: {what}")));
        if self.weights.len() != arch.depth() || self.biases.len() != arch.depth() {
            return bad(format!("{} layers for depth {}", self.weights.len(), arch.depth()));
        }
        for i in 0..arch.depth() {
            let w = &self.weights[i];
            if w.rows != arch.widths[i] || w.cols != arch.fan_in(i) || w.data.len() != w.rows * w.cols {
                return bad(format!("layer {} weight is {}x{}", i + 1, w.rows, w.cols));
            }
            if self.biases[i].len() != arch.widths[i] {
                return bad(format!("layer {} bias has {} entries", i + 1, self.biases[i].len()));
            }
        }
        if self.gamma.len() != arch.output_fan_in() {
            return bad(format!("output weight has {} entries", self.gamma.len()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
            + self.gamma.len()
            + 1
    }

    /// Coordinates in a fixed order: each layer's weights then bias, then
    /// the output weights, then the intercept.
    pub fn coords(&self) -> impl Iterator<Item = (ParamKind, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                w.data
                    .iter()
                    .map(|&v| (ParamKind::Weight, v))
                    .chain(b.iter().map(|&v| (ParamKind::Bias, v)))
            })
            .chain(self.gamma.iter().map(|&v| (ParamKind::Output, v)))
            .chain(std::iter::once((ParamKind::Intercept, self.intercept)))
    }

    /// Mutable view in the same order as [`ParamSet::coords`].
    pub fn coords_mut(&mut self) -> impl Iterator<Item = (ParamKind, &mut f64)> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                w.data
                    .iter_mut()
                    .map(|v| (ParamKind::Weight, v))
                    .chain(b.iter_mut().map(|v| (ParamKind::Bias, v)))
            })
            .chain(self.gamma.iter_mut().map(|v| (ParamKind::Output, v)))
            .chain(std::iter::once((ParamKind::Intercept, &mut self.intercept)))
    }

    pub fn is_finite(&self) -> bool {
        self.coords().all(|(_, v)| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.coords_mut().for_each(|(_, v)| *v = value);
    }

    /// Largest absolute weight among `W` and `gamma`.
    pub fn max_abs_weight(&self) -> f64 {
        self.coords()
            .filter(|(k, _)| matches!(k, ParamKind::Weight | ParamKind::Output))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn leaky_relu(z: f64, alpha: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        alpha * z
    }
}

/// Derivative of [`leaky_relu`]; taken as 1 at the kink.
#[inline]
pub fn leaky_relu_derivative(z: f64, alpha: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        alpha
    }
}

/// Zero-mean Gaussian weights with standard deviation `1/sqrt(fan_in)`;
/// biases and intercept start at zero.
pub fn init_params(arch: &Architecture, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::zeros(arch);
    for (i, w) in params.weights.iter_mut().enumerate() {
        let dist = Normal::new(0.0, 1.0 / (arch.fan_in(i) as f64).sqrt()).expect("positive scale");
        w.data.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    }
    let dist = Normal::new(0.0, 1.0 / (arch.output_fan_in() as f64).sqrt()).expect("positive scale");
    params.gamma.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    params
}

/// Pre-activations and activations of one forward pass.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Trace {
    /// Pre-activations of hidden layer `i` from the last pass.
    pub fn pre_activations(&self, layer: usize) -> &[f64] {
        &self.pre[layer]
    }
}

/// Forward pass recording intermediate values for [`backward_trace`].
/// Shapes are assumed valid.
pub fn forward_trace(arch: &Architecture, params: &ParamSet, x: &[f64], trace: &mut Trace) -> f64 {
    let d = arch.depth();
    trace.pre.resize_with(d, Vec::new);
    trace.post.resize_with(d, Vec::new);
    for i in 0..d {
        let (done, rest) = trace.post.split_at_mut(i);
        let input: &[f64] = if i == 0 { x } else { &done[i - 1] };
        let w = &params.weights[i];
        let pre = &mut trace.pre[i];
        pre.clear();
        pre.extend((0..w.rows).map(|r| dot(w.row(r), input) + params.biases[i][r]));
        let post = &mut rest[0];
        post.clear();
        post.extend(pre.iter().map(|&z| leaky_relu(z, arch.alphas[i])));
    }
    let last: &[f64] = if d == 0 { x } else { &trace.post[d - 1] };
    dot(&params.gamma, last) + params.intercept
}

/// Adds `upstream * d f / d theta` into `grad` using the trace of the pass
/// at `x`.
pub fn backward_trace(
    arch: &Architecture,
    params: &ParamSet,
    x: &[f64],
    trace: &Trace,
    upstream: f64,
    grad: &mut ParamSet,
) {
    let d = arch.depth();
    grad.intercept += upstream;
    let last: &[f64] = if d == 0 { x } else { &trace.post[d - 1] };
    for (g, &v) in grad.gamma.iter_mut().zip(last) {
        *g += upstream * v;
    }
    if d == 0 {
        return;
    }
    // delta = dLoss/d(activation of layer i)
    let mut delta: Vec<f64> = params.gamma.iter().map(|g| upstream * g).collect();
    for i in (0..d).rev() {
        let alpha = arch.alphas[i];
        let dpre: Vec<f64> = delta
            .iter()
            .zip(&trace.pre[i])
            .map(|(dl, &z)| dl * leaky_relu_derivative(z, alpha))
            .collect();
        let input: &[f64] = if i == 0 { x } else { &trace.post[i - 1] };
        let gw = &mut grad.weights[i];
        for (r, &dz) in dpre.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad.biases[i][r] += dz;
            let row = &mut gw.data[r * gw.cols..(r + 1) * gw.cols];
            for (g, &v) in row.iter_mut().zip(input) {
                *g += dz * v;
            }
        }
        if i > 0 {
            let w = &params.weights[i];
            let mut next = vec![0.0; w.cols];
            for (r, &dz) in dpre.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                for (n, &wv) in next.iter_mut().zip(w.row(r)) {
                    *n += dz * wv;
                }
            }
            delta = next;
        }
    }
}

fn check_input(arch: &Architecture, params: &ParamSet, x: &[f64]) -> Result<()> {
    if x.len() != arch.input_dim {
        return Err(Error::Dimension {
            expected: arch.input_dim,
            found: x.len(),
        });
    }
    params.check_shapes(arch)
}

/// Network output at `x`.
pub fn forward(arch: &Architecture, params: &ParamSet, x: &[f64]) -> Result<f64> {
    check_input(arch, params, x)?;
    Ok(forward_trace(arch, params, x, &mut Trace::default()))
}

/// Gradient of a loss with respect to every parameter, given the loss's
/// derivative with respect to the prediction at `x`. Penalty terms are not
/// included.
pub fn backward(arch: &Architecture, params: &ParamSet, x: &[f64], dloss_dpred: f64) -> Result<ParamSet> {
    check_input(arch, params, x)?;
    if !dloss_dpred.is_finite() {
        return Err(Error::NonFinite(format!("upstream gradient {dloss_dpred}")));
    }
    let mut trace = Trace::default();
    forward_trace(arch, params, x, &mut trace);
    let mut grad = ParamSet::zeros(arch);
    backward_trace(arch, params, x, &trace, dloss_dpred, &mut grad);
    Ok(grad)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Current version of the parameter text format.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format: String,
    version: u32,
    architecture: Architecture,
    params: ParamSet,
}

/// Pretty-printed JSON with architecture, shapes and row-major weights.
pub fn params_to_text(arch: &Architecture, params: &ParamSet) -> Result<String> {
    params.check_shapes(arch)?;
    serde_json::to_string_pretty(&ParamsFile {
        format: "quantrisk-params".into(),
        version: PARAMS_FORMAT_VERSION,
        architecture: arch.clone(),
        params: params.clone(),
    })
    .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn params_from_text(text: &str) -> Result<(Architecture, ParamSet)> {
    let file: ParamsFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.version != PARAMS_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
    }
    file.architecture.validate()?;
    file.params.check_shapes(&file.architecture)?;
    Ok((file.architecture, file.params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_branches() {
        assert_eq!(leaky_relu(3.0, 0.0), 3.0);
        assert_eq!(leaky_relu(3.0, 0.7), 3.0);
        assert_eq!(leaky_relu(-2.0, 0.5), -1.0);
        assert_eq!(leaky_relu(-2.0, 1.0), -2.0);
        assert_eq!(leaky_relu(-2.0, 0.0), 0.0);
        assert_eq!(leaky_relu_derivative(0.0, 0.0), 1.0);
        assert_eq!(leaky_relu_derivative(-1e-9, 0.3), 0.3);
    }

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::new(5, vec![4, 3], 0.5).unwrap();
        assert_eq!(init_params(&arch, 42), init_params(&arch, 42));
        assert_ne!(init_params(&arch, 42), init_params(&arch, 43));
    }

    #[test]
    fn linear_init_shape() {
        let arch = Architecture::linear(7);
        let p = init_params(&arch, 1);
        assert!(p.weights.is_empty() && p.biases.is_empty());
        assert_eq!(p.gamma.len(), 7);
        assert_eq!(p.intercept, 0.0);
        assert_eq!(p.num_params(), arch.num_params());
    }

    #[test]
    fn init_scale_matches_fan_in() {
        let arch = Architecture::new(100, vec![100], 0.0).unwrap();
        let p = init_params(&arch, 9);
        let w = &p.weights[0].data;
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.02, "sd {sd}");
        assert!(p.biases[0].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn affine_output_without_hidden_layers() {
        let arch = Architecture::linear(2);
        let mut p = ParamSet::zeros(&arch);
        p.gamma = vec![1.0, -1.0];
        p.intercept = 0.5;
        assert_eq!(forward(&arch, &p, &[2.0, 1.0]).unwrap(), 1.5);
    }

    #[test]
    fn relu_two_layer_hand_example() {
        // W1 = [[1, -1], [2, 1]], b1 = [0, -1]; W2 = [[1, 1], [-1, 2]], b2 = 0
        // gamma = [1, -1], c = 0.25, x = [1, 2]
        // z1 = [-1, 3] -> h1 = [0, 3]; z2 = [3, 6] -> h2 = [3, 6]; f = 3 - 6 + 0.25
        let arch = Architecture::new(2, vec![2, 2], 0.0).unwrap();
        let p = ParamSet {
            weights: vec![
                Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 1.0]]),
                Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 2.0]]),
            ],
            biases: vec![vec![0.0, -1.0], vec![0.0, 0.0]],
            gamma: vec![1.0, -1.0],
            intercept: 0.25,
        };
        assert_eq!(forward(&arch, &p, &[1.0, 2.0]).unwrap(), -2.75);
    }

    #[test]
    fn dimension_mismatch() {
        let arch = Architecture::linear(3);
        let p = ParamSet::zeros(&arch);
        assert!(matches!(forward(&arch, &p, &[1.0]), Err(Error::Dimension { expected: 3, found: 1 })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let arch = Architecture::new(3, vec![4], 0.5).unwrap();
        let p = init_params(&arch, 3);
        let g = backward(&arch, &p, &[0.3, -1.0, 2.0], 0.0).unwrap();
        assert!(g.coords().all(|(_, v)| v == 0.0));
        assert!(backward(&arch, &p, &[0.3, -1.0, 2.0], f64::NAN).is_err());
    }

    #[test]
    fn linear_gradient() {
        let arch = Architecture::linear(2);
        let p = init_params(&arch, 3);
        let g = backward(&arch, &p, &[2.0, -3.0], 0.5).unwrap();
        assert_eq!(g.gamma, vec![1.0, -1.5]);
        assert_eq!(g.intercept, 0.5);
    }

    #[test]
    fn params_text_roundtrip() {
        let arch = Architecture::new(3, vec![2], 0.5).unwrap();
        let p = init_params(&arch, 11);
        let text = params_to_text(&arch, &p).unwrap();
        assert!(text.contains("\"shape\""));
        let (a2, p2) = params_from_text(&text).unwrap();
        assert_eq!(a2, arch);
        assert_eq!(p2, p);
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        assert!(params_from_text(&bumped).is_err());
    }

    #[test]
    fn architecture_validation() {
        assert!(Architecture::new(3, vec![0], 0.5).is_err());
        assert!(Architecture::new(3, vec![2], 1.5).is_err());
        assert_eq!(Architecture::new(3, vec![8, 8], 0.5).unwrap().to_string(), "d2-w8x8-a0.5");
        assert_eq!(Architecture::linear(3).to_string(), "linear");
    }
}

//! Dense networks trained on per-sample weighted losses.
//!
//! Layer kernels are stored row-major with shape `(in, out)`. All reductions
//! over samples run in row order, which keeps training bit-reproducible and
//! lets a row of weight `2w` contribute exactly what two adjacent copies of
//! weight `w` contribute when the weights are dyadic.
//!
//! Objective: `J = sum_i w_i L_i` with `w` summing to one. A mini-batch `b`
//! uses the weights `w_i * (|b| / N) / sum_{j in b} w_j`, so each batch
//! carries `|b| / N` of the total weight regardless of which rows it holds.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, WeightedDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, output: Activation) -> Self {
        Self {
            layer_widths,
            hidden: Activation::Relu,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::arg("need at least one affine layer"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::arg("layer widths must be >= 1"));
        }
        if !matches!(self.hidden, Activation::Relu | Activation::Identity) {
            return Err(Error::arg("hidden activation must be relu or identity"));
        }
        if self.output == Activation::Relu {
            return Err(Error::arg("output activation must be identity, sigmoid or softmax"));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    WeightedMse,
    WeightedBce,
    WeightedCce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be >= 1"));
        }
        Ok(())
    }
}

fn check_loss(loss: Loss, output: Activation) -> Result<()> {
    match (loss, output) {
        (Loss::WeightedMse, Activation::Identity | Activation::Sigmoid)
        | (Loss::WeightedBce, Activation::Sigmoid)
        | (Loss::WeightedCce, Activation::Softmax) => Ok(()),
        _ => Err(Error::arg(format!(
            "loss {loss:?} is incompatible with output activation {output:?}"
        ))),
    }
}

/// One affine map `y = x K + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `(n_in, n_out)`.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            kernel: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn glorot<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        Self {
            n_in,
            n_out,
            kernel: (0..n_in * n_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, xi) in x.iter().enumerate() {
            let row = &self.kernel[i * self.n_out..(i + 1) * self.n_out];
            for (o, k) in out.iter_mut().zip(row) {
                *o += xi * k;
            }
        }
    }

    /// Largest singular value by power iteration on `K^T K`.
    pub fn spectral_norm(&self) -> f64 {
        let (n_in, n_out) = (self.n_in, self.n_out);
        let mut v = vec![1.0 / (n_out as f64).sqrt(); n_out];
        let mut u = vec![0.0; n_in];
        let mut sigma = 0.0;
        for _ in 0..100 {
            for i in 0..n_in {
                u[i] = (0..n_out).map(|o| self.kernel[i * n_out + o] * v[o]).sum();
            }
            for (o, vo) in v.iter_mut().enumerate() {
                *vo = (0..n_in).map(|i| self.kernel[i * n_out + o] * u[i]).sum();
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let next = norm.sqrt();
            let done = (next - sigma).abs() <= 1e-9 * next;
            sigma = next;
            if done {
                break;
            }
        }
        sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    spec: MlpSpec,
    /// Per layer: kernel then bias, flattened row-major.
    parameters: Vec<Vec<f64>>,
}

fn apply_activation(act: Activation, z: &mut [f64]) {
    match act {
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Identity => {}
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softmax => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            z.iter_mut().for_each(|v| *v /= total);
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-sample loss of pre-activation `z` against `y`, and `dL/dz` into `grad`.
fn sample_loss(loss: Loss, output: Activation, z: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
    let n = z.len() as f64;
    match (loss, output) {
        (Loss::WeightedMse, Activation::Identity) => {
            let mut l = 0.0;
            for ((g, zi), yi) in grad.iter_mut().zip(z).zip(y) {
                let d = zi - yi;
                l += d * d;
                *g = 2.0 * d / n;
            }
            l / n
        }
        (Loss::WeightedMse, Activation::Sigmoid) => {
            let mut l = 0.0;
            for ((g, zi), yi) in grad.iter_mut().zip(z).zip(y) {
                let p = sigmoid(*zi);
                let d = p - yi;
                l += d * d;
                *g = 2.0 * d * p * (1.0 - p) / n;
            }
            l / n
        }
        (Loss::WeightedBce, Activation::Sigmoid) => {
            let mut l = 0.0;
            for ((g, zi), yi) in grad.iter_mut().zip(z).zip(y) {
                l += softplus(*zi) - yi * zi;
                *g = (sigmoid(*zi) - yi) / n;
            }
            l / n
        }
        (Loss::WeightedCce, Activation::Softmax) => {
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut l = 0.0;
            for ((g, zi), yi) in grad.iter_mut().zip(z).zip(y) {
                l -= yi * (zi - lse);
                *g = (zi - lse).exp() * y.iter().sum::<f64>() - yi;
            }
            l
        }
        _ => unreachable!("loss/activation pair validated before training"),
    }
}

/// Parameter gradients, laid out like the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.kernel.iter().chain(&l.bias).copied())
            .collect()
    }
}

struct Workspace {
    /// Activations per layer boundary, `acts[0]` is the input batch.
    acts: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    row_grad: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform kernels and zero biases from `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.n_layers() {
            return Err(Error::arg("layer count does not match spec"));
        }
        for (l, w) in layers.iter().zip(spec.layer_widths.windows(2)) {
            if l.n_in != w[0]
                || l.n_out != w[1]
                || l.kernel.len() != w[0] * w[1]
                || l.bias.len() != w[1]
            {
                return Err(Error::arg("layer shapes do not match spec"));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn n_inputs(&self) -> usize {
        self.spec.layer_widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.spec.layer_widths.last().expect("validated")
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.kernel.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::arg("parameter vector has the wrong length"));
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.kernel.iter_mut().chain(l.bias.iter_mut()).for_each(|v| {
                *v = it.next().expect("length checked");
            });
        }
        Ok(())
    }

    fn act_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.spec.output
        } else {
            self.spec.hidden
        }
    }

    fn workspace(&self, rows: usize) -> Workspace {
        let w = &self.spec.layer_widths;
        Workspace {
            acts: w.iter().map(|n| vec![0.0; rows * n]).collect(),
            pre: w[1..].iter().map(|n| vec![0.0; rows * n]).collect(),
            delta: vec![0.0; rows * w.iter().max().copied().unwrap_or(1)],
            delta_prev: vec![0.0; rows * w.iter().max().copied().unwrap_or(1)],
            row_grad: vec![0.0; *w.last().expect("validated")],
        }
    }

    /// Forward pass of `rows` samples held in `ws.acts[0]`; stops short of the
    /// output activation in `ws.pre`, applies it in `ws.acts`.
    fn forward_ws(&self, ws: &mut Workspace, rows: usize, upto: usize) {
        for (l, layer) in self.layers.iter().enumerate().take(upto) {
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            let act = self.act_for(l);
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l];
            let output = &mut after[0];
            let pre = &mut ws.pre[l];
            for r in 0..rows {
                let z = &mut pre[r * n_out..(r + 1) * n_out];
                layer.forward_row(&input[r * n_in..(r + 1) * n_in], z);
                let a = &mut output[r * n_out..(r + 1) * n_out];
                a.copy_from_slice(z);
                apply_activation(act, a);
            }
        }
    }

    fn load_rows(ws: &mut Workspace, x: &Array2<f64>, idx: &[usize]) {
        let d = x.ncols();
        for (r, &i) in idx.iter().enumerate() {
            for (j, v) in x.row(i).iter().enumerate() {
                ws.acts[0][r * d + j] = *v;
            }
        }
    }

    /// Network outputs for every row of `x`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.activations(x, self.layers.len())
    }

    fn activations(&self, x: &Array2<f64>, upto: usize) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::arg(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.n_inputs()
            )));
        }
        let rows = x.nrows();
        let mut ws = self.workspace(rows);
        let idx: Vec<usize> = (0..rows).collect();
        Self::load_rows(&mut ws, x, &idx);
        self.forward_ws(&mut ws, rows, upto);
        let width = self.spec.layer_widths[upto];
        Ok(Array2::from_shape_vec((rows, width), ws.acts[upto].clone()).expect("shape"))
    }

    /// Weighted loss `sum_r w_r L_r` over `idx` and its gradient in `grads`.
    ///
    /// With `exact`, per-row deltas stay unweighted and each parameter's
    /// `sum_r w_r (a_r d_r)` is one correctly rounded dot product, so a row of
    /// weight `c/M` and `c` copies of weight `1/M` give identical bits.
    #[allow(clippy::too_many_arguments)]
    fn batch_gradient(
        &self,
        ws: &mut Workspace,
        x: &Array2<f64>,
        y: &Array2<f64>,
        idx: &[usize],
        batch_w: &[f64],
        loss: Loss,
        grads: &mut Gradients,
        exact: bool,
    ) -> f64 {
        let rows = idx.len();
        Self::load_rows(ws, x, idx);
        self.forward_ws(ws, rows, self.layers.len());
        let last = self.layers.len() - 1;
        let n_out = self.n_outputs();
        let mut total = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let z = &ws.pre[last][r * n_out..(r + 1) * n_out];
            let yrow: Vec<f64> = y.row(i).to_vec();
            let l = sample_loss(loss, self.spec.output, z, &yrow, &mut ws.row_grad);
            total += batch_w[r] * l;
            for (o, g) in ws.row_grad.iter().enumerate() {
                ws.delta[r * n_out + o] = if exact { *g } else { batch_w[r] * g };
            }
        }
        for g in &mut grads.layers {
            g.kernel.iter_mut().for_each(|v| *v = 0.0);
            g.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            let input = &ws.acts[l];
            let g = &mut grads.layers[l];
            if exact {
                let mut parts = Vec::with_capacity(2 * rows);
                let mut dot = |term: &dyn Fn(usize) -> f64| {
                    parts.clear();
                    for r in 0..rows {
                        let (a, b) = (batch_w[r], term(r));
                        let p = a * b;
                        parts.push(p);
                        parts.push(a.mul_add(b, -p));
                    }
                    exact_sum(&parts)
                };
                for o in 0..n_out {
                    g.bias[o] = dot(&|r| ws.delta[r * n_out + o]);
                    for i in 0..n_in {
                        g.kernel[i * n_out + o] = dot(&|r| input[r * n_in + i] * ws.delta[r * n_out + o]);
                    }
                }
            }
            for r in (0..rows).filter(|_| !exact) {
                let d = &ws.delta[r * n_out..(r + 1) * n_out];
                for (b, dv) in g.bias.iter_mut().zip(d) {
                    *b += dv;
                }
                for i in 0..n_in {
                    let a = input[r * n_in + i];
                    let krow = &mut g.kernel[i * n_out..(i + 1) * n_out];
                    for (k, dv) in krow.iter_mut().zip(d) {
                        *k += a * dv;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let act = self.act_for(l - 1);
            let pre = &ws.pre[l - 1];
            for r in 0..rows {
                let d = &ws.delta[r * n_out..(r + 1) * n_out];
                for i in 0..n_in {
                    let krow = &layer.kernel[i * n_out..(i + 1) * n_out];
                    let mut s = 0.0;
                    for (k, dv) in krow.iter().zip(d) {
                        s += k * dv;
                    }
                    let deriv = match act {
                        Activation::Relu => {
                            if pre[r * n_in + i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        _ => 1.0,
                    };
                    ws.delta_prev[r * n_in + i] = s * deriv;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        total
    }

    fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    /// `sum_i w_i L_i` and its gradient over all rows.
    pub fn loss_and_gradient(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        weights: &[f64],
        loss: Loss,
    ) -> Result<(f64, Gradients)> {
        check_loss(loss, self.spec.output)?;
        check_shapes(self, x, y, weights)?;
        let mut ws = self.workspace(x.nrows());
        let mut grads = self.zero_grads();
        let idx: Vec<usize> = (0..x.nrows()).collect();
        let l = self.batch_gradient(&mut ws, x, y, &idx, weights, loss, &mut grads, false);
        Ok((l, grads))
    }

    /// Layer outputs entering the final affine layer.
    pub fn feature_extract(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if self.layers.len() < 2 {
            return Err(Error::arg("a single-layer model has no feature space"));
        }
        self.activations(points, self.layers.len() - 1)
    }

    /// Product of layer spectral norms; an upper bound on the Lipschitz
    /// constant for 1-Lipschitz activations.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers.iter().map(Dense::spectral_norm).product()
    }

    /// This model with its last layer replaced.
    pub fn with_head(&self, head: Dense) -> Result<Self> {
        let mut layers = self.layers.clone();
        *layers.last_mut().expect("validated") = head;
        Self::from_layers(self.spec.clone(), layers)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = ModelJson {
            spec: self.spec.clone(),
            parameters: self
                .layers
                .iter()
                .map(|l| l.kernel.iter().chain(&l.bias).copied().collect())
                .collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ModelJson = serde_json::from_str(s)?;
        j.spec.validate()?;
        let layers = j
            .spec
            .layer_widths
            .windows(2)
            .zip(j.parameters)
            .map(|(w, mut p)| {
                if p.len() != w[0] * w[1] + w[1] {
                    return Err(Error::arg("parameter block has the wrong length"));
                }
                let bias = p.split_off(w[0] * w[1]);
                Ok(Dense {
                    n_in: w[0],
                    n_out: w[1],
                    kernel: p,
                    bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(j.spec, layers)
    }
}

fn check_shapes(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>, w: &[f64]) -> Result<()> {
    if x.ncols() != model.n_inputs() || y.ncols() != model.n_outputs() {
        return Err(Error::arg(format!(
            "data is {}->{}, model is {}->{}",
            x.ncols(),
            y.ncols(),
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    if x.nrows() != y.nrows() || x.nrows() != w.len() || x.nrows() == 0 {
        return Err(Error::arg("row counts of inputs, labels and weights differ"));
    }
    Ok(())
}

/// Per-epoch objective values.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn optimizer_step(
    opt: Optimizer,
    lr: f64,
    params: &mut [f64],
    grad: &[f64],
    state: &mut OptState,
) {
    match opt {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            state.t += 1;
            let lr_t = lr * (1.0 - beta2.powi(state.t)).sqrt() / (1.0 - beta1.powi(state.t));
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grad)
                .zip(state.m.iter_mut())
                .zip(state.v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps);
            }
        }
    }
}

/// Correctly rounded sum of finite values (Shewchuk's partials, as in Python's
/// `math.fsum`).
fn exact_sum(xs: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in xs {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // round half-way cases by the sign of what lies below
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Continues training `model` on raw matrices; `weights` must sum to one.
pub fn train_from(
    model: MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    weights: &[f64],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    train_impl(model, x, y, weights, cfg, false)
}

/// [`train_from`] with exactly rounded gradient reductions: integer-ratio
/// weights then reproduce duplicated-row training bit for bit. Much slower;
/// meant for small verification runs.
pub fn train_from_exact(
    model: MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    weights: &[f64],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    train_impl(model, x, y, weights, cfg, true)
}

fn train_impl(
    mut model: MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    weights: &[f64],
    cfg: &TrainConfig,
    exact: bool,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    check_loss(cfg.loss, model.spec.output)?;
    check_shapes(&model, x, y, weights)?;
    let n = x.nrows();
    let bsz = cfg.batch_size.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = model.workspace(bsz);
    let mut grads = model.zero_grads();
    let mut params = model.params_flat();
    let mut state = OptState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut report = TrainReport::default();
    let mut batch_w = vec![0.0; bsz];
    for epoch in 0..cfg.epochs {
        if bsz < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bsz) {
            // each step descends the batch estimate of the full objective:
            // weights rescaled to sum |b|/N, times N/|b|
            let share = chunk.len() as f64 / n as f64;
            let sum: f64 = chunk.iter().map(|&i| weights[i]).sum();
            for (bw, &i) in batch_w.iter_mut().zip(chunk) {
                *bw = if bsz == n { weights[i] } else { weights[i] / sum };
            }
            let l = model.batch_gradient(&mut ws, x, y, chunk, &batch_w, cfg.loss, &mut grads, exact);
            epoch_loss += share * l;
            let g = grads.flatten();
            optimizer_step(cfg.optimizer, cfg.learning_rate, &mut params, &g, &mut state);
            model.set_params_flat(&params)?;
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        report.epoch_losses.push(epoch_loss);
    }
    Ok((model, report))
}

/// Trains a freshly initialized network (init seeded by `cfg.seed`).
pub fn train(ds: &WeightedDataset, spec: &MlpSpec, cfg: &TrainConfig) -> Result<MlpModel> {
    train_with_report(ds, spec, cfg).map(|(m, _)| m)
}

pub fn train_with_report(
    ds: &WeightedDataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let model = MlpModel::init(spec, cfg.seed)?;
    let base = ds.base();
    train_from(
        model,
        base.points(),
        base.labels(),
        ds.weights().as_slice().expect("contiguous"),
        cfg,
    )
}

/// How the replacement head of a network is fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadFit {
    /// Closed-form weighted least squares (MSE, identity output).
    LeastSquares,
    /// Gradient training of a single affine layer, warm-started from `init`.
    Gradient {
        cfg: TrainConfig,
        output: Activation,
        init: Option<Dense>,
    },
}

/// Fits one affine layer mapping `features` to `labels` under `weights`.
pub fn fit_linear_head(
    features: &Array2<f64>,
    labels: &Array2<f64>,
    weights: &[f64],
    fit: &HeadFit,
) -> Result<Dense> {
    let (n, d) = features.dim();
    if labels.nrows() != n || weights.len() != n || n == 0 {
        return Err(Error::arg("features, labels and weights must have equal row counts"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::arg("head weights must be non-negative and sum to 1"));
    }
    match fit {
        HeadFit::LeastSquares => weighted_least_squares(features, labels, weights),
        HeadFit::Gradient { cfg, output, init } => {
            let spec = MlpSpec::new(vec![d, labels.ncols()], *output);
            let model = match init {
                Some(h) => MlpModel::from_layers(spec, vec![h.clone()])?,
                None => MlpModel::init(&spec, cfg.seed)?,
            };
            let (m, _) = train_from(model, features, labels, weights, cfg)?;
            Ok(m.layers[0].clone())
        }
    }
}

fn weighted_least_squares(x: &Array2<f64>, y: &Array2<f64>, w: &[f64]) -> Result<Dense> {
    let (n, d) = x.dim();
    let p = d + 1;
    let n_o = y.ncols();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DMatrix::<f64>::zeros(p, n_o);
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[..d].iter_mut().zip(x.row(i)).for_each(|(r, v)| *r = *v);
        row[d] = 1.0;
        for r in 0..p {
            let wr = w[i] * row[r];
            for c in 0..p {
                a[(r, c)] += wr * row[c];
            }
            for o in 0..n_o {
                b[(r, o)] += wr * y[[i, o]];
            }
        }
    }
    let scale = (a.trace() / p as f64).max(f64::MIN_POSITIVE);
    let mut lambda = 0.0;
    let solution = loop {
        let mut reg = a.clone();
        for r in 0..p {
            reg[(r, r)] += lambda;
        }
        let solved = reg.clone().cholesky().map(|c| c.solve(&b)).filter(|s| {
            s.iter().all(|v| v.is_finite()) && {
                let cond = reg.clone().symmetric_eigen().eigenvalues;
                cond.min() > 1e-12 * cond.max()
            }
        });
        match solved {
            Some(s) => break s,
            None => {
                lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
                if lambda > 1e6 * scale {
                    return Err(Error::Numerical("least squares failed even with ridge".into()));
                }
                log::warn!("rank-deficient normal equations; ridge lambda = {lambda:.3e}");
            }
        }
    };
    let mut head = Dense::zeros(d, n_o);
    for i in 0..d {
        for o in 0..n_o {
            head.kernel[i * n_o + o] = solution[(i, o)];
        }
    }
    for o in 0..n_o {
        head.bias[o] = solution[(d, o)];
    }
    Ok(head)
}

/// Error metrics on a labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean over rows of the squared Euclidean label error.
    pub l2: f64,
    /// Square root of `l2`.
    pub l2_root: f64,
    /// Max over rows of the Euclidean label error.
    pub linf: f64,
    /// Max over rows of the squared Euclidean label error.
    pub linf_squared: f64,
    /// Classification accuracy for sigmoid/softmax outputs.
    pub accuracy: Option<f64>,
}

/// Metrics of predictions against labels; `output` selects the accuracy rule.
pub fn metrics_from_predictions(
    pred: &Array2<f64>,
    labels: &Array2<f64>,
    output: Activation,
) -> Result<Metrics> {
    if pred.dim() != labels.dim() {
        return Err(Error::arg("predictions and labels differ in shape"));
    }
    if pred.nrows() == 0 {
        return Err(Error::arg("empty test set"));
    }
    let n = pred.nrows() as f64;
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut correct = 0usize;
    for (p, y) in pred.rows().into_iter().zip(labels.rows()) {
        let e: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += e;
        max = max.max(e);
        let hit = match output {
            Activation::Sigmoid => p
                .iter()
                .zip(y)
                .all(|(a, b)| (*a >= 0.5) == (*b >= 0.5)),
            Activation::Softmax => argmax(p.iter()) == argmax(y.iter()),
            _ => false,
        };
        correct += hit as usize;
    }
    let accuracy = matches!(output, Activation::Sigmoid | Activation::Softmax)
        .then(|| correct as f64 / n);
    Ok(Metrics {
        l2: sum / n,
        l2_root: (sum / n).sqrt(),
        linf: max.sqrt(),
        linf_squared: max,
        accuracy,
    })
}

fn argmax<'a>(it: impl Iterator<Item = &'a f64>) -> usize {
    it.enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best })
        .0
}

pub fn evaluate(model: &MlpModel, test: &LabeledDataset) -> Result<Metrics> {
    let pred = model.predict(test.points())?;
    metrics_from_predictions(&pred, test.labels(), model.spec.output)
}

/// Uniform weights over `n` rows.
pub fn uniform_weights(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

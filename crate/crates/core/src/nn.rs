//! Small feed-forward classifiers with exact backpropagation and Adam.
//!
//! Three architectures are supported: a plain ReLU network (FNN), a
//! batch-normalized one (BNN) and a DeepSet that maps every observation
//! through a shared MLP, mean-pools over the observations and finishes
//! with an FNN. Networks output logits internally; the sigmoid is applied
//! at the edge so the loss gradient can be taken with respect to the logit.
//!
//! Batch normalization always normalizes with the statistics of the batch
//! being evaluated, in training and in evaluation alike. Running
//! statistics are still tracked and checkpointed.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rngdist::RngStream;

/// Clamp applied to the classifier output inside the log loss.
pub const LOSS_CLAMP: f64 = 1e-7;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    /// `input → width`, then `depth` square hidden layers, then `width → 1`.
    Fnn { width: usize, depth: usize },
    /// Dense + batch-norm + ReLU blocks. The first hidden width defaults to
    /// `max(64, 2 · input_dim)`; each following width is
    /// `max(⌊prev · reduction_ratio⌋, floor)`.
    Bnn { first_width: Option<usize>, reduction_ratio: f64, floor: usize, depth: usize },
    /// Per-observation MLP (`inner_layers` hidden layers of `inner_width`)
    /// to `q` features, mean-pooled, then an FNN of the given width/depth.
    DeepSet { q: usize, inner_width: usize, inner_layers: usize, width: usize, depth: usize },
}

impl Arch {
    pub fn fnn() -> Self {
        Arch::Fnn { width: 64, depth: 2 }
    }

    pub fn bnn() -> Self {
        Arch::Bnn { first_width: None, reduction_ratio: 0.5, floor: 16, depth: 2 }
    }

    pub fn deepset(q: usize) -> Self {
        Arch::DeepSet { q, inner_width: 64, inner_layers: 2, width: 64, depth: 2 }
    }

    pub fn uses_batch_norm(&self) -> bool {
        matches!(self, Arch::Bnn { .. })
    }

    pub fn is_set_network(&self) -> bool {
        matches!(self, Arch::DeepSet { .. })
    }

    /// Hidden widths of a BNN for the given input dimension.
    pub fn bnn_widths(&self, input_dim: usize) -> Option<Vec<usize>> {
        match self {
            Arch::Bnn { first_width, reduction_ratio, floor, depth } => {
                let mut widths = vec![first_width.unwrap_or_else(|| (2 * input_dim).max(64))];
                for _ in 0..*depth {
                    let prev = *widths.last().unwrap();
                    widths.push((((prev as f64) * reduction_ratio).floor() as usize).max(*floor));
                }
                Some(widths)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Arch::Fnn { width, .. } if *width == 0 => Err(invalid("FNN width must be positive")),
            Arch::Bnn { first_width, reduction_ratio, floor, .. } => {
                if first_width == &Some(0) || *floor == 0 {
                    return Err(invalid("BNN widths must be positive"));
                }
                if !(reduction_ratio.is_finite() && *reduction_ratio > 0.0) {
                    return Err(invalid("BNN reduction_ratio must be finite and positive"));
                }
                Ok(())
            }
            Arch::DeepSet { q, inner_width, inner_layers, width, .. } => {
                if *q == 0 || *inner_width == 0 || *inner_layers == 0 || *width == 0 {
                    return Err(invalid("DeepSet dimensions must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) mod hex_f64s {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut out = String::with_capacity(values.len() * 16);
        for v in values {
            out.push_str(&format!("{:016x}", v.to_bits()));
        }
        s.serialize_str(&out)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        if text.len() % 16 != 0 || !text.is_ascii() {
            return Err(serde::de::Error::custom("hex float array length is not a multiple of 16"));
        }
        (0..text.len() / 16)
            .map(|i| {
                u64::from_str_radix(&text[16 * i..16 * (i + 1)], 16)
                    .map(f64::from_bits)
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

/// Fully connected layer; `weights` is row-major `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    #[serde(with = "hex_f64s")]
    pub weights: Vec<f64>,
    #[serde(with = "hex_f64s")]
    pub bias: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn weight_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.inputs, self.outputs), &self.weights).expect("dense shape")
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight_view());
        let b = ArrayView2::from_shape((1, self.outputs), &self.bias).expect("bias shape");
        z += &b;
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub features: usize,
    #[serde(with = "hex_f64s")]
    pub gamma: Vec<f64>,
    #[serde(with = "hex_f64s")]
    pub beta: Vec<f64>,
    #[serde(with = "hex_f64s")]
    pub running_mean: Vec<f64>,
    #[serde(with = "hex_f64s")]
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(features: usize) -> Self {
        Self {
            features,
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
    /// `(B × n)` → `(B·n × 1)`, each row's observations sorted ascending.
    SetSplit,
    /// `(B·n × q)` → `(B × q)` by averaging each group of `n` rows.
    MeanPool,
}

enum Cache {
    Dense { input: Array2<f64> },
    BatchNorm { x_hat: Array2<f64>, inv_std: Array1<f64>, mean: Array1<f64>, var: Array1<f64> },
    Relu { output: Array2<f64> },
    SetSplit,
    MeanPool { set_size: usize },
}

/// A mini-batch of datasets (one per row) with 0/1 labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn new(x: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), labels.len())));
        }
        if labels.iter().any(|l| *l != 0.0 && *l != 1.0) {
            return Err(invalid("labels must be 0 or 1"));
        }
        Ok(Self { x, labels })
    }
}

/// Gradients aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: Arch,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn push_mlp(layers: &mut Vec<Layer>, widths: &[usize], rng: &mut RngStream, batch_norm: bool) {
    for pair in widths.windows(2) {
        layers.push(Layer::Dense(Dense::new(pair[0], pair[1], rng)));
        if batch_norm {
            layers.push(Layer::BatchNorm(BatchNorm::new(pair[1])));
        }
        layers.push(Layer::Relu);
    }
}

impl Network {
    pub fn build(arch: &Arch, input_dim: usize, rng: &mut RngStream) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("input_dim must be at least 1"));
        }
        arch.validate()?;
        let mut layers = Vec::new();
        match arch {
            Arch::Fnn { width, depth } => {
                let widths: Vec<usize> =
                    std::iter::once(input_dim).chain(std::iter::repeat_n(*width, depth + 1)).collect();
                push_mlp(&mut layers, &widths, rng, false);
                layers.push(Layer::Dense(Dense::new(*width, 1, rng)));
            }
            Arch::Bnn { .. } => {
                let hidden = arch.bnn_widths(input_dim).expect("bnn widths");
                let widths: Vec<usize> = std::iter::once(input_dim).chain(hidden.iter().copied()).collect();
                push_mlp(&mut layers, &widths, rng, true);
                layers.push(Layer::Dense(Dense::new(*hidden.last().unwrap(), 1, rng)));
            }
            Arch::DeepSet { q, inner_width, inner_layers, width, depth } => {
                layers.push(Layer::SetSplit);
                let inner: Vec<usize> =
                    std::iter::once(1).chain(std::iter::repeat_n(*inner_width, *inner_layers)).collect();
                push_mlp(&mut layers, &inner, rng, false);
                layers.push(Layer::Dense(Dense::new(*inner_width, *q, rng)));
                layers.push(Layer::MeanPool);
                let outer: Vec<usize> = std::iter::once(*q).chain(std::iter::repeat_n(*width, depth + 1)).collect();
                push_mlp(&mut layers, &outer, rng, false);
                layers.push(Layer::Dense(Dense::new(*width, 1, rng)));
            }
        }
        Ok(Self { arch: arch.clone(), input_dim, layers })
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice());
                    out.push(d.bias.as_slice());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice());
                    out.push(bn.beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_mut_slice());
                    out.push(d.bias.as_mut_slice());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_mut_slice());
                    out.push(bn.beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if self.arch.is_set_network() {
            if x.ncols() == 0 {
                return Err(Error::Shape("set input has no observations".into()));
            }
        } else if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim)));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if self.has_batch_norm() && x.nrows() < 2 {
            return Err(Error::Shape("batch normalization needs at least 2 rows".into()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<'_, f64>, mut caches: Option<&mut Vec<Cache>>) -> Array1<f64> {
        let rows = x.nrows();
        let mut h = x.to_owned();
        let mut set_size = 0;
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    let z = d.forward(&h);
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Dense { input: std::mem::replace(&mut h, z) });
                    } else {
                        h = z;
                    }
                }
                Layer::BatchNorm(bn) => {
                    let n = h.nrows() as f64;
                    // shifting by the first row keeps constant features exactly centered
                    let shift = h.row(0).to_owned();
                    let mean =
                        (&h - &shift.view().insert_axis(Axis(0))).mean_axis(Axis(0)).expect("non-empty batch") + &shift;
                    let mut centered = h;
                    centered -= &mean.view().insert_axis(Axis(0));
                    let var = centered.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum::<f64>() / n);
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let x_hat = centered * inv_std.view().insert_axis(Axis(0));
                    let gamma = ArrayView2::from_shape((1, bn.features), &bn.gamma).expect("gamma");
                    let beta = ArrayView2::from_shape((1, bn.features), &bn.beta).expect("beta");
                    h = &x_hat * &gamma + beta;
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::BatchNorm { x_hat, inv_std, mean, var });
                    }
                }
                Layer::Relu => {
                    h.mapv_inplace(|v| v.max(0.0));
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::Relu { output: h.clone() });
                    }
                }
                Layer::SetSplit => {
                    set_size = h.ncols();
                    let mut flat = Vec::with_capacity(h.len());
                    for row in h.rows() {
                        let mut obs = row.to_vec();
                        obs.sort_by(f64::total_cmp);
                        flat.extend(obs);
                    }
                    h = Array2::from_shape_vec((rows * set_size, 1), flat).expect("split shape");
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::SetSplit);
                    }
                }
                Layer::MeanPool => {
                    let q = h.ncols();
                    let mut pooled = Array2::zeros((rows, q));
                    for (b, mut out) in pooled.rows_mut().into_iter().enumerate() {
                        for i in 0..set_size {
                            out += &h.row(b * set_size + i);
                        }
                        out /= set_size as f64;
                    }
                    h = pooled;
                    if let Some(c) = caches.as_deref_mut() {
                        c.push(Cache::MeanPool { set_size });
                    }
                }
            }
        }
        h.column(0).to_owned()
    }

    /// Pre-sigmoid outputs. Batch-norm layers use the statistics of `x`.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x, None))
    }

    /// Per-row classifier probabilities. Training mode also updates the
    /// batch-norm running statistics.
    pub fn forward(&mut self, x: ArrayView2<'_, f64>, mode: Mode) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let z = match mode {
            Mode::Eval => self.run(x, None),
            Mode::Train => {
                let mut caches = Vec::new();
                let z = self.run(x, Some(&mut caches));
                self.update_running_stats(&caches, x.nrows());
                z
            }
        };
        Ok(z.mapv(sigmoid))
    }

    fn update_running_stats(&mut self, caches: &[Cache], rows: usize) {
        let mut bn_stats = caches.iter().filter_map(|c| match c {
            Cache::BatchNorm { mean, var, .. } => Some((mean, var)),
            _ => None,
        });
        let unbias = if rows > 1 { rows as f64 / (rows as f64 - 1.0) } else { 1.0 };
        for layer in &mut self.layers {
            if let Layer::BatchNorm(bn) = layer {
                let (mean, var) = bn_stats.next().expect("cache per batch-norm layer");
                for j in 0..bn.features {
                    bn.running_mean[j] = (1.0 - BN_MOMENTUM) * bn.running_mean[j] + BN_MOMENTUM * mean[j];
                    bn.running_var[j] = (1.0 - BN_MOMENTUM) * bn.running_var[j] + BN_MOMENTUM * var[j] * unbias;
                }
            }
        }
    }

    /// Negative classification objective without touching running statistics.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let z = self.logits(batch.x.view())?;
        Ok(loss_and_logit_grad(&z, &batch.labels).0)
    }

    /// Training-mode forward pass followed by exact backpropagation.
    pub fn backward(&mut self, batch: &Batch) -> Result<(f64, Gradients)> {
        self.check_input(&batch.x.view())?;
        if batch.labels.len() != batch.x.nrows() {
            return Err(Error::Shape("label count differs from batch size".into()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let z = self.run(batch.x.view(), Some(&mut caches));
        self.update_running_stats(&caches, batch.x.nrows());
        let (loss, dz) = loss_and_logit_grad(&z, &batch.labels);
        let mut grad = dz.insert_axis(Axis(1));
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches.iter()).rev() {
            match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let dw = input.t().dot(&grad);
                    let db = grad.sum_axis(Axis(0));
                    grads.push(db.into_raw_vec_and_offset().0);
                    grads.push(dw.as_standard_layout().iter().copied().collect());
                    if !std::ptr::eq(layer, self.first_param_layer()) {
                        grad = grad.dot(&d.weight_view().t());
                    }
                }
                (Layer::BatchNorm(bn), Cache::BatchNorm { x_hat, inv_std, .. }) => {
                    let n = grad.nrows() as f64;
                    let dbeta = grad.sum_axis(Axis(0));
                    let dgamma = (&grad * x_hat).sum_axis(Axis(0));
                    let gamma = ArrayView2::from_shape((1, bn.features), &bn.gamma).expect("gamma");
                    let dx_hat = &grad * &gamma;
                    let sum_dx_hat = dx_hat.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let sum_dx_hat_xhat = (&dx_hat * x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let scale = inv_std.mapv(|s| s / n).insert_axis(Axis(0));
                    grad = (dx_hat * n - &sum_dx_hat - x_hat * &sum_dx_hat_xhat) * &scale;
                    grads.push(dbeta.into_raw_vec_and_offset().0);
                    grads.push(dgamma.into_raw_vec_and_offset().0);
                }
                (Layer::Relu, Cache::Relu { output }) => {
                    grad.zip_mut_with(output, |g, o| {
                        if *o <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
                (Layer::MeanPool, Cache::MeanPool { set_size }) => {
                    let q = grad.ncols();
                    let mut expanded = Array2::zeros((grad.nrows() * set_size, q));
                    let inv = 1.0 / *set_size as f64;
                    for (r, mut row) in expanded.rows_mut().into_iter().enumerate() {
                        row.assign(&grad.row(r / set_size));
                        row *= inv;
                    }
                    grad = expanded;
                }
                (Layer::SetSplit, Cache::SetSplit) => break,
                _ => unreachable!("cache does not match layer"),
            }
        }
        grads.reverse();
        Ok((loss, Gradients(grads)))
    }

    fn first_param_layer(&self) -> &Layer {
        self.layers.iter().find(|l| matches!(l, Layer::Dense(_))).expect("network has a dense layer")
    }

    /// Activity (`output > 0`) of every ReLU unit over the batch, layer by
    /// layer. Two parameter settings with equal patterns lie in the same
    /// piecewise-smooth region of the loss.
    pub fn activation_pattern(&self, x: ArrayView2<'_, f64>) -> Result<Vec<bool>> {
        self.check_input(&x)?;
        let mut caches = Vec::new();
        self.run(x, Some(&mut caches));
        Ok(caches
            .iter()
            .filter_map(|c| match c {
                Cache::Relu { output } => Some(output.iter().map(|v| *v > 0.0).collect::<Vec<_>>()),
                _ => None,
            })
            .flatten()
            .collect())
    }

    /// Sets every parameter of the final dense layer to zero (output ≡ 0.5).
    pub fn zero_output_layer(&mut self) {
        if let Some(Layer::Dense(d)) = self.layers.iter_mut().rev().find(|l| matches!(l, Layer::Dense(_))) {
            d.weights.iter_mut().for_each(|w| *w = 0.0);
            d.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Loss `−[mean_{y=1} log D + mean_{y=0} log(1 − D)]` with `D` clamped to
/// `[1e-7, 1 − 1e-7]`, and its gradient with respect to the logits.
pub fn loss_and_logit_grad(z: &Array1<f64>, labels: &[f64]) -> (f64, Array1<f64>) {
    let n1 = labels.iter().filter(|l| **l == 1.0).count();
    let n0 = labels.len() - n1;
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    let mut grad = Array1::zeros(z.len());
    for (i, (zi, yi)) in z.iter().zip(labels).enumerate() {
        let d = sigmoid(*zi);
        let dc = d.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
        if *yi == 1.0 {
            sum1 += dc.ln();
            grad[i] = -(1.0 - d) / n1 as f64;
        } else {
            sum0 += (1.0 - dc).ln();
            grad[i] = d / n0 as f64;
        }
    }
    let mut loss = 0.0;
    if n1 > 0 {
        loss -= sum1 / n1 as f64;
    }
    if n0 > 0 {
        loss -= sum0 / n0 as f64;
    }
    (loss, grad)
}

/// Adam with a stepwise learning-rate decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub base_lr: f64,
    pub decay: f64,
    pub decay_every: u64,
    pub epsilon: f64,
    pub t: u64,
    #[serde(with = "hex_vecs")]
    pub m: Vec<Vec<f64>>,
    #[serde(with = "hex_vecs")]
    pub v: Vec<Vec<f64>>,
}

mod hex_vecs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::hex_f64s")] Vec<f64>);

    pub fn serialize<S: Serializer>(values: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Wrapped> = values.iter().map(|v| Wrapped(v.clone())).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let shapes: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            base_lr: 0.01,
            decay: 0.99,
            decay_every: 1000,
            epsilon: 1e-8,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    /// Learning rate used by step number `t` (1-based).
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.base_lr * self.decay.powi((t / self.decay_every) as i32)
    }

    /// One bias-corrected Adam update (descending on the loss).
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut params = net.params_mut();
        if params.len() != grads.0.len() || params.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match the network".into()));
        }
        self.t += 1;
        let lr = self.learning_rate(self.t);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(&grads.0).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() {
                return Err(Error::Shape("gradient block length mismatch".into()));
            }
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Network::build`].
pub fn build_network(arch: &Arch, input_dim: usize, rng: &mut RngStream) -> Result<Network> {
    Network::build(arch, input_dim, rng)
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.step(net, grads)
}

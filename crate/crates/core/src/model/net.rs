use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::layers::{self, ConvGeom, PoolGeom};
use super::spec::{Blob, LayerKind, NetParams};
use super::weights::WeightCollection;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::NDArray;

/// A minibatch: images `[n, channels, h, w]` and one label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: NDArray,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Concatenates batches along the example axis.
    pub fn concat(parts: &[Batch]) -> Result<Batch> {
        let first = parts.first().ok_or(Error::EmptyCollection)?;
        let tail = &first.images.shape()[1..];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if &p.images.shape()[1..] != tail {
                return Err(Error::ShapeMismatch {
                    left: first.images.shape().to_vec(),
                    right: p.images.shape().to_vec(),
                });
            }
            data.extend_from_slice(p.images.data());
            labels.extend_from_slice(&p.labels);
        }
        let mut shape = vec![labels.len()];
        shape.extend_from_slice(tail);
        Ok(Batch { images: NDArray::new(&shape, data)?, labels })
    }

    /// Splits into `k` consecutive parts of equal size.
    pub fn split(&self, k: usize) -> Result<Vec<Batch>> {
        let n = self.len();
        if k == 0 || n % k != 0 {
            return Err(Error::Scheme(format!("cannot split a batch of {n} into {k} equal parts")));
        }
        let part = n / k;
        let per = self.images.len() / n;
        let mut shape = self.images.shape().to_vec();
        shape[0] = part;
        (0..k)
            .map(|i| {
                Ok(Batch {
                    images: NDArray::new(&shape, self.images.data()[i * part * per..][..part * per].to_vec())?,
                    labels: self.labels[i * part..][..part].to_vec(),
                })
            })
            .collect()
    }
}

pub type BatchStream = Box<dyn Iterator<Item = Batch> + Send>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Classical momentum coefficient; 0 disables momentum.
    pub momentum: f64,
}

impl SgdConfig {
    pub fn plain(learning_rate: f64) -> Self {
        Self { learning_rate, momentum: 0.0 }
    }
}

struct ForwardPass {
    n: usize,
    loss: f64,
    probs: Vec<f64>,
    acts: Vec<Vec<f64>>,
    pool_args: Vec<Vec<usize>>,
    conv_cols: Vec<Vec<f64>>,
}

/// An instantiated, trainable network.
pub struct Net {
    params: NetParams,
    weights: WeightCollection,
    velocity: Option<WeightCollection>,
    sgd: SgdConfig,
    train_data: Option<BatchStream>,
    validation_data: Option<BatchStream>,
}

impl fmt::Debug for Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Net")
            .field("layers", &self.params.layers().len())
            .field("parameters", &self.weights.num_parameters())
            .field("sgd", &self.sgd)
            .finish_non_exhaustive()
    }
}

impl Net {
    /// Instantiates `params` with weights drawn from `seed`: zero biases, and
    /// kernels uniform in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`, each
    /// layer from its own stream derived from `(seed, layer index)`.
    pub fn build(params: &NetParams, seed: u64, sgd: SgdConfig) -> Result<Self> {
        let entries = params
            .weight_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (name, shapes))| {
                let tensors = match shapes.as_slice() {
                    [kernel, bias] => {
                        let (fan_in, fan_out) = match params.layers()[i].kind {
                            LayerKind::Conv { kernel: (kh, kw), num_filters } => {
                                (kernel[1] * kh * kw, num_filters * kh * kw)
                            }
                            _ => (kernel[1], kernel[0]),
                        };
                        let s = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                        let mut stream = rng::stream(seed, &[rng::TAG_INIT, i as u64]);
                        let len: usize = kernel.iter().product();
                        let data = (0..len).map(|_| stream.random_range(-s..=s)).collect();
                        vec![NDArray::new(kernel, data)?, NDArray::zeros(bias)?]
                    }
                    _ => Vec::new(),
                };
                Ok((name, tensors))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: params.clone(),
            weights: WeightCollection::new(entries),
            velocity: None,
            sgd,
            train_data: None,
            validation_data: None,
        })
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn sgd(&self) -> SgdConfig {
        self.sgd
    }

    pub fn set_training_data(&mut self, data: BatchStream) {
        self.train_data = Some(data);
    }

    pub fn set_validation_data(&mut self, data: BatchStream) {
        self.validation_data = Some(data);
    }

    /// Deep copy of the current weights.
    pub fn get_weights(&self) -> WeightCollection {
        self.weights.clone()
    }

    pub fn weights(&self) -> &WeightCollection {
        &self.weights
    }

    /// Replaces the weights. Momentum state, if any, is kept.
    pub fn set_weights(&mut self, weights: &WeightCollection) -> Result<()> {
        self.weights.check_compatible(weights)?;
        self.weights = weights.clone();
        Ok(())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let [c, h, w] = self.params.input_dims();
        let n = batch.labels.len();
        if n == 0 || batch.images.shape() != [n, c, h, w] {
            return Err(Error::BatchMismatch(format!(
                "images {:?} with {n} labels, network expects [n, {c}, {h}, {w}]",
                batch.images.shape()
            )));
        }
        let classes = self.params.num_classes();
        if let Some(&bad) = batch.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::BatchMismatch(format!("label {bad} outside [0, {classes})")));
        }
        Ok(())
    }

    fn run_forward(&self, batch: &Batch) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let p = &self.params;
        let n = batch.len();
        let count = p.layers().len();
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); count];
        let mut pool_args: Vec<Vec<usize>> = vec![Vec::new(); count];
        let mut conv_cols: Vec<Vec<f64>> = vec![Vec::new(); count];
        let mut loss = 0.0;
        let mut probs = Vec::new();
        for (i, layer) in p.layers().iter().enumerate() {
            let inputs = p.input_indices(i);
            let out = match layer.kind {
                LayerKind::Data { .. } => batch.images.data().to_vec(),
                LayerKind::Label { .. } => Vec::new(),
                LayerKind::Conv { kernel: (kh, kw), num_filters } => {
                    let g = conv_geom(p.blob(inputs[0]), num_filters, kh, kw);
                    let w = self.weights.layer(i);
                    let (out, cols) = layers::conv_forward(&acts[inputs[0]], n, &g, w[0].data(), w[1].data());
                    conv_cols[i] = cols;
                    out
                }
                LayerKind::Pool { kernel: (kh, kw), stride: (sh, sw) } => {
                    let g = pool_geom(p.blob(inputs[0]), kh, kw, sh, sw);
                    let (out, arg) = layers::pool_forward(&acts[inputs[0]], n, &g);
                    pool_args[i] = arg;
                    out
                }
                LayerKind::Linear { num_outputs } => {
                    let fan_in = p.blob(inputs[0]).size();
                    let w = self.weights.layer(i);
                    layers::linear_forward(&acts[inputs[0]], n, fan_in, num_outputs, w[0].data(), w[1].data())
                }
                LayerKind::Relu => layers::relu_forward(&acts[inputs[0]]),
                LayerKind::SoftmaxWithLoss => {
                    let classes = p.blob(inputs[0]).size();
                    let (l, pr) = layers::softmax_loss_forward(&acts[inputs[0]], &batch.labels, classes);
                    loss = l;
                    probs = pr;
                    Vec::new()
                }
            };
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("forward pass"));
            }
            acts[i] = out;
        }
        if !loss.is_finite() || !probs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("loss"));
        }
        Ok(ForwardPass { n, loss, probs, acts, pool_args, conv_cols })
    }

    /// Batch-mean cross-entropy and the `[n, classes]` softmax probabilities.
    pub fn forward(&self, batch: &Batch) -> Result<(f64, NDArray)> {
        let fp = self.run_forward(batch)?;
        let probs = NDArray::new(&[fp.n, self.params.num_classes()], fp.probs)?;
        Ok((fp.loss, probs))
    }

    /// Gradient of the batch-mean loss, shaped like [`Net::get_weights`].
    pub fn backward(&self, batch: &Batch) -> Result<WeightCollection> {
        Ok(self.loss_and_gradient(batch)?.1)
    }

    pub fn loss_and_gradient(&self, batch: &Batch) -> Result<(f64, WeightCollection)> {
        let fp = self.run_forward(batch)?;
        let p = &self.params;
        let n = fp.n;
        let count = p.layers().len();
        let mut grads = self.weights.clone();
        for t in grads.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        // Gradient w.r.t. each layer's output; summed over consumers.
        let mut douts: Vec<Option<Vec<f64>>> = vec![None; count];
        let data_idx = p.data_index();
        let label_idx = p.label_index();
        let needs_grad = |j: usize| j != data_idx && j != label_idx;
        let deposit = |douts: &mut Vec<Option<Vec<f64>>>, j: usize, g: Vec<f64>| match &mut douts[j] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        };

        for i in (0..count).rev() {
            let inputs = p.input_indices(i);
            let layer = &p.layers()[i];
            if let LayerKind::SoftmaxWithLoss = layer.kind {
                let classes = p.blob(inputs[0]).size();
                let d = layers::softmax_loss_backward(&fp.probs, &batch.labels, classes);
                if needs_grad(inputs[0]) {
                    deposit(&mut douts, inputs[0], d);
                }
                continue;
            }
            let Some(dout) = douts[i].take() else { continue };
            match layer.kind {
                LayerKind::Conv { kernel: (kh, kw), num_filters } => {
                    let g = conv_geom(p.blob(inputs[0]), num_filters, kh, kw);
                    let kernel = self.weights.layer(i)[0].data();
                    let gl = grads.layer_mut(i);
                    let (dk, db) = split_pair(gl);
                    let dx = layers::conv_backward(
                        &dout,
                        &fp.conv_cols[i],
                        n,
                        &g,
                        kernel,
                        dk.data_mut(),
                        db.data_mut(),
                        needs_grad(inputs[0]),
                    );
                    if let Some(dx) = dx {
                        deposit(&mut douts, inputs[0], dx);
                    }
                }
                LayerKind::Pool { .. } => {
                    if needs_grad(inputs[0]) {
                        let dx = layers::pool_backward(&dout, &fp.pool_args[i], fp.acts[inputs[0]].len());
                        deposit(&mut douts, inputs[0], dx);
                    }
                }
                LayerKind::Linear { num_outputs } => {
                    let fan_in = p.blob(inputs[0]).size();
                    let w = self.weights.layer(i)[0].data();
                    let gl = grads.layer_mut(i);
                    let (dw, db) = split_pair(gl);
                    let dx = layers::linear_backward(
                        &dout,
                        &fp.acts[inputs[0]],
                        n,
                        fan_in,
                        num_outputs,
                        w,
                        dw.data_mut(),
                        db.data_mut(),
                        needs_grad(inputs[0]),
                    );
                    if let Some(dx) = dx {
                        deposit(&mut douts, inputs[0], dx);
                    }
                }
                LayerKind::Relu => {
                    if needs_grad(inputs[0]) {
                        let dx = layers::relu_backward(&dout, &fp.acts[i]);
                        deposit(&mut douts, inputs[0], dx);
                    }
                }
                LayerKind::Data { .. } | LayerKind::Label { .. } | LayerKind::SoftmaxWithLoss => {}
            }
        }
        for t in grads.tensors() {
            t.check_finite("backward pass")?;
        }
        Ok((fp.loss, grads))
    }

    /// Applies one SGD update with a precomputed gradient.
    pub fn apply_gradient(&mut self, grad: &WeightCollection) -> Result<()> {
        self.weights.check_compatible(grad)?;
        let SgdConfig { learning_rate: lr, momentum: mu } = self.sgd;
        if mu == 0.0 {
            for (w, g) in self.weights.tensors_mut().zip(grad.tensors()) {
                w.sub_scaled_in_place(g, lr)?;
            }
            return Ok(());
        }
        let velocity = self.velocity.get_or_insert_with(|| {
            let mut v = grad.clone();
            v.tensors_mut().for_each(|t| t.data_mut().iter_mut().for_each(|x| *x = 0.0));
            v
        });
        // v ← μv − ηg ; w ← w + v
        for ((w, v), g) in self.weights.tensors_mut().zip(velocity.tensors_mut()).zip(grad.tensors()) {
            for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = mu * *vi - lr * gi;
                *wi += *vi;
            }
            w.check_finite("sgd update")?;
        }
        Ok(())
    }

    /// One SGD step on an explicit batch; returns the loss before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(batch)?;
        self.apply_gradient(&grad)?;
        Ok(loss)
    }

    /// Runs `num_steps` SGD updates on consecutive batches of the attached
    /// training stream.
    pub fn train(&mut self, num_steps: usize) -> Result<()> {
        if num_steps == 0 {
            return Ok(());
        }
        let mut data = self.train_data.take().ok_or(Error::NoData("training"))?;
        let result = (|| {
            for _ in 0..num_steps {
                let batch = data.next().ok_or(Error::NoData("training"))?;
                self.step(&batch)?;
            }
            Ok(())
        })();
        self.train_data = Some(data);
        result
    }

    /// Fraction of correctly classified examples over the next `num_steps`
    /// validation batches.
    pub fn test(&mut self, num_steps: usize) -> Result<f64> {
        let mut data = self.validation_data.take().ok_or(Error::NoData("validation"))?;
        let result = (|| {
            let (mut correct, mut total) = (0usize, 0usize);
            for _ in 0..num_steps {
                let batch = data.next().ok_or(Error::NoData("validation"))?;
                let (hits, n) = self.count_correct(&batch)?;
                correct += hits;
                total += n;
            }
            Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
        })();
        self.validation_data = Some(data);
        result
    }

    /// `(correct, total)` top-1 predictions on one batch.
    pub fn count_correct(&self, batch: &Batch) -> Result<(usize, usize)> {
        let (_, probs) = self.forward(batch)?;
        let predicted = probs.argmax_rows()?;
        let hits = predicted.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
        Ok((hits, batch.len()))
    }

    /// Fingerprint of every piecewise-linear branch taken on `batch` (ReLU
    /// on/off and max-pool winners). Finite-difference checks use it to skip
    /// perturbations that cross a kink.
    #[doc(hidden)]
    pub fn branch_signature(&self, batch: &Batch) -> Result<u64> {
        let fp = self.run_forward(batch)?;
        let mut h = 0u64;
        for (i, layer) in self.params.layers().iter().enumerate() {
            match layer.kind {
                LayerKind::Relu => {
                    for &v in &fp.acts[i] {
                        h = rng::mix64(h ^ u64::from(v > 0.0));
                    }
                }
                LayerKind::Pool { .. } => {
                    for &a in &fp.pool_args[i] {
                        h = rng::mix64(h ^ a as u64);
                    }
                }
                _ => {}
            }
        }
        Ok(h)
    }

    /// Mutable weight access for tests and finite-difference oracles.
    #[doc(hidden)]
    pub fn weights_mut(&mut self) -> &mut WeightCollection {
        &mut self.weights
    }
}

fn split_pair(v: &mut [NDArray]) -> (&mut NDArray, &mut NDArray) {
    let (a, b) = v.split_at_mut(1);
    (&mut a[0], &mut b[0])
}

fn conv_geom(input: Blob, f: usize, kh: usize, kw: usize) -> ConvGeom {
    match input {
        Blob::Image { channels, h, w } => ConvGeom { c: channels, h, w, f, kh, kw },
        _ => unreachable!("validated graph"),
    }
}

fn pool_geom(input: Blob, kh: usize, kw: usize, sh: usize, sw: usize) -> PoolGeom {
    match input {
        Blob::Image { channels, h, w } => PoolGeom { c: channels, h, w, kh, kw, sh, sw },
        _ => unreachable!("validated graph"),
    }
}

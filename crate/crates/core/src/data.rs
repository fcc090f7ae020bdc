//! Datasets, synthetic generation, sharding and batch streams.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng;
use crate::tensor::NDArray;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: NDArray,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// `images` must be `[n, channels, h, w]` with one label per image.
    pub fn new(images: NDArray, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Dataset(format!("images must be rank 4, got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Dataset("num_classes must be >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self { images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `[channels, h, w]`
    pub fn dims(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn images(&self) -> &NDArray {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copies the given examples, in order, into a batch.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let per = self.images.len() / self.len();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..][..per]);
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.dims();
        let images = NDArray::new(&[indices.len(), c, h, w], data).expect("gathered from a valid dataset");
        Batch { images, labels }
    }

    /// Cycles through the dataset in storage order in batches of `b`; the
    /// last batch of each pass may be short. Used for evaluation.
    pub fn sequential_batches(self: Arc<Self>, b: usize) -> Result<SequentialBatches> {
        if b == 0 {
            return Err(Error::BatchTooLarge { b, size: self.len() });
        }
        Ok(SequentialBatches { dataset: self, b, pos: 0 })
    }

    /// Number of sequential batches of size `b` covering the dataset once.
    pub fn batches_per_pass(&self, b: usize) -> usize {
        self.len().div_ceil(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    /// `[channels, h, w]`
    pub dims: [usize; 3],
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Draw `split` of the distribution: class means depend only on the
    /// spec, so different splits (e.g. 0 = train, 1 = test) share them.
    /// Example `i` has class `i % num_classes`.
    pub fn generate_split(&self, per_class: usize, split: u64) -> Result<Dataset> {
        if per_class == 0 || self.num_classes == 0 {
            return Err(Error::Dataset("per_class and num_classes must be >= 1".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Dataset(format!("separation must be >= 0, got {}", self.separation)));
        }
        let means = self.class_means();
        let dim = self.dims.iter().product::<usize>();
        let n = per_class * self.num_classes;
        let mut stream = rng::stream(self.seed, &[rng::TAG_SYNTH, 1, split]);
        let mut data = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % self.num_classes;
            let mean = &means[class * dim..][..dim];
            data.extend(mean.iter().map(|&m| m + stream.sample::<f64, _>(StandardNormal)));
            labels.push(class);
        }
        let [c, h, w] = self.dims;
        Dataset::new(NDArray::new(&[n, c, h, w], data)?, labels, self.num_classes)
    }

    pub fn generate(&self, per_class: usize) -> Result<Dataset> {
        self.generate_split(per_class, 0)
    }

    /// Class means at pairwise distance exactly `separation` when the
    /// dimension allows orthogonal directions; otherwise random unit
    /// directions scaled the same way. Directions start as spatially
    /// smoothed white noise, so each class has a blob-like template.
    fn class_means(&self) -> Vec<f64> {
        let dim = self.dims.iter().product::<usize>();
        let k = self.num_classes;
        let mut stream = rng::stream(self.seed, &[rng::TAG_SYNTH, 0]);
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
        for _ in 0..k {
            let mut v: Vec<f64> = (0..dim).map(|_| stream.sample(StandardNormal)).collect();
            let [_, h, w] = self.dims;
            for plane in v.chunks_exact_mut(h * w) {
                smooth_plane(plane, h, w);
            }
            if dirs.len() < dim {
                for d in &dirs {
                    let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(d).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
            v.iter_mut().for_each(|a| *a /= norm);
            dirs.push(v);
        }
        let scale = self.separation / core::f64::consts::SQRT_2;
        dirs.into_iter().flatten().map(|a| a * scale).collect()
    }
}

/// Two passes of a radius-2 box blur along each axis, clamped at the edges.
fn smooth_plane(plane: &mut [f64], h: usize, w: usize) {
    const R: usize = 2;
    let mut tmp = plane.to_vec();
    for _ in 0..2 {
        for y in 0..h {
            for x in 0..w {
                let (lo, hi) = (x.saturating_sub(R), (x + R).min(w - 1));
                tmp[y * w + x] = plane[y * w + lo..=y * w + hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            }
        }
        for y in 0..h {
            let (lo, hi) = (y.saturating_sub(R), (y + R).min(h - 1));
            for x in 0..w {
                plane[y * w + x] = (lo..=hi).map(|yy| tmp[yy * w + x]).sum::<f64>() / (hi - lo + 1) as f64;
            }
        }
    }
}

/// Gaussian class clusters with unit within-class variance.
pub fn generate_synthetic(
    num_classes: usize,
    dims: [usize; 3],
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    SyntheticSpec { num_classes, dims, separation, seed }.generate(per_class)
}

/// A contiguous range of a seeded permutation of the parent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub worker: usize,
    order: Arc<Vec<usize>>,
    start: usize,
    end: usize,
}

impl Shard {
    pub fn indices(&self) -> &[usize] {
        &self.order[self.start..self.end]
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Shuffles `[0, n)` with `seed`, then cuts it into `k` contiguous pieces
/// whose sizes differ by at most one (larger pieces first).
pub fn shard(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Shard>> {
    let n = dataset.len();
    if k == 0 || k > n {
        return Err(Error::TooManyShards { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_SHARD]));
    let order = Arc::new(order);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|worker| {
            let len = base + usize::from(worker < extra);
            let s = Shard { worker, order: order.clone(), start, end: start + len };
            start += len;
            s
        })
        .collect())
}

/// Endless stream of size-`b` batches from one shard. Each epoch visits the
/// shard in a fresh order drawn from `(seed, epoch)`; the trailing partial
/// batch of an epoch is dropped.
#[derive(Debug, Clone)]
pub struct BatchIter {
    dataset: Arc<Dataset>,
    indices: Vec<usize>,
    b: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchIter {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn start_epoch(&mut self) {
        self.order.clear();
        self.order.extend_from_slice(&self.indices);
        self.order.shuffle(&mut rng::stream(self.seed, &[rng::TAG_EPOCH, self.epoch]));
        self.pos = 0;
    }
}

impl Iterator for BatchIter {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos + self.b > self.order.len() {
            self.epoch += 1;
            self.start_epoch();
        }
        let batch = self.dataset.gather(&self.order[self.pos..self.pos + self.b]);
        self.pos += self.b;
        Some(batch)
    }
}

pub fn batch_iterator(dataset: Arc<Dataset>, shard: &Shard, b: usize, seed: u64) -> Result<BatchIter> {
    if b == 0 || b > shard.len() {
        return Err(Error::BatchTooLarge { b, size: shard.len() });
    }
    let mut it = BatchIter {
        dataset,
        indices: shard.indices().to_vec(),
        b,
        seed,
        epoch: 0,
        order: Vec::with_capacity(shard.len()),
        pos: 0,
    };
    it.start_epoch();
    Ok(it)
}

#[derive(Debug, Clone)]
pub struct SequentialBatches {
    dataset: Arc<Dataset>,
    b: usize,
    pos: usize,
}

impl Iterator for SequentialBatches {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let n = self.dataset.len();
        let end = (self.pos + self.b).min(n);
        let idx: Vec<usize> = (self.pos..end).collect();
        self.pos = if end == n { 0 } else { end };
        Some(self.dataset.gather(&idx))
    }
}

//! Dense row-major `f64` tensors.
//!
//! An [`NDArray`] is a flat `Vec<f64>` plus an explicit shape. There are no
//! views or strides: slicing copies. Every operation that can produce a value
//! checks its output and reports [`Error::NonFinite`] instead of letting NaN or
//! infinity propagate.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NDArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::BadExtent(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

fn ensure_finite(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl NDArray {
    /// Builds a tensor from row-major contents.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected = checked_len(shape)?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        ensure_finite(&data, "create")?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let len = checked_len(shape)?;
        ensure_finite(&[value], "create")?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut out = Self::zeros(&[n, n])?;
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        Ok(out)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for the owning worker's in-place updates. Callers are
    /// responsible for keeping values finite; see [`NDArray::check_finite`].
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        ensure_finite(&self.data, what)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn elementwise(&self, other: &Self, op: ElementwiseOp) -> Result<Self> {
        self.same_shape(other)?;
        let f: fn(f64, f64) -> f64 = match op {
            ElementwiseOp::Add => |a, b| a + b,
            ElementwiseOp::Sub => |a, b| a - b,
            ElementwiseOp::Mul => |a, b| a * b,
        };
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ensure_finite(&data, "elementwise")?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|&a| a * c).collect();
        ensure_finite(&data, "scale")?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// `self -= c * other`, in place. On a non-finite result `self` is left
    /// modified and an error is returned; the owner should discard it.
    pub fn sub_scaled_in_place(&mut self, other: &Self, c: f64) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a -= c * b;
        }
        self.check_finite("sgd update")
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = rank2(self)?;
        let (k2, n) = rank2(other)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut data[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        ensure_finite(&data, "matmul")?;
        Ok(Self {
            shape: vec![m, n],
            data,
        })
    }

    /// Index of the largest entry in each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let (_, c) = rank2(self)?;
        Ok(self
            .data
            .chunks_exact(c)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn rank2(a: &NDArray) -> Result<(usize, usize)> {
    match *a.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(Error::Rank {
            expected: 2,
            shape: a.shape.clone(),
        }),
    }
}

/// Entrywise arithmetic mean. The sum accumulates in slice order, so callers
/// that pass workers in ascending id order get a reproducible result.
pub fn mean_collection(items: &[NDArray]) -> Result<NDArray> {
    mean_of(items.iter())
}

pub(crate) fn mean_of<'a, I>(items: I) -> Result<NDArray>
where
    I: IntoIterator<Item = &'a NDArray>,
{
    let mut items = items.into_iter();
    let first = items.next().ok_or(Error::EmptyCollection)?;
    let mut acc = first.data.clone();
    let mut count = 1usize;
    for item in items {
        first.same_shape(item)?;
        for (a, &b) in acc.iter_mut().zip(&item.data) {
            *a += b;
        }
        count += 1;
    }
    let k = count as f64;
    for a in &mut acc {
        *a /= k;
    }
    ensure_finite(&acc, "mean")?;
    Ok(NDArray {
        shape: first.shape.clone(),
        data: acc,
    })
}

/// Dot product with four interleaved accumulators. The summation order is
/// fixed, so results are reproducible across runs.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{mean_of, NDArray};

/// Layer name → list of tensors, in layer order. Parameterless layers map to
/// an empty list. This is the unit that gets broadcast, collected and averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCollection {
    entries: Vec<(String, Vec<NDArray>)>,
}

impl WeightCollection {
    pub fn new(entries: Vec<(String, Vec<NDArray>)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, layer: &str) -> Option<&[NDArray]> {
        self.entries
            .iter()
            .find(|(name, _)| name == layer)
            .map(|(_, t)| t.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[NDArray])> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t.as_slice()))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut NDArray> {
        self.entries.iter_mut().flat_map(|(_, t)| t.iter_mut())
    }

    pub(crate) fn layer_mut(&mut self, index: usize) -> &mut Vec<NDArray> {
        &mut self.entries[index].1
    }

    pub(crate) fn layer(&self, index: usize) -> &[NDArray] {
        &self.entries[index].1
    }

    pub fn tensors(&self) -> impl Iterator<Item = &NDArray> {
        self.entries.iter().flat_map(|(_, t)| t.iter())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(NDArray::len).sum()
    }

    /// Same layer names in the same order, and identical tensor shapes.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::WeightMismatch(format!(
                "{} layers vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(Error::WeightMismatch(format!("layer {na:?} vs {nb:?}")));
            }
            if ta.len() != tb.len() || ta.iter().zip(tb).any(|(a, b)| a.shape() != b.shape()) {
                return Err(Error::WeightMismatch(format!("tensor shapes differ in layer {na:?}")));
            }
        }
        Ok(())
    }

    /// Per-layer, per-tensor entrywise mean. Items are summed in slice order.
    pub fn mean(items: &[WeightCollection]) -> Result<WeightCollection> {
        let first = items.first().ok_or(Error::EmptyCollection)?;
        for item in &items[1..] {
            first.check_compatible(item)?;
        }
        let entries = first
            .entries
            .iter()
            .enumerate()
            .map(|(li, (name, tensors))| {
                let averaged = (0..tensors.len())
                    .map(|ti| mean_of(items.iter().map(|w| &w.entries[li].1[ti])))
                    .collect::<Result<Vec<_>>>()?;
                Ok((name.clone(), averaged))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightCollection { entries })
    }

    /// Largest entrywise relative deviation `|a-b| / max(|a|, |b|)` between two
    /// compatible collections (0/0 counts as 0).
    pub fn max_relative_deviation(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut worst = 0.0f64;
        for (a, b) in self.tensors().zip(other.tensors()) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                let scale = x.abs().max(y.abs());
                if scale > 0.0 {
                    worst = worst.max((x - y).abs() / scale);
                }
            }
        }
        Ok(worst)
    }

    /// Bitwise equality of every entry.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.check_compatible(other).is_ok()
            && self
                .tensors()
                .zip(other.tensors())
                .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

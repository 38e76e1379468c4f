use std::collections::HashSet;

use crate::error::{DcotError, Result};
use crate::tensor::{DenseTensor, Shape};

/// The observed entries `Ω` of a tensor together with their values.
///
/// Indices are 0-based and stored as linear offsets into the shape's
/// first-mode-fastest order; entries keep insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    shape: Shape,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(shape: Shape, entries: impl IntoIterator<Item = (Vec<usize>, f64)>) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (idx, v) in entries {
            indices.push(shape.linear_index(&idx)?);
            values.push(v);
        }
        Self::from_linear(shape, indices, values)
    }

    pub fn from_linear(shape: Shape, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(DcotError::InvalidObservations("index and value counts differ".into()));
        }
        let n = shape.numel();
        let mut seen = HashSet::with_capacity(indices.len());
        for (&l, &v) in indices.iter().zip(&values) {
            if l >= n {
                return Err(DcotError::IndexOutOfRange(format!("linear index {l} outside {shape:?}")));
            }
            if !seen.insert(l) {
                return Err(DcotError::InvalidObservations(format!(
                    "duplicate entry at {:?}",
                    shape.multi_index(l)
                )));
            }
            if !v.is_finite() {
                return Err(DcotError::InvalidObservations(format!(
                    "non-finite value at {:?}",
                    shape.multi_index(l)
                )));
            }
        }
        Ok(ObservationSet { shape, indices, values })
    }

    pub fn empty(shape: Shape) -> Self {
        ObservationSet { shape, indices: Vec::new(), values: Vec::new() }
    }

    /// Every entry of a dense tensor; NaN entries are treated as missing.
    pub fn from_dense(t: &DenseTensor) -> Self {
        let (indices, values) = t
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(l, &v)| (l, v))
            .unzip();
        ObservationSet { shape: t.shape().clone(), indices, values }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn linear_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Entries as (multi-index, value) pairs.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.iter().map(|(l, v)| (self.shape.multi_index(l), v))
    }

    /// Keeps the entries whose position (in storage order) satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let (indices, values) = self
            .iter()
            .enumerate()
            .filter(|(k, _)| keep(*k))
            .map(|(_, e)| e)
            .unzip();
        ObservationSet { shape: self.shape.clone(), indices, values }
    }

    /// Dense mask: `Some(value)` where observed.
    pub fn dense_lookup(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.shape.numel()];
        for (l, v) in self.iter() {
            out[l] = Some(v);
        }
        out
    }

    pub fn frob_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }

    /// Dense tensor with observed values in place and `fill` elsewhere.
    pub fn to_dense(&self, fill: f64) -> DenseTensor {
        let mut t = DenseTensor::filled(self.shape.clone(), fill);
        for (l, v) in self.iter() {
            t.data_mut()[l] = v;
        }
        t
    }

    /// Checks family-specific value domains.
    pub fn check_values(&self, check: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        match self.iter().find(|&(_, v)| !check(v)) {
            Some((l, v)) => Err(DcotError::InvalidObservations(format!(
                "value {v} at {:?} is not {what}",
                self.shape.multi_index(l)
            ))),
            None => Ok(()),
        }
    }
}

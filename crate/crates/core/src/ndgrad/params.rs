use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::{DenseArray, NdError};

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: DenseArray,
    pub grad: Vec<f64>,
}

/// Named, ordered collection of trainable arrays.
///
/// Each set carries an identity used to route gradients from a graph back
/// to it; clones get a new identity, so a target-network copy never receives
/// the online network's gradients.
#[derive(Debug)]
pub struct ParamSet {
    uid: u64,
    params: Vec<Param>,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        Self {
            uid: fresh_uid(),
            params: self.params.clone(),
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value == b.value)
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            uid: fresh_uid(),
            params: Vec::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseArray) -> usize {
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    /// Uniform Glorot initialisation, `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
        self.add(name, DenseArray::matrix(fan_in, fan_out, data).expect("sized"))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn value(&self, i: usize) -> &DenseArray {
        &self.params[i].value
    }

    pub fn value_mut(&mut self, i: usize) -> &mut DenseArray {
        &mut self.params[i].value
    }

    pub fn grad(&self, i: usize) -> &[f64] {
        &self.params[i].grad
    }

    pub fn grad_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.params[i].grad
    }

    pub fn name(&self, i: usize) -> &str {
        &self.params[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<(), NdError> {
        self.check_layout(other)?;
        for (d, s) in self.params.iter_mut().zip(&other.params) {
            d.value.data_mut().copy_from_slice(s.value.data());
        }
        Ok(())
    }

    /// `self ← tau · online + (1 − tau) · self`, elementwise. Evaluated as
    /// `t + tau · (o − t)` so equal sets stay bit-identical; `tau = 1` copies.
    pub fn soft_update_from(&mut self, online: &ParamSet, tau: f64) -> Result<(), NdError> {
        self.check_layout(online)?;
        if tau == 1.0 {
            return self.copy_values_from(online);
        }
        for (d, s) in self.params.iter_mut().zip(&online.params) {
            for (t, &o) in d.value.data_mut().iter_mut().zip(s.value.data()) {
                *t += tau * (o - *t);
            }
        }
        Ok(())
    }

    fn check_layout(&self, other: &ParamSet) -> Result<(), NdError> {
        if self.params.len() != other.params.len() {
            return Err(NdError::Shape {
                op: "param layout",
                lhs: vec![self.params.len()],
                rhs: vec![other.params.len()],
            });
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.value.shape() != b.value.shape() {
                return Err(NdError::Shape {
                    op: "param layout",
                    lhs: a.value.shape().to_vec(),
                    rhs: b.value.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Adds every parameter of `other` under `prefix`, returning the index
    /// offset of the first one.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) -> usize {
        let base = self.params.len();
        for p in &other.params {
            self.add(format!("{prefix}{}", p.name), p.value.clone());
        }
        base
    }

    /// Parameters whose name starts with `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamSet {
        let mut out = ParamSet::new();
        for p in &self.params {
            if let Some(rest) = p.name.strip_prefix(prefix) {
                out.add(rest, p.value.clone());
            }
        }
        out
    }
}

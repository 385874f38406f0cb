use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Vec<f64>,
}

/// Named parameter tensors, each paired with a gradient buffer of the same shape.
///
/// Tensors are row-major. Shapes are fixed once a tensor is added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a `rows x cols` tensor with the given initial values.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "tensor value does not match its shape");
        let grad = vec![0.0; value.len()];
        self.tensors.push(Tensor {
            name: name.into(),
            rows,
            cols,
            value,
            grad,
        });
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.tensors[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        let t = &self.tensors[id.0];
        (t.rows, t.cols)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].grad
    }

    /// Value and gradient of one tensor borrowed together.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&[f64], &mut [f64]) {
        let t = &mut self.tensors[id.0];
        (&t.value, &mut t.grad)
    }

    /// Value and gradient of one tensor, both mutable.
    pub fn split_mut(&mut self, id: ParamId) -> (&mut [f64], &mut [f64]) {
        let t = &mut self.tensors[id.0];
        (&mut t.value, &mut t.grad)
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Looks a tensor up by name.
    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    /// All parameter values concatenated in tensor order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.value.iter().copied()).collect()
    }

    /// All gradients concatenated in tensor order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.grad.iter().copied()).collect()
    }

    /// Overwrites every value from a flat vector laid out like [`flat_values`](Self::flat_values).
    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::config(format!(
                "flat parameter vector has {} entries, store holds {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.value.len();
            t.value.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable access to the scalar at a flat index. Used by finite-difference checks.
    pub fn flat_value_mut(&mut self, mut index: usize) -> &mut f64 {
        for t in &mut self.tensors {
            if index < t.value.len() {
                return &mut t.value[index];
            }
            index -= t.value.len();
        }
        panic!("flat index out of range");
    }

    /// Plain-text dump, one tensor per line. Debugging aid only.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for t in &self.tensors {
            let _ = write!(out, "{} {}x{}:", t.name, t.rows, t.cols);
            for v in &t.value {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    /// Name of the first tensor holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.value.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip_and_grads() {
        let mut store = ParamStore::new();
        let a = store.add("a", 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = store.add("b", 1, 2, vec![5.0, 6.0]);
        assert_eq!(store.num_scalars(), 6);
        assert_eq!(store.grad(a).len(), store.value(a).len());
        assert_eq!(store.grad(b), &[0.0, 0.0]);

        let flat = store.flat_values();
        *store.flat_value_mut(4) = -1.0;
        assert_eq!(store.value(b), &[-1.0, 6.0]);
        store.set_flat_values(&flat).unwrap();
        assert_eq!(store.value(b), &[5.0, 6.0]);
        assert!(store.set_flat_values(&flat[..3]).is_err());
        assert_eq!(store.find("b"), Some(b));
        assert!(store.dump().contains("a 2x2: 1 2 3 4"));
    }
}

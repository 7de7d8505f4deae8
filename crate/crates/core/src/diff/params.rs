use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub value: RealMatrix,
    pub grad: RealMatrix,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: RealMatrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::ContractViolation(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.clone(), id.0);
        let grad = Array2::zeros(value.dim());
        self.tensors.push(ParamTensor { name, value, grad });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &RealMatrix {
        &self.tensors[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut RealMatrix {
        &mut self.tensors[id.0].value
    }

    pub fn tensor(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.tensors.iter().map(|t| Array2::zeros(t.value.dim())).collect())
    }

    pub fn clear_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &Grads, scale: f64) {
        assert_eq!(grads.0.len(), self.tensors.len(), "gradient buffer does not match parameter set");
        for (t, g) in self.tensors.iter_mut().zip(&grads.0) {
            t.grad.scaled_add(scale, g);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in &mut self.tensors {
                t.grad.mapv_inplace(|g| g * s);
            }
        }
        norm
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        for t in &mut self.tensors {
            let src = other
                .id(&t.name)
                .map(|id| other.get(id))
                .ok_or_else(|| Error::Format(format!("missing parameter `{}`", t.name)))?;
            if src.dim() != t.value.dim() {
                return Err(Error::InvalidDimension(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    t.name,
                    src.dim(),
                    t.value.dim()
                )));
            }
            t.value.assign(src);
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Grads(Vec<RealMatrix>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &RealMatrix {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut RealMatrix {
        &mut self.0[id.0]
    }

    pub fn add(&mut self, id: ParamId, g: &RealMatrix) {
        self.0[id.0] += g;
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            g.mapv_inplace(|v| v * s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.add("w", array![[1.0]]).unwrap();
        assert!(p.add("w", array![[2.0]]).is_err());
    }

    #[test]
    fn clipping_preserves_direction_and_never_grows() {
        let mut p = ParamSet::new();
        let a = p.add("a", array![[0.0, 0.0]]).unwrap();
        let b = p.add("b", array![[0.0]]).unwrap();
        let mut g = p.zero_grads();
        g.add(a, &array![[3.0, 4.0]]);
        g.add(b, &array![[12.0]]);
        p.accumulate(&g, 1.0);
        let before = p.grad_norm();
        assert_eq!(p.clip_grad_norm(5.0), before);
        assert!((p.grad_norm() - 5.0).abs() < 1e-12);
        let ratio = p.tensor(a).grad[[0, 0]] / p.tensor(b).grad[[0, 0]];
        assert!((ratio - 0.25).abs() < 1e-12);

        // below threshold: untouched
        p.clip_grad_norm(10.0);
        assert!((p.grad_norm() - 5.0).abs() < 1e-12);
    }
}

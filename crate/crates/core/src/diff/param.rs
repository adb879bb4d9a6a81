use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Mat, Var};
use crate::error::{Error, Result};

/// A named, fixed-shape parameter matrix with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    name: String,
    value: Mat,
    grad: Mat,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Mat) -> Self {
        let grad = Array2::zeros(value.dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }

    pub fn value(&self) -> ArrayView2<'_, f64> {
        self.value.view()
    }

    /// Mutable view; the shape cannot change through it.
    pub fn value_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.value.view_mut()
    }

    pub fn grad(&self) -> ArrayView2<'_, f64> {
        self.grad.view()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Shape summary used in manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Ordered collection of parameters addressable by index or name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
    by_name: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor and returns its index. Names must be unique.
    pub fn push(&mut self, name: impl Into<String>, value: Mat) -> usize {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let idx = self.tensors.len();
        self.by_name.insert(name.clone(), idx);
        self.tensors.push(ParamTensor::new(name, value));
        idx
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn tensor(&self, index: usize) -> &ParamTensor {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut ParamTensor {
        &mut self.tensors[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn shapes(&self) -> Vec<TensorShape> {
        self.tensors
            .iter()
            .map(|t| TensorShape {
                name: t.name.clone(),
                rows: t.shape().0,
                cols: t.shape().1,
            })
            .collect()
    }

    /// Registers every tensor as a leaf of `g`; the returned handles are
    /// indexed like the set.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| g.param(i, t.value.clone()))
            .collect()
    }

    /// Stores gradients produced by [`Graph::backward`]; missing entries are
    /// zero.
    pub fn set_grads(&mut self, grads: Vec<Option<Mat>>) {
        assert_eq!(grads.len(), self.tensors.len());
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            match g {
                Some(g) => {
                    assert_eq!(g.dim(), t.value.dim(), "gradient shape for {}", t.name);
                    t.grad = g;
                }
                None => t.grad.fill(0.0),
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.fill(0.0);
        }
    }

    /// Replaces values from `(name, matrix)` pairs; every tensor must be
    /// present with a matching shape.
    pub fn load_values(&mut self, values: Vec<(String, Mat)>) -> Result<()> {
        let mut seen = vec![false; self.tensors.len()];
        for (name, m) in values {
            let idx = self
                .index_of(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            let t = &mut self.tensors[idx];
            if t.value.dim() != m.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: expected {:?}, found {:?}",
                    t.value.dim(),
                    m.dim()
                )));
            }
            t.value = m;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!(
                "missing tensor {}",
                self.tensors[missing].name
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.value.iter().all(|v| v.is_finite()))
    }
}

/// Evaluates `objective` on a fresh graph, stores exact gradients in
/// `params` and returns the objective value.
pub fn grad<F>(params: &mut ParamSet, objective: F) -> Result<f64>
where
    F: FnOnce(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let loss = objective(&mut g, &vars)?;
    let grads = g.backward(loss, params.len())?;
    params.set_grads(grads);
    Ok(g.scalar(loss))
}

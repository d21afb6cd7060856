use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub tensor: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(tensor: Tensor) -> Self {
        let grad = Tensor::zeros(tensor.shape());
        Self { tensor, grad, trainable: true }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

/// Ordered, named collection of parameters. Registration order is the
/// checkpoint order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.params.push(Param::new(tensor));
        ParamId(self.params.len() - 1)
    }

    /// Registers a parameter drawn from `uniform(-bound, bound)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set(&mut self, id: ParamId, tensor: Tensor) -> Result<(), TensorError> {
        let p = &mut self.params[id.0];
        if p.tensor.shape() != tensor.shape() {
            return Err(TensorError::Shape {
                op: "set_param",
                left: p.tensor.shape().to_vec(),
                right: tensor.shape().to_vec(),
            });
        }
        p.tensor = tensor;
        Ok(())
    }

    /// `(name, tensor)` pairs in registration order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.params.iter().map(|p| p.tensor.clone())).collect()
    }

    /// Loads values by name; every stored parameter must be present with a
    /// matching shape.
    pub fn load_named(&mut self, entries: &[(String, Tensor)]) -> Result<(), TensorError> {
        for (i, name) in self.names.iter().enumerate() {
            let (_, t) =
                entries.iter().find(|(n, _)| n == name).ok_or_else(|| TensorError::MissingEntry(name.clone()))?;
            let p = &mut self.params[i];
            if p.tensor.shape() != t.shape() {
                return Err(TensorError::Shape {
                    op: "load_param",
                    left: p.tensor.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            p.tensor = t.clone();
        }
        Ok(())
    }
}

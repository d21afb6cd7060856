use rand::Rng;

use super::{Activation, ParamId, ParamStore, Tape, TensorError, Var};

/// Fully connected layer `act(x W + b)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl Dense {
    /// Weights and bias drawn from `uniform(-1/sqrt(d_in), 1/sqrt(d_in))`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), &[d_in, d_out], bound, rng);
        let bias = store.add_uniform(format!("{name}.bias"), &[1, d_out], bound, rng);
        Self { weight, bias, activation }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, TensorError> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.linear(x, w, b)?;
        Ok(tape.activation(y, self.activation))
    }
}

/// Stack of [`Dense`] layers. Hidden layers use relu and the last layer is
/// linear unless built with [`Mlp::with_activations`].
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let depth = dims.len().saturating_sub(1);
        let acts: Vec<_> =
            (0..depth).map(|i| if i + 1 == depth { Activation::Identity } else { Activation::Relu }).collect();
        Self::with_activations(store, name, dims, &acts, rng)
    }

    pub fn with_activations<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 || dims.contains(&0) {
            return Err(TensorError::Empty("mlp dims"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(i, (w, &act))| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], act, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, TensorError> {
        self.layers.iter().try_fold(x, |h, layer| layer.forward(tape, store, h))
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.tensor(self.layers[0].weight).rows()
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.tensor(self.layers[self.layers.len() - 1].weight).cols()
    }
}

use rand::Rng;

use super::{Batch, ModelError};
use crate::autodiff::{Activation, Mlp, ParamId, ParamStore, Tape, Tensor, Var};

/// `l * act(L_D node_mlp(X) W)`.
#[derive(Clone, Debug)]
pub struct DiffusionModule {
    pub node_mlp: Mlp,
    pub weight: ParamId,
    pub scale: ParamId,
    pub activation: Activation,
}

impl DiffusionModule {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let node_mlp = Mlp::new(store, &format!("{name}.node_mlp"), &[d, d, d], rng)?;
        let bound = 1.0 / (d as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), &[d, d], bound, rng);
        let scale = store.add(format!("{name}.scale"), Tensor::full(&[1, d], 1.0));
        Ok(Self { node_mlp, weight, scale, activation })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, batch: &Batch, x: Var) -> Result<Var, ModelError> {
        let h = self.node_mlp.forward(tape, store, x)?;
        let w = tape.param(store, self.weight);
        let hw = tape.matmul(h, w)?;
        let prop = tape.block_left_mul(batch.matrices.scaled_laplacian.clone(), hw)?;
        let act = tape.activation(prop, self.activation);
        let l = tape.param(store, self.scale);
        Ok(tape.mul_row(act, l)?)
    }
}

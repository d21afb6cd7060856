use rand::Rng;

use super::{Batch, LocalNorm, ModelError};
use crate::autodiff::{Activation, Mlp, ParamId, ParamStore, Tape, Tensor, Var};

/// `M^{+-1} act((I + A) node_mlp(X) W)`.
#[derive(Clone, Debug)]
pub struct LocalModule {
    pub node_mlp: Mlp,
    pub weight: ParamId,
    pub norm: LocalNorm,
    pub activation: Activation,
}

impl LocalModule {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        norm: LocalNorm,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let node_mlp = Mlp::new(store, &format!("{name}.node_mlp"), &[d, d, d], rng)?;
        let bound = 1.0 / (d as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), &[d, d], bound, rng);
        Ok(Self { node_mlp, weight, norm, activation })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, batch: &Batch, x: Var) -> Result<Var, ModelError> {
        let h = self.node_mlp.forward(tape, store, x)?;
        let w = tape.param(store, self.weight);
        let hw = tape.matmul(h, w)?;
        let mixed = tape.block_left_mul(batch.matrices.local_mix.clone(), hw)?;
        let f = tape.activation(mixed, self.activation);
        let diag = match self.norm {
            LocalNorm::DirectM => &batch.matrices.local_norm,
            LocalNorm::InverseM => &batch.matrices.local_norm_inv,
        };
        let col: Vec<f64> = diag.iter().copied().cycle().take(batch.rows()).collect();
        let col = tape.constant(Tensor::column(col));
        Ok(tape.mul_col(f, col)?)
    }
}

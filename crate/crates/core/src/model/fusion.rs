use std::sync::Arc;

use rand::Rng;

use super::{Batch, FusionMode, ModelError};
use crate::autodiff::{Mlp, ParamStore, Tape, Tensor, Var};

/// Softmax-weighted combination of the three module outputs.
#[derive(Clone, Debug)]
pub struct FusionHead {
    pub mlp: Mlp,
    pub mode: FusionMode,
}

#[derive(Clone, Copy, Debug)]
pub struct FusionOutput {
    pub features: Var,
    /// `rows x 3` weights in (diffusion, convection, local) order.
    pub weights: Var,
}

impl FusionHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        mode: FusionMode,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mlp = Mlp::new(store, &format!("{name}.mlp"), &[3 * d, d, 3], rng)?;
        Ok(Self { mlp, mode })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        parts: [Var; 3],
    ) -> Result<FusionOutput, ModelError> {
        let cat = tape.concat_cols(&parts)?;
        let mut logits = self.mlp.forward(tape, store, cat)?;
        if self.mode == FusionMode::PerLayer {
            let n = batch.nodes;
            let avg = Arc::new(Tensor::full(&[n, n], 1.0 / n as f64));
            logits = tape.block_left_mul(avg, logits)?;
        }
        let weights = tape.softmax_rows(logits);
        Ok(FusionOutput { features: combine(tape, weights, parts)?, weights })
    }
}

/// `sum_k w[:, k] * parts[k]`.
pub(crate) fn combine(tape: &mut Tape, weights: Var, parts: [Var; 3]) -> Result<Var, ModelError> {
    let mut acc: Option<Var> = None;
    for (k, p) in parts.into_iter().enumerate() {
        let w = tape.slice_cols(weights, k, k + 1)?;
        let term = tape.mul_col(p, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    Ok(acc.expect("three parts"))
}

use rand::Rng;

use super::{Aggregation, Batch, ModelError, EDGE_FEATURES};
use crate::autodiff::{Activation, Dense, Mlp, ParamStore, Tape, Var};

/// Edge features of the current layer as an affine map of the raw triples:
/// `e = raw * proj + offset`. `None` means the raw triples themselves.
#[derive(Clone, Copy, Debug, Default)]
pub struct EdgeAffine {
    pub map: Option<(Var, Var)>,
}

/// Residual message passing driven by wind-dependent edge features.
///
/// Per edge `j -> i`: `e' = edge_mlp(e)`, message
/// `phi = message_mlp([x_i' + e', x_j' + e'])` with `x' = node_mlp(x)`,
/// `m_i = sum_j phi` (or the mean), output `update_mlp([m_i, x_i' + m_i])`.
///
/// The edge MLP is one linear layer, so edge features stay affine in the raw
/// triples across layers. The first message layer is split over the
/// concatenation and its relu is evaluated by [`Tape::edge_relu_sum`]; the
/// second (linear) message layer is applied after aggregation. The result is
/// identical to the per-edge pipeline.
#[derive(Clone, Debug)]
pub struct ConvectionModule {
    pub node_mlp: Mlp,
    pub edge_mlp: Dense,
    pub message_mlp: Mlp,
    pub update_mlp: Mlp,
    pub aggregation: Aggregation,
}

impl ConvectionModule {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        edge_in: usize,
        d: usize,
        aggregation: Aggregation,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let node_mlp = Mlp::new(store, &format!("{name}.node_mlp"), &[d, d, d], rng)?;
        let edge_mlp = Dense::new(store, &format!("{name}.edge_mlp"), edge_in, d, Activation::Identity, rng);
        let message_mlp = Mlp::new(store, &format!("{name}.message_mlp"), &[2 * d, d, d], rng)?;
        let update_mlp = Mlp::new(store, &format!("{name}.update_mlp"), &[2 * d, d, d], rng)?;
        Ok(Self { node_mlp, edge_mlp, message_mlp, update_mlp, aggregation })
    }

    /// Returns the node outputs and this layer's edge features `e'`, which
    /// feed the next layer's edge MLP.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        x: Var,
        edges: EdgeAffine,
    ) -> Result<(Var, EdgeAffine), ModelError> {
        let n = batch.nodes;
        let xp = self.node_mlp.forward(tape, store, x)?;
        let pe = tape.param(store, self.edge_mlp.weight);
        let be = tape.param(store, self.edge_mlp.bias);
        let (proj, offset) = match edges.map {
            None => (pe, be),
            Some((p, o)) => (tape.matmul(p, pe)?, tape.linear(o, pe, be)?),
        };
        if tape.value(proj).rows() != EDGE_FEATURES {
            return Err(ModelError::Config("edge projection must start from the raw triples".into()));
        }

        let [first, second] = &self.message_mlp.layers[..] else {
            return Err(ModelError::Config("message mlp must have two layers".into()));
        };
        if first.activation != Activation::Relu || second.activation != Activation::Identity {
            return Err(ModelError::Config("message mlp must be relu then linear".into()));
        }
        let d = tape.value(xp).cols();
        let w1 = tape.param(store, first.weight);
        let b1 = tape.param(store, first.bias);
        let w1a = tape.slice_rows(w1, 0, d)?;
        let w1b = tape.slice_rows(w1, d, 2 * d)?;
        let wsum = tape.add(w1a, w1b)?;
        let target = tape.matmul(xp, w1a)?;
        let source = tape.matmul(xp, w1b)?;
        let msg_proj = tape.matmul(proj, wsum)?;
        let msg_offset = tape.linear(offset, wsum, b1)?;
        let hidden = tape.edge_relu_sum(target, source, batch.edge_raw.clone(), msg_proj, msg_offset, n)?;

        let w2 = tape.param(store, second.weight);
        let b2 = tape.param(store, second.bias);
        let deg = (n - 1) as f64;
        let m = match self.aggregation {
            Aggregation::Sum => {
                let b = tape.scale(b2, deg);
                tape.linear(hidden, w2, b)?
            }
            Aggregation::Mean => {
                let h = tape.scale(hidden, 1.0 / deg);
                tape.linear(h, w2, b2)?
            }
        };
        let res = tape.add(xp, m)?;
        let c = tape.concat_cols(&[m, res])?;
        let out = self.update_mlp.forward(tape, store, c)?;
        Ok((out, EdgeAffine { map: Some((proj, offset)) }))
    }
}

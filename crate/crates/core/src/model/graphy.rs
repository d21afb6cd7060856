use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Batch, ConvectionModule, DiffusionModule, EdgeAffine, FusionHead, LocalModule, ModelConfig, ModelError,
    EDGE_FEATURES,
};
use crate::autodiff::{Mlp, ParamStore, Tape, Var};

#[derive(Clone, Debug)]
pub struct GraPhyLayer {
    pub diffusion: DiffusionModule,
    pub convection: ConvectionModule,
    pub local: LocalModule,
    pub fusion: FusionHead,
}

/// Intermediate values of one layer, for inspection and tests.
#[derive(Clone, Copy, Debug)]
pub struct LayerTrace {
    pub diffusion: Var,
    pub convection: Var,
    pub local: Var,
    pub weights: Var,
    pub output: Var,
}

#[derive(Clone, Debug)]
pub struct GraPhyModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub input_embed: Mlp,
    pub layers: Vec<GraPhyLayer>,
    pub output_head: Mlp,
}

impl GraPhyModel {
    /// Builds a model with parameters drawn from a generator seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.hidden;
        let input_embed = Mlp::new(&mut store, "input_embed", &[config.input_dim(), d, d], &mut rng)?;
        let mut layers = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            let name = format!("layer{k}");
            let edge_in = if k == 0 { EDGE_FEATURES } else { d };
            layers.push(GraPhyLayer {
                diffusion: DiffusionModule::new(
                    &mut store,
                    &format!("{name}.diffusion"),
                    d,
                    config.gcn_activation,
                    &mut rng,
                )?,
                convection: ConvectionModule::new(
                    &mut store,
                    &format!("{name}.convection"),
                    edge_in,
                    d,
                    config.aggregation,
                    &mut rng,
                )?,
                local: LocalModule::new(
                    &mut store,
                    &format!("{name}.local"),
                    d,
                    config.local_norm,
                    config.gcn_activation,
                    &mut rng,
                )?,
                fusion: FusionHead::new(&mut store, &format!("{name}.fusion"), d, config.fusion, &mut rng)?,
            });
        }
        let output_head = Mlp::new(&mut store, "output_head", &[d, d, 1], &mut rng)?;
        Ok(Self { config, store, input_embed, layers, output_head })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_values()
    }

    /// Records the full forward pass; returns the `(B*N) x 1` standardized
    /// predictions.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<Var, ModelError> {
        Ok(self.forward_traced(tape, batch)?.0)
    }

    pub fn forward_traced(&self, tape: &mut Tape, batch: &Batch) -> Result<(Var, Vec<LayerTrace>), ModelError> {
        if batch.matrices.len() != batch.nodes {
            return Err(ModelError::NodeMismatch { expected: batch.matrices.len(), got: batch.nodes });
        }
        if batch.node_inputs.cols() != self.config.input_dim() {
            return Err(ModelError::NodeMismatch { expected: self.config.input_dim(), got: batch.node_inputs.cols() });
        }
        let x0 = tape.constant(batch.node_inputs.clone());
        self.forward_from(tape, batch, x0)
    }

    /// Forward pass from an already recorded input (lets tests differentiate
    /// with respect to the node inputs).
    pub fn forward_from(&self, tape: &mut Tape, batch: &Batch, x0: Var) -> Result<(Var, Vec<LayerTrace>), ModelError> {
        let mut x = self.input_embed.forward(tape, &self.store, x0)?;
        let mut edges = EdgeAffine::default();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let xd = layer.diffusion.forward(tape, &self.store, batch, x)?;
            let (xc, next) = layer.convection.forward(tape, &self.store, batch, x, edges)?;
            let xl = layer.local.forward(tape, &self.store, batch, x)?;
            let fused = layer.fusion.forward(tape, &self.store, batch, [xd, xc, xl])?;
            traces.push(LayerTrace {
                diffusion: xd,
                convection: xc,
                local: xl,
                weights: fused.weights,
                output: fused.features,
            });
            x = fused.features;
            edges = next;
        }
        let out = self.output_head.forward(tape, &self.store, x)?;
        Ok((out, traces))
    }

    /// Standardized predictions for every row of the batch.
    pub fn predict_standardized(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch)?;
        Ok(tape.value(out).data().to_vec())
    }
}

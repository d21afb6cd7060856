use super::{Batch, GraPhyModel, GraphContext, ModelError, NodeWindow, Normalizer};
use crate::geo::{Graph, SensorMeta, WindRecord};

/// Context sensor readings for one hour: `readings` holds `window` values per
/// sensor, oldest first.
#[derive(Clone, Copy, Debug)]
pub struct ContextSnapshot<'a> {
    pub sensors: &'a [SensorMeta],
    pub readings: &'a [f64],
    pub wind: &'a WindRecord,
}

/// Predicts PM2.5 at `location` by appending it as an unobserved node to the
/// complete graph of context sensors.
pub fn infer_at_location(
    model: &GraPhyModel,
    norm: &Normalizer,
    snapshot: ContextSnapshot<'_>,
    location: &SensorMeta,
) -> Result<f64, ModelError> {
    if snapshot.sensors.iter().any(|s| s.sensor_id == location.sensor_id) {
        return Err(ModelError::DuplicateLocation(location.sensor_id.clone()));
    }
    let mut nodes = snapshot.sensors.to_vec();
    nodes.push(location.clone());
    let ctx = GraphContext::new(Graph::build(nodes)?)?;
    let w = model.config.window;
    let mut readings = snapshot.readings.to_vec();
    readings.extend(std::iter::repeat_n(0.0, w));
    let preds = predict_node(model, &ctx, norm, &[(readings, snapshot.wind.clone())], ctx.len() - 1)?;
    Ok(preds[0])
}

/// Predictions (in PM2.5 units) at `target` for several hours on one graph.
/// Each sample holds `window` readings per node; the target's readings are
/// ignored and it is fed as unobserved.
pub fn predict_node(
    model: &GraPhyModel,
    ctx: &GraphContext,
    norm: &Normalizer,
    samples: &[(Vec<f64>, WindRecord)],
    target: usize,
) -> Result<Vec<f64>, ModelError> {
    let n = ctx.len();
    if target >= n {
        return Err(ModelError::NodeMismatch { expected: n, got: target + 1 });
    }
    let observed: Vec<bool> = (0..n).map(|i| i != target).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_CHUNK) {
        let windows: Vec<NodeWindow<'_>> =
            chunk.iter().map(|(r, w)| NodeWindow { readings: r, observed: &observed, wind: w }).collect();
        let batch = Batch::build(ctx, norm, model.config.window, &windows)?;
        let z = model.predict_standardized(&batch)?;
        out.extend((0..chunk.len()).map(|b| norm.destandardize(z[batch.row_of(b, target)])));
    }
    Ok(out)
}

const PREDICT_CHUNK: usize = 32;

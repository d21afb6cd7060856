use super::BaselineError;
use crate::geo::EPS_DIST_KM;

/// Weights proportional to inverse distance to the first power.
pub const DEFAULT_IDW_POWER: f64 = 1.0;

/// Inverse-distance-weighted average. A context within `EPS_DIST_KM` of the
/// target returns its own value.
pub fn idw(dists: &[f64], values: &[f64], power: f64) -> Result<f64, BaselineError> {
    if values.is_empty() {
        return Err(BaselineError::EmptyContext);
    }
    if dists.len() != values.len() {
        return Err(BaselineError::LengthMismatch("distance"));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(BaselineError::InvalidParameter(format!("idw power {power}")));
    }
    if let Some(k) = dists.iter().position(|&d| d <= EPS_DIST_KM) {
        return Ok(values[k]);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&d, &v) in dists.iter().zip(values) {
        let w = d.powf(-power);
        num += w * v;
        den += w;
    }
    Ok(num / den)
}

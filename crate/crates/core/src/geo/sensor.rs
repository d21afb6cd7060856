use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::GeoError;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub sensor_id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl SensorMeta {
    pub fn new(sensor_id: impl Into<String>, latitude: f64, longitude: f64) -> Result<Self, GeoError> {
        let s = Self { sensor_id: sensor_id.into(), latitude, longitude };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.latitude.is_finite()
            && self.longitude.is_finite()
            && (-90.0..=90.0).contains(&self.latitude)
            && (-180.0..=180.0).contains(&self.longitude);
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidCoordinate {
                id: self.sensor_id.clone(),
                latitude: self.latitude,
                longitude: self.longitude,
            })
        }
    }
}

/// City-level hourly wind. `direction_deg` is meteorological: the direction
/// the wind blows from, clockwise from north.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindRecord {
    pub timestamp: DateTime<Utc>,
    pub speed_kmh: f64,
    pub direction_deg: f64,
}

impl WindRecord {
    pub fn new(timestamp: DateTime<Utc>, speed_kmh: f64, direction_deg: f64) -> Result<Self, GeoError> {
        if !(speed_kmh.is_finite() && speed_kmh >= 0.0 && direction_deg.is_finite()) {
            return Err(GeoError::InvalidWind { speed_kmh, direction_deg });
        }
        Ok(Self { timestamp, speed_kmh, direction_deg: direction_deg.rem_euclid(360.0) })
    }

    /// Unit vector (east, north) the wind blows toward.
    pub fn toward_unit(&self) -> (f64, f64) {
        let theta = self.direction_deg.to_radians();
        (-theta.sin(), -theta.cos())
    }

    /// Velocity (east, north) in km/h.
    pub fn velocity(&self) -> (f64, f64) {
        let (e, n) = self.toward_unit();
        (e * self.speed_kmh, n * self.speed_kmh)
    }

    /// Builds a record from a blowing-toward velocity.
    pub fn from_velocity(timestamp: DateTime<Utc>, east: f64, north: f64) -> Result<Self, GeoError> {
        let speed = east.hypot(north);
        let from = if speed > 0.0 { (-east).atan2(-north).to_degrees() } else { 0.0 };
        Self::new(timestamp, speed, from)
    }
}

/// Great-circle distance in km.
pub fn haversine_km(a: &SensorMeta, b: &SensorMeta) -> Result<f64, GeoError> {
    a.validate()?;
    b.validate()?;
    Ok(haversine_raw(a.latitude, a.longitude, b.latitude, b.longitude))
}

pub(crate) fn haversine_raw(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    // Order-independent evaluation keeps d(a, b) == d(b, a) bit for bit.
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (p2 - p1).abs();
    let dlambda = (lon2 - lon1).abs().to_radians();
    let s1 = (dphi / 2.0).sin();
    let s2 = (dlambda / 2.0).sin();
    let h = s1 * s1 + p1.cos() * p2.cos() * s2 * s2;
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Local planar displacement (east, north) in km from `a` to `b`, evaluated at
/// the pair's mean latitude. Exactly antisymmetric in its arguments.
pub(crate) fn planar_offset_km(a: &SensorMeta, b: &SensorMeta) -> (f64, f64) {
    let mut dlon = b.longitude - a.longitude;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let dlat = b.latitude - a.latitude;
    let mean_lat = ((a.latitude + b.latitude) / 2.0).to_radians();
    let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    (dlon * k * mean_lat.cos(), dlat * k)
}

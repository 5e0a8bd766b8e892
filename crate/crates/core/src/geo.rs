//! Geographic and planar coordinate types.
//!
//! Input coordinates are longitude/latitude in degrees. All modelling runs in
//! a local planar frame in meters, obtained from an equirectangular
//! projection anchored at a fixed origin (by convention the centroid of the
//! receiver network). Within a couple hundred kilometers of the origin the
//! projection error is far below the scales that matter here (receiver
//! detection radius, daily travel distances).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meters per degree of latitude on a spherical Earth.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// A longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Degrees longitude, in [-180, 180].
    pub lon: f64,
    /// Degrees latitude, in [-90, 90].
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Invalid(format!("longitude {lon} out of [-180, 180]")));
        }
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Invalid(format!("latitude {lat} out of [-90, 90]")));
        }
        Ok(Self { lon, lat })
    }
}

/// A point in the local planar frame, meters east/north of the projection
/// origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Translate by `(dx, dy)` meters.
    pub fn offset(self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy }
    }
}

/// Euclidean distance in meters between two planar points.
pub fn distance(p: PlanarPoint, q: PlanarPoint) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Heading in radians from `from` to `to`, in (-pi, pi].
///
/// Coincident points return 0 by convention; callers that care flag the
/// event separately.
pub fn angle_to(from: PlanarPoint, to: PlanarPoint) -> f64 {
    if from == to {
        return 0.0;
    }
    (to.y - from.y).atan2(to.x - from.x)
}

/// Local equirectangular projection anchored at `origin`.
///
/// x = (lon - lon0) * cos(lat0) * 111320, y = (lat - lat0) * 111320.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    origin: GeoPoint,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin, cos_lat0: origin.lat.to_radians().cos() }
    }

    /// Projection anchored at the centroid of `points`.
    ///
    /// Falls back to (0, 0) for an empty slice so that an empty receiver
    /// table still yields a usable (if arbitrary) frame.
    pub fn centered_on(points: &[GeoPoint]) -> Self {
        if points.is_empty() {
            return Self::new(GeoPoint { lon: 0.0, lat: 0.0 });
        }
        let n = points.len() as f64;
        let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
        let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
        Self::new(GeoPoint { lon, lat })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn to_planar(&self, p: GeoPoint) -> PlanarPoint {
        PlanarPoint {
            x: (p.lon - self.origin.lon) * self.cos_lat0 * METERS_PER_DEGREE,
            y: (p.lat - self.origin.lat) * METERS_PER_DEGREE,
        }
    }

    pub fn to_geo(&self, p: PlanarPoint) -> GeoPoint {
        GeoPoint {
            lon: self.origin.lon + p.x / (self.cos_lat0 * METERS_PER_DEGREE),
            lat: self.origin.lat + p.y / METERS_PER_DEGREE,
        }
    }
}

/// A fixed acoustic receiver in the planar frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receiver {
    pub id: String,
    pub position: PlanarPoint,
    /// Detection radius in meters.
    pub radius_m: f64,
}

impl Receiver {
    pub fn new(id: impl Into<String>, position: PlanarPoint, radius_m: f64) -> Result<Self> {
        if radius_m.is_nan() || radius_m <= 0.0 {
            return Err(Error::Invalid(format!("receiver radius {radius_m} must be > 0")));
        }
        Ok(Self { id: id.into(), position, radius_m })
    }
}

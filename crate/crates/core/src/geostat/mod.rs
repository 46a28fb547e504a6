//! Variograms, ordinary/universal kriging and cross-validated selection of
//! the kriging setup.
//!
//! Coordinates are geographic degrees. Separations are measured in meters
//! with an equirectangular approximation (longitude differences scaled by
//! the cosine of the mean latitude), which stays well under 0.1% error at
//! city scale.

mod kriging;
mod search;
mod variogram;

pub use kriging::{krige, Kriger, KrigingConfig, KrigingKind, KrigingResult, KrigingWeights};
pub use search::{fallback_config, fit_kriging_config, grid_search_kriging, CvRow, GridSearchResult};
pub use variogram::{
    empirical_variogram, fit_variogram, EmpiricalBin, VariogramFamily, VariogramFit, VariogramModel,
};

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Meters per degree of latitude.
pub fn meters_per_degree() -> f64 {
    EARTH_RADIUS_M * std::f64::consts::PI / 180.0
}

/// A located scalar observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub lat: f64,
    pub lon: f64,
    pub value: f64,
}

impl SamplePoint {
    pub fn new(lat: f64, lon: f64, value: f64) -> Self {
        SamplePoint { lat, lon, value }
    }
}

/// Equirectangular distance in meters.
pub fn distance_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let k = std::f64::consts::PI / 180.0;
    let mid = 0.5 * (lat1 + lat2) * k;
    let dx = (lon2 - lon1) * k * mid.cos();
    let dy = (lat2 - lat1) * k;
    EARTH_RADIUS_M * (dx * dx + dy * dy).sqrt()
}

/// Averages values that share exactly the same coordinates, keeping the
/// order of first appearance.
pub fn dedup_locations(points: &[SamplePoint]) -> Vec<SamplePoint> {
    let mut out: Vec<(SamplePoint, usize)> = Vec::with_capacity(points.len());
    for p in points {
        match out.iter_mut().find(|(q, _)| q.lat == p.lat && q.lon == p.lon) {
            Some((q, n)) => {
                q.value += p.value;
                *n += 1;
            }
            None => out.push((*p, 1)),
        }
    }
    out.into_iter()
        .map(|(mut p, n)| {
            p.value /= n as f64;
            p
        })
        .collect()
}

/// Local planar frame (kilometers east/north of a reference point) used
/// for drift terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LocalFrame {
    lat0: f64,
    lon0: f64,
    cos0: f64,
}

impl LocalFrame {
    pub(crate) fn centered_on(points: &[SamplePoint]) -> Self {
        let n = points.len().max(1) as f64;
        let lat0 = points.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon0 = points.iter().map(|p| p.lon).sum::<f64>() / n;
        LocalFrame {
            lat0,
            lon0,
            cos0: lat0.to_radians().cos(),
        }
    }

    pub(crate) fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let m = meters_per_degree() / 1000.0;
        ((lon - self.lon0) * m * self.cos0, (lat - self.lat0) * m)
    }
}

use thiserror::Error;

use super::LatLon;

/// Mean Earth radius.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
}

fn check(p: LatLon) -> Result<(), GeoError> {
    if p.is_valid() {
        Ok(())
    } else {
        Err(GeoError::OutOfRange { lat: p.lat, lon: p.lon })
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: LatLon, b: LatLon) -> Result<f64, GeoError> {
    check(a)?;
    check(b)?;
    Ok(a.distance_to(b))
}

impl LatLon {
    /// Haversine distance without range checks; callers hold validated data.
    pub fn distance_to(self, other: LatLon) -> f64 {
        let (la1, la2) = (self.lat.to_radians(), other.lat.to_radians());
        let dlat = la2 - la1;
        let dlon = (other.lon - self.lon).to_radians();
        let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
    }

    /// Local east/north offsets in meters from `origin` (equirectangular).
    fn local_xy(self, origin: LatLon) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let x = (self.lon - origin.lon) * k * origin.lat.to_radians().cos();
        let y = (self.lat - origin.lat) * k;
        (x, y)
    }
}

/// Sum of haversine distances between consecutive points.
pub fn path_length(points: &[LatLon]) -> f64 {
    points.windows(2).map(|w| w[0].distance_to(w[1])).sum()
}

/// Distance in meters from `p` to the segment `a`-`b`, using a local planar
/// approximation centred on `p`. Accurate for the sub-kilometre distances
/// corridor tests care about.
pub fn point_segment_distance(p: LatLon, a: LatLon, b: LatLon) -> f64 {
    let (ax, ay) = a.local_xy(p);
    let (bx, by) = b.local_xy(p);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (cx * cx + cy * cy).sqrt()
}

/// Minimum distance from `p` to any segment of `polyline`.
pub fn polyline_distance(p: LatLon, polyline: &[LatLon]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => p.distance_to(*only),
        _ => polyline
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

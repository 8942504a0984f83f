use thiserror::Error;

use super::geo::GeoError;
use super::LatLon;

/// Collinearity tolerance in squared degrees.
const ON_EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("zone {zone}: {source}")]
    Invalid { zone: String, source: GeoError },
    #[error("duplicate zone id {0}")]
    Duplicate(String),
    #[error("zones {0} and {1} overlap")]
    Overlap(String, String),
}

/// A closed polygon used for origin/destination analytics. Longitude is
/// treated as x and latitude as y.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    zone_id: String,
    polygon: Vec<LatLon>,
}

impl Zone {
    /// `polygon` must be closed (first vertex repeated last), have at least
    /// three distinct vertices and no self-intersections.
    pub fn new(zone_id: impl Into<String>, polygon: Vec<LatLon>) -> Result<Self, GeoError> {
        let zone = Zone { zone_id: zone_id.into(), polygon };
        zone.validate()?;
        Ok(zone)
    }

    pub fn id(&self) -> &str {
        &self.zone_id
    }

    pub fn polygon(&self) -> &[LatLon] {
        &self.polygon
    }

    fn validate(&self) -> Result<(), GeoError> {
        let p = &self.polygon;
        if p.len() < 4 {
            return Err(GeoError::DegeneratePolygon("fewer than 3 vertices".into()));
        }
        if p.first() != p.last() {
            return Err(GeoError::DegeneratePolygon("polygon is not closed".into()));
        }
        if let Some(bad) = p.iter().find(|v| !v.is_valid()) {
            return Err(GeoError::OutOfRange { lat: bad.lat, lon: bad.lon });
        }
        if signed_area(p).abs() < ON_EDGE_EPS {
            return Err(GeoError::DegeneratePolygon("zero area".into()));
        }
        let n = p.len() - 1;
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_intersect(p[i], p[i + 1], p[j], p[j + 1]) {
                    return Err(GeoError::DegeneratePolygon(format!(
                        "edges {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(())
    }

    fn edges(&self) -> impl Iterator<Item = (LatLon, LatLon)> + '_ {
        self.polygon.windows(2).map(|w| (w[0], w[1]))
    }
}

fn signed_area(p: &[LatLon]) -> f64 {
    p.windows(2)
        .map(|w| w[0].lon * w[1].lat - w[1].lon * w[0].lat)
        .sum::<f64>()
        / 2.0
}

fn cross(o: LatLon, a: LatLon, b: LatLon) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: LatLon, a: LatLon, b: LatLon) -> bool {
    cross(a, b, p).abs() <= ON_EDGE_EPS
        && p.lon >= a.lon.min(b.lon) - ON_EDGE_EPS
        && p.lon <= a.lon.max(b.lon) + ON_EDGE_EPS
        && p.lat >= a.lat.min(b.lat) - ON_EDGE_EPS
        && p.lat <= a.lat.max(b.lat) + ON_EDGE_EPS
}

fn segments_intersect(a: LatLon, b: LatLon, c: LatLon, d: LatLon) -> bool {
    proper_cross(a, b, c, d)
        || on_segment(c, a, b)
        || on_segment(d, a, b)
        || on_segment(a, c, d)
        || on_segment(b, c, d)
}

fn proper_cross(a: LatLon, b: LatLon, c: LatLon, d: LatLon) -> bool {
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn on_boundary(p: LatLon, z: &Zone) -> bool {
    z.edges().any(|(a, b)| on_segment(p, a, b))
}

/// Even-odd ray casting towards +lon.
fn crossings_odd(p: LatLon, z: &Zone) -> bool {
    let mut inside = false;
    for (a, b) in z.edges() {
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd containment test. Points on an edge or vertex count as inside.
pub fn point_in_zone(p: LatLon, z: &Zone) -> Result<bool, GeoError> {
    if z.polygon.len() < 4 || z.polygon.first() != z.polygon.last() {
        return Err(GeoError::DegeneratePolygon(z.zone_id.clone()));
    }
    Ok(on_boundary(p, z) || crossings_odd(p, z))
}

fn strictly_inside(p: LatLon, z: &Zone) -> bool {
    !on_boundary(p, z) && crossings_odd(p, z)
}

/// First zone (in list order) containing `p`.
pub fn zone_of(p: LatLon, zones: &[Zone]) -> Option<&str> {
    zones
        .iter()
        .find(|z| on_boundary(p, z) || crossings_odd(p, z))
        .map(Zone::id)
}

fn centroid(z: &Zone) -> LatLon {
    let n = (z.polygon.len() - 1) as f64;
    let (lat, lon) = z.polygon[..z.polygon.len() - 1]
        .iter()
        .fold((0.0, 0.0), |(la, lo), v| (la + v.lat, lo + v.lon));
    LatLon::new(lat / n, lon / n)
}

fn overlaps(a: &Zone, b: &Zone) -> bool {
    let probes = |x: &Zone| {
        let mut pts: Vec<LatLon> = x.polygon.clone();
        pts.extend(
            x.edges()
                .map(|(p, q)| LatLon::new((p.lat + q.lat) / 2.0, (p.lon + q.lon) / 2.0)),
        );
        pts.push(centroid(x));
        pts
    };
    probes(a).into_iter().any(|p| strictly_inside(p, b))
        || probes(b).into_iter().any(|p| strictly_inside(p, a))
        || a.edges()
            .any(|(p, q)| b.edges().any(|(r, s)| proper_cross(p, q, r, s)))
}

/// Rejects zone sets whose interiors overlap. Shared edges are allowed.
pub fn check_disjoint(zones: &[Zone]) -> Result<(), ZoneError> {
    for (i, a) in zones.iter().enumerate() {
        for b in &zones[i + 1..] {
            if a.zone_id == b.zone_id {
                return Err(ZoneError::Duplicate(a.zone_id.clone()));
            }
            if overlaps(a, b) {
                return Err(ZoneError::Overlap(a.zone_id.clone(), b.zone_id.clone()));
            }
        }
    }
    Ok(())
}

pub(crate) fn parse_point_list(s: &str) -> Result<Vec<LatLon>, String> {
    s.split(';')
        .map(|pair| {
            let (lat, lon) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected lat:lon, got {pair:?}"))?;
            let lat: f64 = lat.parse().map_err(|_| format!("bad latitude {lat:?}"))?;
            let lon: f64 = lon.parse().map_err(|_| format!("bad longitude {lon:?}"))?;
            let p = LatLon::new(lat, lon);
            if !p.is_valid() {
                return Err(format!("coordinate out of range {pair:?}"));
            }
            Ok(p)
        })
        .collect()
}

/// Parses a zones file (`Z <zone_id> <lat:lon;...>` lines, `#` comments)
/// and checks that the zones are valid and pairwise disjoint.
pub fn parse_zones(text: &str) -> Result<Vec<Zone>, ZoneError> {
    let mut zones = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(' ').collect();
        let err = |message: String| ZoneError::Parse { line, message };
        match fields.as_slice() {
            ["Z", id, points] => {
                let polygon = parse_point_list(points).map_err(err)?;
                let zone = Zone::new(*id, polygon).map_err(|source| ZoneError::Invalid {
                    zone: id.to_string(),
                    source,
                })?;
                zones.push(zone);
            }
            _ => return Err(err(format!("unrecognized record {trimmed:?}"))),
        }
    }
    check_disjoint(&zones)?;
    Ok(zones)
}

//! Geofence-based refinement of vehicle spans into metro, bus or private
//! transport.

mod bus;
mod gaps;
mod graph;
mod metro;
mod poi;
mod refine;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::model::{
    parse_point_list, polyline_distance, LatLon, RouteShape, TimetableEntry, TransitKind,
    TransitStop, DEFAULT_MAX_ACCURACY_M,
};

pub use bus::{infer_bus, BusInference, NotBusReason};
pub use gaps::{detect_gps_gaps, trailing_speed, Gap};
pub use graph::{route_feasible, TransitGraph};
pub use metro::{infer_metro, MetroInference, NotMetroReason};
pub use poi::poi_context;
pub use refine::refine_segments;

#[derive(Debug, Error)]
pub enum TransitError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid transit dataset: {0}")]
    Invalid(String),
    #[error("invalid matcher config: {0}")]
    Config(String),
}

/// Thresholds for the geofencing heuristics.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    /// Minimum silence between usable fixes that counts as a GPS gap, s.
    pub gap_min: i64,
    pub station_radius: f64,
    pub stop_corridor: f64,
    /// Minimum share of segment fixes inside a bus route corridor.
    pub bus_fix_fraction: f64,
    pub bus_speed: (f64, f64),
    pub metro_speed: (f64, f64),
    pub poi_radius: f64,
    /// Look-back used to decide whether the device was moving before a gap, s.
    pub moving_window: i64,
    pub moving_speed: f64,
    /// Fixes with a larger accuracy radius are low quality.
    pub max_accuracy: f64,
    pub min_bus_fixes: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            gap_min: 180,
            station_radius: 300.0,
            stop_corridor: 80.0,
            bus_fix_fraction: 0.6,
            bus_speed: (2.0, 12.0),
            metro_speed: (5.0, 20.0),
            poi_radius: 150.0,
            moving_window: 60,
            moving_speed: 0.5,
            max_accuracy: DEFAULT_MAX_ACCURACY_M,
            min_bus_fixes: 5,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), TransitError> {
        let radii = [
            ("station_radius", self.station_radius),
            ("stop_corridor", self.stop_corridor),
            ("poi_radius", self.poi_radius),
            ("max_accuracy", self.max_accuracy),
        ];
        for (name, r) in radii {
            if !(r.is_finite() && r > 0.0) {
                return Err(TransitError::Config(format!("{name} must be > 0")));
            }
        }
        if self.gap_min <= 0 || self.moving_window <= 0 {
            return Err(TransitError::Config("durations must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.bus_fix_fraction) {
            return Err(TransitError::Config("bus_fix_fraction must be in [0, 1]".into()));
        }
        for (name, (lo, hi)) in [("bus_speed", self.bus_speed), ("metro_speed", self.metro_speed)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(TransitError::Config(format!("{name} range is empty")));
            }
        }
        Ok(())
    }
}

/// Static reference data: stops, route shapes and service windows. Built
/// once and shared read-only.
#[derive(Debug, Clone)]
pub struct TransitDataset {
    stops: Vec<TransitStop>,
    routes: Vec<RouteShape>,
    timetable: Vec<TimetableEntry>,
    stop_index: HashMap<String, usize>,
    graph: TransitGraph,
}

impl TransitDataset {
    pub fn new(
        mut stops: Vec<TransitStop>,
        routes: Vec<RouteShape>,
        timetable: Vec<TimetableEntry>,
    ) -> Result<Self, TransitError> {
        let mut stop_index = HashMap::new();
        for (i, s) in stops.iter().enumerate() {
            if !s.position().is_valid() {
                return Err(TransitError::Invalid(format!("stop {} out of range", s.stop_id)));
            }
            if stop_index.insert(s.stop_id.clone(), i).is_some() {
                return Err(TransitError::Invalid(format!("duplicate stop {}", s.stop_id)));
            }
        }
        let mut route_ids = BTreeMap::new();
        for r in &routes {
            if route_ids.insert(r.route_id.clone(), ()).is_some() {
                return Err(TransitError::Invalid(format!("duplicate route {}", r.route_id)));
            }
            if r.stop_ids.len() < 2 {
                return Err(TransitError::Invalid(format!("route {} has < 2 stops", r.route_id)));
            }
            for id in &r.stop_ids {
                let Some(&i) = stop_index.get(id) else {
                    return Err(TransitError::Invalid(format!(
                        "route {} references unknown stop {id}",
                        r.route_id
                    )));
                };
                let stop = &mut stops[i];
                if !r.polyline.is_empty()
                    && polyline_distance(stop.position(), &r.polyline)
                        > MatcherConfig::default().stop_corridor
                {
                    return Err(TransitError::Invalid(format!(
                        "route {} polyline misses stop {id}",
                        r.route_id
                    )));
                }
                if !stop.route_ids.contains(&r.route_id) {
                    stop.route_ids.push(r.route_id.clone());
                }
            }
        }
        for t in &timetable {
            if !route_ids.contains_key(&t.route_id) {
                return Err(TransitError::Invalid(format!(
                    "timetable references unknown route {}",
                    t.route_id
                )));
            }
            if t.first_departure > t.last_departure || t.headway <= 0 {
                return Err(TransitError::Invalid(format!(
                    "bad service window for {}",
                    t.route_id
                )));
            }
        }
        let graph = TransitGraph::build(&stops, &routes, &stop_index);
        Ok(TransitDataset { stops, routes, timetable, stop_index, graph })
    }

    pub fn empty() -> Self {
        TransitDataset::new(Vec::new(), Vec::new(), Vec::new()).expect("empty dataset is valid")
    }

    /// The Barcelona toy network shipped with the crate.
    pub fn fixture() -> Self {
        parse_transit(include_str!("../../fixtures/transit_bcn.txt"))
            .expect("bundled transit fixture is valid")
    }

    pub fn stops(&self) -> &[TransitStop] {
        &self.stops
    }

    pub fn routes(&self) -> &[RouteShape] {
        &self.routes
    }

    pub fn timetable(&self) -> &[TimetableEntry] {
        &self.timetable
    }

    pub fn stop(&self, id: &str) -> Option<&TransitStop> {
        self.stop_index.get(id).map(|&i| &self.stops[i])
    }

    pub fn route(&self, id: &str) -> Option<&RouteShape> {
        self.routes.iter().find(|r| r.route_id == id)
    }

    pub fn service(&self, route_id: &str) -> Option<&TimetableEntry> {
        self.timetable.iter().find(|t| t.route_id == route_id)
    }

    pub fn graph(&self) -> &TransitGraph {
        &self.graph
    }

    pub(crate) fn stop_idx(&self, id: &str) -> Option<usize> {
        self.stop_index.get(id).copied()
    }

    /// Nearest stop of `kind` to `p`, with its distance.
    pub fn nearest(&self, p: LatLon, kind: TransitKind) -> Option<(&TransitStop, f64)> {
        self.stops
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| (s, p.distance_to(s.position())))
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.stop_id.cmp(&b.0.stop_id)))
    }
}

fn parse_hhmm(s: &str) -> Option<i64> {
    let (h, m) = s.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let h: i64 = h.parse().ok()?;
    let m: i64 = m.parse().ok()?;
    (h < 48 && m < 60).then_some(h * 3600 + m * 60)
}

/// Parses the line-delimited transit dataset format:
///
/// ```text
/// S <stop_id> <METRO|BUS> <lat> <lon>
/// R <route_id> <METRO|BUS> <stop_id,stop_id,...>
/// P <route_id> <lat:lon;lat:lon;...>
/// H <route_id> <first:HH:MM> <last:HH:MM> <headway_s>
/// ```
pub fn parse_transit(text: &str) -> Result<TransitDataset, TransitError> {
    let mut stops = Vec::new();
    let mut routes: Vec<RouteShape> = Vec::new();
    let mut polylines: Vec<(usize, String, Vec<LatLon>)> = Vec::new();
    let mut timetable = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: String| TransitError::Parse { line, message };
        let fields: Vec<&str> = t.split(' ').collect();
        match fields.as_slice() {
            ["S", id, kind, lat, lon] => {
                let lat: f64 = lat.parse().map_err(|_| err(format!("bad latitude {lat:?}")))?;
                let lon: f64 = lon.parse().map_err(|_| err(format!("bad longitude {lon:?}")))?;
                if !LatLon::new(lat, lon).is_valid() {
                    return Err(err("coordinate out of range".into()));
                }
                stops.push(TransitStop {
                    stop_id: id.to_string(),
                    kind: kind.parse().map_err(err)?,
                    lat,
                    lon,
                    route_ids: Vec::new(),
                });
            }
            ["R", id, kind, list] => routes.push(RouteShape {
                route_id: id.to_string(),
                kind: kind.parse().map_err(err)?,
                stop_ids: list.split(',').map(str::to_string).collect(),
                polyline: Vec::new(),
            }),
            ["P", id, points] => {
                polylines.push((line, id.to_string(), parse_point_list(points).map_err(err)?))
            }
            ["H", id, first, last, headway] => timetable.push(TimetableEntry {
                route_id: id.to_string(),
                first_departure: parse_hhmm(first)
                    .ok_or_else(|| err(format!("bad time {first:?}")))?,
                last_departure: parse_hhmm(last).ok_or_else(|| err(format!("bad time {last:?}")))?,
                headway: headway
                    .parse()
                    .map_err(|_| err(format!("bad headway {headway:?}")))?,
            }),
            _ => return Err(err(format!("unrecognized record {t:?}"))),
        }
    }
    for (line, id, points) in polylines {
        let route = routes
            .iter_mut()
            .find(|r| r.route_id == id)
            .ok_or_else(|| TransitError::Parse { line, message: format!("unknown route {id}") })?;
        route.polyline = points;
    }
    // Routes without an explicit shape run straight between their stops.
    let positions: HashMap<&str, LatLon> =
        stops.iter().map(|s| (s.stop_id.as_str(), s.position())).collect();
    for r in &mut routes {
        if r.polyline.is_empty() {
            r.polyline = r
                .stop_ids
                .iter()
                .filter_map(|id| positions.get(id.as_str()).copied())
                .collect();
        }
    }
    TransitDataset::new(stops, routes, timetable)
}

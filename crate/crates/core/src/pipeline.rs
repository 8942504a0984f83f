//! End-to-end detection: windows, refinement, distances, carbon and trips.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Settings};
use crate::estimator::windows;
use crate::model::{parse_zones, RefinedMode, TraceDay, TripSegment, WindowEstimate, Zone, ZoneError};
use crate::transit::{parse_transit, refine_segments, route_feasible, TransitDataset, TransitError};
use crate::trips::{annotate_segments, split_trips, EmissionError, EmissionTable, Trip};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("transit data: {0}")]
    Transit(#[from] TransitError),
    #[error("zones: {0}")]
    Zones(#[from] ZoneError),
    #[error("emission factors: {0}")]
    Emissions(#[from] EmissionError),
}

/// Everything needed to process a trace, loaded once and shared read-only.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub settings: Settings,
    pub transit: TransitDataset,
    pub zones: Vec<Zone>,
    pub emissions: EmissionTable,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub windows: Vec<WindowEstimate>,
    pub segments: Vec<TripSegment>,
    pub trips: Vec<Trip>,
    /// Indices into `segments` whose distance had no position data.
    pub flagged: Vec<usize>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })
}

pub fn fixture_zones() -> Vec<Zone> {
    parse_zones(include_str!("../fixtures/zones_bcn.txt")).expect("bundled zones")
}

impl Pipeline {
    pub fn fixture() -> Self {
        Pipeline {
            settings: Settings::default(),
            transit: TransitDataset::fixture(),
            zones: fixture_zones(),
            emissions: EmissionTable::fixture(),
        }
    }

    /// Loads the data files named in `settings`, falling back to the bundled
    /// Barcelona fixtures.
    pub fn from_settings(settings: Settings) -> Result<Self, PipelineError> {
        let transit = match &settings.transit_file {
            Some(p) => parse_transit(&read(p)?)?,
            None => TransitDataset::fixture(),
        };
        let zones = match &settings.zones_file {
            Some(p) => parse_zones(&read(p)?)?,
            None => fixture_zones(),
        };
        let emissions = match &settings.emissions_file {
            Some(p) => EmissionTable::parse(&read(p)?)?,
            None => EmissionTable::fixture(),
        };
        Ok(Pipeline { settings, transit, zones, emissions })
    }

    pub fn detect(&self, trace: &TraceDay) -> Detection {
        let s = &self.settings;
        let windows = windows(trace, &s.estimator);
        let mut segments = refine_segments(&windows, trace, &self.transit, &s.matcher);
        let flagged = annotate_segments(
            &mut segments,
            &trace.fixes,
            &self.emissions,
            &self.zones,
            s.matcher.max_accuracy,
        );
        let trips = split_trips(&trace.pseudonym, &segments, &s.trips);
        Detection { windows, segments, trips, flagged }
    }

    pub fn report(&self, trace: &TraceDay) -> Report {
        let det = self.detect(trace);
        let segments = det
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let known_route = match (s.mode, s.path.first(), s.path.last()) {
                    (RefinedMode::Metro | RefinedMode::Bus, Some(a), Some(b)) => {
                        Some(route_feasible(*a, *b, s.mode, &self.transit, &self.settings.matcher))
                    }
                    _ => None,
                };
                SegmentReport {
                    start_ts: s.start_ts,
                    end_ts: s.end_ts,
                    mode: s.mode,
                    route_id: s.route_id.clone(),
                    distance_m: s.distance,
                    carbon_g: s.carbon_g,
                    origin_zone: s.origin_zone.clone(),
                    dest_zone: s.dest_zone.clone(),
                    known_route,
                    no_position_data: det.flagged.contains(&i),
                }
            })
            .collect();
        let trips = det
            .trips
            .iter()
            .map(|t| TripReport {
                trip_id: t.trip_id.clone(),
                start_ts: t.start_ts(),
                end_ts: t.end_ts(),
                modes: t.mode_sequence(),
                total_distance_m: t.total_distance,
                total_carbon_g: t.total_carbon_g,
                origin_zone: t.origin_zone().map(str::to_owned),
                dest_zone: t.dest_zone().map(str::to_owned),
            })
            .collect();
        Report {
            pseudonym: trace.pseudonym.clone(),
            date: trace.date,
            window_count: det.windows.len(),
            segments,
            trips,
        }
    }
}

/// JSON shape of a detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pseudonym: String,
    pub date: NaiveDate,
    pub window_count: usize,
    pub segments: Vec<SegmentReport>,
    pub trips: Vec<TripReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub start_ts: i64,
    pub end_ts: i64,
    pub mode: RefinedMode,
    pub route_id: Option<String>,
    pub distance_m: f64,
    pub carbon_g: f64,
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
    /// For transit segments: whether the network connects both ends.
    pub known_route: Option<bool>,
    pub no_position_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripReport {
    pub trip_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub modes: Vec<RefinedMode>,
    pub total_distance_m: f64,
    pub total_carbon_g: f64,
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
}

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("-")
}

impl Report {
    /// Human-readable report. Numbers use shortest round-trip formatting so
    /// the text carries the same values as the JSON form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "trace {} {} windows={}", self.pseudonym, self.date, self.window_count).unwrap();
        for s in &self.segments {
            writeln!(
                out,
                "segment {} {} {} route={} distance_m={} carbon_g={} zones={}>{} known_route={} no_data={}",
                s.start_ts,
                s.end_ts,
                s.mode,
                opt(&s.route_id),
                s.distance_m,
                s.carbon_g,
                opt(&s.origin_zone),
                opt(&s.dest_zone),
                s.known_route.map_or("-".to_string(), |b| b.to_string()),
                s.no_position_data,
            )
            .unwrap();
        }
        for t in &self.trips {
            let modes: Vec<&str> = t.modes.iter().map(|m| m.token()).collect();
            writeln!(
                out,
                "trip {} {} {} modes={} distance_m={} carbon_g={} zones={}>{}",
                t.trip_id,
                t.start_ts,
                t.end_ts,
                modes.join(","),
                t.total_distance_m,
                t.total_carbon_g,
                opt(&t.origin_zone),
                opt(&t.dest_zone),
            )
            .unwrap();
        }
        out
    }
}

//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are WGS84 degrees in `f64`; timestamps are integer seconds
//! since the Unix epoch (UTC). Values are plain data and are never mutated
//! once a stage has produced them.

mod codec;
mod geo;
mod zone;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use codec::{decode_trace, encode_trace, ParseError, FORMAT_VERSION};
pub(crate) use codec::{parse_header, parse_record, TraceBuilder};
pub use geo::{
    haversine_distance, path_length, point_segment_distance, polyline_distance, GeoError,
    EARTH_RADIUS_M,
};
pub(crate) use zone::parse_point_list;
pub use zone::{check_disjoint, parse_zones, point_in_zone, zone_of, Zone, ZoneError};

/// Default accuracy radius above which a fix is considered low quality.
pub const DEFAULT_MAX_ACCURACY_M: f64 = 100.0;

const SECONDS_PER_DAY: i64 = 86_400;

/// Coarse activity class reported by the on-device recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityClass {
    Still,
    OnFoot,
    Bicycle,
    Vehicle,
    Unknown,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 5] = [
        ActivityClass::Still,
        ActivityClass::OnFoot,
        ActivityClass::Bicycle,
        ActivityClass::Vehicle,
        ActivityClass::Unknown,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ActivityClass::Still => "STILL",
            ActivityClass::OnFoot => "ON_FOOT",
            ActivityClass::Bicycle => "BICYCLE",
            ActivityClass::Vehicle => "VEHICLE",
            ActivityClass::Unknown => "UNKNOWN",
        }
    }

    /// Mode assigned before any transit matching has happened.
    pub fn default_refinement(self) -> RefinedMode {
        match self {
            ActivityClass::Still => RefinedMode::Still,
            ActivityClass::OnFoot => RefinedMode::Walk,
            ActivityClass::Bicycle => RefinedMode::Bicycle,
            ActivityClass::Vehicle => RefinedMode::PrivateVehicle,
            ActivityClass::Unknown => RefinedMode::Unknown,
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ActivityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivityClass::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| format!("unknown activity class {s:?}"))
    }
}

/// Activity class after transit disambiguation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RefinedMode {
    Walk,
    Bicycle,
    Metro,
    Bus,
    PrivateVehicle,
    Still,
    Unknown,
}

impl RefinedMode {
    pub const ALL: [RefinedMode; 7] = [
        RefinedMode::Walk,
        RefinedMode::Bicycle,
        RefinedMode::Metro,
        RefinedMode::Bus,
        RefinedMode::PrivateVehicle,
        RefinedMode::Still,
        RefinedMode::Unknown,
    ];

    pub fn token(self) -> &'static str {
        match self {
            RefinedMode::Walk => "WALK",
            RefinedMode::Bicycle => "BICYCLE",
            RefinedMode::Metro => "METRO",
            RefinedMode::Bus => "BUS",
            RefinedMode::PrivateVehicle => "PRIVATE_VEHICLE",
            RefinedMode::Still => "STILL",
            RefinedMode::Unknown => "UNKNOWN",
        }
    }

    /// The raw class a recognizer reports for this mode.
    pub fn raw_class(self) -> ActivityClass {
        match self {
            RefinedMode::Walk => ActivityClass::OnFoot,
            RefinedMode::Bicycle => ActivityClass::Bicycle,
            RefinedMode::Metro | RefinedMode::Bus | RefinedMode::PrivateVehicle => {
                ActivityClass::Vehicle
            }
            RefinedMode::Still => ActivityClass::Still,
            RefinedMode::Unknown => ActivityClass::Unknown,
        }
    }
}

impl fmt::Display for RefinedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RefinedMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RefinedMode::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// One position report from the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFix {
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    /// Radius of 68% confidence, meters.
    pub accuracy: f64,
    pub speed: Option<f64>,
}

impl LocationFix {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    /// Usable fixes take part in distances and gap detection. Low-quality
    /// fixes stay in the trace.
    pub fn is_usable(&self, max_accuracy: f64) -> bool {
        self.accuracy <= max_accuracy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySample {
    pub timestamp: i64,
    pub class: ActivityClass,
    pub confidence: u8,
}

/// A device's sanitized sensor stream for one UTC calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDay {
    pub pseudonym: String,
    pub date: NaiveDate,
    pub fixes: Vec<LocationFix>,
    pub samples: Vec<ActivitySample>,
}

impl TraceDay {
    pub fn empty(pseudonym: impl Into<String>, date: NaiveDate) -> Self {
        TraceDay {
            pseudonym: pseudonym.into(),
            date,
            fixes: Vec::new(),
            samples: Vec::new(),
        }
    }

    /// Start of the trace's day in epoch seconds.
    pub fn day_start(&self) -> i64 {
        day_start(self.date)
    }

    /// Checks every structural invariant of a trace. Returns the first
    /// violation as a human readable message.
    pub fn validate(&self) -> Result<(), String> {
        if self.pseudonym.is_empty() || self.pseudonym.chars().any(char::is_whitespace) {
            return Err("pseudonym must be a non-empty token".into());
        }
        let lo = self.day_start();
        let hi = lo + SECONDS_PER_DAY;
        let mut prev: Option<i64> = None;
        for fix in &self.fixes {
            validate_fix(fix)?;
            if !(lo..hi).contains(&fix.timestamp) {
                return Err(format!("fix timestamp {} outside {}", fix.timestamp, self.date));
            }
            if prev.is_some_and(|p| fix.timestamp <= p) {
                return Err(format!("fix timestamps not increasing at {}", fix.timestamp));
            }
            prev = Some(fix.timestamp);
        }
        let mut prev: Option<i64> = None;
        for s in &self.samples {
            if s.confidence > 100 {
                return Err(format!("confidence {} out of range", s.confidence));
            }
            if !(lo..hi).contains(&s.timestamp) {
                return Err(format!("sample timestamp {} outside {}", s.timestamp, self.date));
            }
            if prev.is_some_and(|p| s.timestamp < p) {
                return Err(format!("sample timestamps decrease at {}", s.timestamp));
            }
            prev = Some(s.timestamp);
        }
        Ok(())
    }
}

pub(crate) fn validate_fix(fix: &LocationFix) -> Result<(), String> {
    if !fix.lat.is_finite() || !(-90.0..=90.0).contains(&fix.lat) {
        return Err("lat out of range".into());
    }
    if !fix.lon.is_finite() || !(-180.0..=180.0).contains(&fix.lon) {
        return Err("lon out of range".into());
    }
    if !fix.accuracy.is_finite() || fix.accuracy < 0.0 {
        return Err("accuracy must be finite and non-negative".into());
    }
    if let Some(v) = fix.speed {
        if !v.is_finite() || v < 0.0 {
            return Err("speed must be finite and non-negative".into());
        }
    }
    Ok(())
}

pub fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

/// Seconds since midnight UTC.
pub fn seconds_of_day(ts: i64) -> i64 {
    ts.rem_euclid(SECONDS_PER_DAY)
}

/// Rounds to the number of decimals the trace format carries, so that
/// values survive an encode/decode round trip unchanged.
pub fn quantize(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Statistical estimate of the activity class over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window_start: i64,
    pub window_end: i64,
    pub class: ActivityClass,
    pub support: usize,
    pub mean_confidence: f64,
    pub sample_count: usize,
}

/// A mode-labelled leg of a journey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSegment {
    pub start_ts: i64,
    pub end_ts: i64,
    pub mode: RefinedMode,
    /// Matched bus route, when `mode` is `Bus`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_id: Option<String>,
    pub distance: f64,
    pub path: Vec<LatLon>,
    pub carbon_g: f64,
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
}

impl TripSegment {
    pub fn new(start_ts: i64, end_ts: i64, mode: RefinedMode) -> Self {
        TripSegment {
            start_ts,
            end_ts,
            mode,
            route_id: None,
            distance: 0.0,
            path: Vec::new(),
            carbon_g: 0.0,
            origin_zone: None,
            dest_zone: None,
        }
    }

    pub fn duration(&self) -> i64 {
        self.end_ts - self.start_ts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransitKind {
    Metro,
    Bus,
}

impl TransitKind {
    pub fn token(self) -> &'static str {
        match self {
            TransitKind::Metro => "METRO",
            TransitKind::Bus => "BUS",
        }
    }

    pub fn mode(self) -> RefinedMode {
        match self {
            TransitKind::Metro => RefinedMode::Metro,
            TransitKind::Bus => RefinedMode::Bus,
        }
    }
}

impl FromStr for TransitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "METRO" => Ok(TransitKind::Metro),
            "BUS" => Ok(TransitKind::Bus),
            other => Err(format!("unknown transit kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitStop {
    pub stop_id: String,
    pub kind: TransitKind,
    pub lat: f64,
    pub lon: f64,
    pub route_ids: Vec<String>,
}

impl TransitStop {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteShape {
    pub route_id: String,
    pub kind: TransitKind,
    pub stop_ids: Vec<String>,
    pub polyline: Vec<LatLon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimetableEntry {
    pub route_id: String,
    /// Seconds of day.
    pub first_departure: i64,
    pub last_departure: i64,
    pub headway: i64,
}

impl TimetableEntry {
    /// Whether a trip starting at `second_of_day` falls inside the service
    /// window, including one headway of slack after the last departure.
    pub fn in_service(&self, second_of_day: i64) -> bool {
        second_of_day >= self.first_departure
            && second_of_day <= self.last_departure + self.headway
    }
}

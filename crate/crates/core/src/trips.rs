//! Trip assembly, segment distances, carbon footprint and usual routes.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{path_length, zone_of, LatLon, LocationFix, RefinedMode, TripSegment, Zone};

#[derive(Debug, Error, PartialEq)]
pub enum EmissionError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no emission factor for {0}")]
    Missing(RefinedMode),
    #[error("emission factor for {mode} must be {expected}, got {got}")]
    Invalid {
        mode: RefinedMode,
        expected: &'static str,
        got: f64,
    },
}

/// Grams of CO2 per passenger-km for every refined mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    factors: BTreeMap<RefinedMode, f64>,
}

impl EmissionTable {
    /// Builds a table; every mode needs a finite non-negative factor and the
    /// non-motorised modes must be zero.
    pub fn new(factors: BTreeMap<RefinedMode, f64>) -> Result<Self, EmissionError> {
        for mode in RefinedMode::ALL {
            let got = *factors.get(&mode).ok_or(EmissionError::Missing(mode))?;
            let zero = matches!(
                mode,
                RefinedMode::Walk | RefinedMode::Bicycle | RefinedMode::Still
            );
            if zero && got != 0.0 {
                return Err(EmissionError::Invalid { mode, expected: "0", got });
            }
            if !got.is_finite() || got < 0.0 {
                return Err(EmissionError::Invalid { mode, expected: ">= 0", got });
            }
        }
        Ok(EmissionTable { factors })
    }

    /// Parses `<MODE> <g_per_km>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EmissionError> {
        let mut factors = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| EmissionError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [mode, value] = fields[..] else {
                return Err(err(format!("expected `<MODE> <g_per_km>`, got {line:?}")));
            };
            let mode: RefinedMode = mode.parse().map_err(err)?;
            let value: f64 = value
                .parse()
                .map_err(|_| err(format!("bad factor {value:?}")))?;
            if factors.insert(mode, value).is_some() {
                return Err(err(format!("duplicate factor for {mode}")));
            }
        }
        Self::new(factors)
    }

    pub fn fixture() -> Self {
        Self::parse(include_str!("../fixtures/emissions.txt")).expect("bundled emission table")
    }

    pub fn factor(&self, mode: RefinedMode) -> f64 {
        self.factors[&mode]
    }
}

impl Default for EmissionTable {
    fn default() -> Self {
        Self::fixture()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripConfig {
    /// Still periods at least this long end a trip, s.
    pub still_split: i64,
}

impl Default for TripConfig {
    fn default() -> Self {
        TripConfig { still_split: 300 }
    }
}

/// Distance of one segment; `flagged` marks a segment with no usable
/// position data, whose distance is reported as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDistance {
    pub meters: f64,
    pub flagged: bool,
}

/// Length travelled during a segment.
///
/// Sums great-circle distances over consecutive usable fixes inside
/// `[start_ts, end_ts)`. Metro segments use their refined path, which runs
/// through the entry and exit stations.
pub fn segment_distance(
    segment: &TripSegment,
    fixes: &[LocationFix],
    max_accuracy: f64,
) -> SegmentDistance {
    let points: Vec<LatLon> = if segment.mode == RefinedMode::Metro {
        segment.path.clone()
    } else {
        fixes
            .iter()
            .filter(|f| f.timestamp >= segment.start_ts && f.timestamp < segment.end_ts)
            .filter(|f| f.is_usable(max_accuracy))
            .map(LocationFix::position)
            .collect()
    };
    if points.is_empty() {
        return SegmentDistance { meters: 0.0, flagged: true };
    }
    SegmentDistance { meters: path_length(&points), flagged: false }
}

pub fn carbon(segment: &TripSegment, table: &EmissionTable) -> f64 {
    table.factor(segment.mode) * segment.distance / 1000.0
}

/// Fills distance, carbon and zones of freshly refined segments. Returns the
/// indices of segments whose distance had no data behind it.
pub fn annotate_segments(
    segments: &mut [TripSegment],
    fixes: &[LocationFix],
    table: &EmissionTable,
    zones: &[Zone],
    max_accuracy: f64,
) -> Vec<usize> {
    let mut flagged = Vec::new();
    for (i, seg) in segments.iter_mut().enumerate() {
        let d = segment_distance(seg, fixes, max_accuracy);
        if d.flagged {
            warn!(
                "segment {}..{} ({}) has no usable position data",
                seg.start_ts, seg.end_ts, seg.mode
            );
            flagged.push(i);
        }
        seg.distance = d.meters;
        seg.carbon_g = carbon(seg, table);
        seg.origin_zone = seg.path.first().and_then(|p| zone_of(*p, zones)).map(str::to_owned);
        seg.dest_zone = seg.path.last().and_then(|p| zone_of(*p, zones)).map(str::to_owned);
    }
    flagged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub trip_id: String,
    pub pseudonym: String,
    pub segments: Vec<TripSegment>,
    pub total_distance: f64,
    pub total_carbon_g: f64,
}

impl Trip {
    fn new(pseudonym: &str, segments: Vec<TripSegment>) -> Self {
        let start = segments[0].start_ts;
        Trip {
            trip_id: format!("t{start}"),
            pseudonym: pseudonym.to_owned(),
            total_distance: segments.iter().map(|s| s.distance).sum(),
            total_carbon_g: segments.iter().map(|s| s.carbon_g).sum(),
            segments,
        }
    }

    pub fn start_ts(&self) -> i64 {
        self.segments[0].start_ts
    }

    pub fn end_ts(&self) -> i64 {
        self.segments[self.segments.len() - 1].end_ts
    }

    /// Zone holding the start of the first segment.
    pub fn origin_zone(&self) -> Option<&str> {
        self.segments[0].origin_zone.as_deref()
    }

    /// Zone holding the end of the last segment.
    pub fn dest_zone(&self) -> Option<&str> {
        self.segments[self.segments.len() - 1].dest_zone.as_deref()
    }

    /// Modes of the non-Still segments, consecutive repeats collapsed.
    pub fn mode_sequence(&self) -> Vec<RefinedMode> {
        let mut modes: Vec<RefinedMode> = Vec::new();
        for s in &self.segments {
            if s.mode != RefinedMode::Still && modes.last() != Some(&s.mode) {
                modes.push(s.mode);
            }
        }
        modes
    }

    pub fn signature(&self) -> RouteSignature {
        RouteSignature {
            origin_zone: self.origin_zone().map(str::to_owned),
            dest_zone: self.dest_zone().map(str::to_owned),
            modes: self.mode_sequence(),
        }
    }
}

/// Cuts a day's segments into trips.
///
/// A Still segment of at least `still_split` seconds, or a hole of that
/// length between consecutive segments, closes the current trip. Shorter
/// Still segments stay inside a trip but never open or close one.
pub fn split_trips(pseudonym: &str, segments: &[TripSegment], cfg: &TripConfig) -> Vec<Trip> {
    let mut trips = Vec::new();
    let mut current: Vec<TripSegment> = Vec::new();
    let mut close = |current: &mut Vec<TripSegment>| {
        while current.last().is_some_and(|s| s.mode == RefinedMode::Still) {
            current.pop();
        }
        if !current.is_empty() {
            trips.push(Trip::new(pseudonym, std::mem::take(current)));
        }
    };
    for seg in segments {
        if let Some(prev) = current.last() {
            if seg.start_ts - prev.end_ts >= cfg.still_split {
                close(&mut current);
            }
        }
        if seg.mode == RefinedMode::Still {
            if seg.duration() >= cfg.still_split {
                close(&mut current);
                continue;
            }
            if current.is_empty() {
                continue;
            }
        }
        current.push(seg.clone());
    }
    close(&mut current);
    trips
}

/// Zones at both ends of a trip and its ordered modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RouteSignature {
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
    pub modes: Vec<RefinedMode>,
}

impl RouteSignature {
    fn sort_key(&self) -> (&str, &str, Vec<&'static str>) {
        (
            self.origin_zone.as_deref().unwrap_or(""),
            self.dest_zone.as_deref().unwrap_or(""),
            self.modes.iter().map(|m| m.token()).collect(),
        )
    }
}

impl Ord for RouteSignature {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.origin_zone.cmp(&other.origin_zone))
            .then_with(|| self.dest_zone.cmp(&other.dest_zone))
    }
}

impl PartialOrd for RouteSignature {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Route signatures seen at least `min_support` times, most frequent first,
/// ties in signature order.
pub fn usual_routes(trips: &[Trip], min_support: usize) -> Vec<(RouteSignature, usize)> {
    let mut counts: BTreeMap<RouteSignature, usize> = BTreeMap::new();
    for t in trips {
        *counts.entry(t.signature()).or_default() += 1;
    }
    let mut out: Vec<_> = counts
        .into_iter()
        .filter(|(_, n)| *n >= min_support)
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{haversine_distance, EARTH_RADIUS_M};
    use proptest::prelude::*;

    fn seg(start: i64, end: i64, mode: RefinedMode) -> TripSegment {
        TripSegment::new(start, end, mode)
    }

    fn chain(plan: &[(RefinedMode, i64)]) -> Vec<TripSegment> {
        let mut t = 0;
        plan.iter()
            .map(|(m, d)| {
                let s = seg(t, t + d, *m);
                t += d;
                s
            })
            .collect()
    }

    fn fix(ts: i64, lat: f64, lon: f64) -> LocationFix {
        LocationFix { timestamp: ts, lat, lon, accuracy: 5.0, speed: None }
    }

    use RefinedMode::*;

    #[test]
    fn long_still_splits() {
        let trips = split_trips("p", &chain(&[(Walk, 240), (Still, 600), (Walk, 240)]), &TripConfig::default());
        assert_eq!(trips.len(), 2);
        assert!(trips.iter().all(|t| t.segments.len() == 1));
    }

    #[test]
    fn short_still_stays_inside() {
        let trips = split_trips("p", &chain(&[(Walk, 240), (Still, 120), (Bus, 600)]), &TripConfig::default());
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].segments.len(), 3);
    }

    #[test]
    fn empty_and_all_still() {
        assert!(split_trips("p", &[], &TripConfig::default()).is_empty());
        assert!(split_trips("p", &chain(&[(Still, 120), (Still, 1200)]), &TripConfig::default()).is_empty());
    }

    #[test]
    fn short_still_at_edges_is_trimmed() {
        let trips = split_trips(
            "p",
            &chain(&[(Still, 120), (Walk, 240), (Still, 120), (Still, 600), (Walk, 120)]),
            &TripConfig::default(),
        );
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[0].segments.len(), 1);
        assert_eq!(trips[0].start_ts(), 120);
    }

    #[test]
    fn stationary_distance_is_zero() {
        let s = seg(0, 100, Walk);
        let fixes: Vec<_> = (0..5).map(|i| fix(i * 20, 41.0, 2.0)).collect();
        let d = segment_distance(&s, &fixes, 100.0);
        assert_eq!(d, SegmentDistance { meters: 0.0, flagged: false });
    }

    #[test]
    fn collinear_equatorial_fixes() {
        let step = 100.0 / (std::f64::consts::PI * EARTH_RADIUS_M / 180.0);
        let fixes = [fix(0, 0.0, 0.0), fix(20, 0.0, step), fix(40, 0.0, 2.0 * step)];
        let d = segment_distance(&seg(0, 60, Walk), &fixes, 100.0);
        assert!((d.meters - 200.0).abs() < 0.1);
    }

    #[test]
    fn fixes_outside_span_or_inaccurate_ignored() {
        let mut fixes = vec![fix(0, 0.0, 0.0), fix(20, 0.0, 0.001), fix(60, 0.0, 0.01)];
        fixes.push(LocationFix { accuracy: 500.0, ..fix(40, 1.0, 1.0) });
        fixes.sort_by_key(|f| f.timestamp);
        let d = segment_distance(&seg(0, 60, Walk), &fixes, 100.0);
        let oracle = haversine_distance(LatLon::new(0.0, 0.0), LatLon::new(0.0, 0.001)).unwrap();
        assert!((d.meters - oracle).abs() < 1e-9);
    }

    #[test]
    fn metro_uses_station_path() {
        let k = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
        let mut s = seg(0, 600, Metro);
        s.path = vec![LatLon::new(41.0, 2.0), LatLon::new(41.0 + 4000.0 / k, 2.0)];
        let d = segment_distance(&s, &[], 100.0);
        assert!((d.meters - 4000.0).abs() < 0.01);
        assert!(!d.flagged);
    }

    #[test]
    fn no_data_is_flagged() {
        let d = segment_distance(&seg(0, 600, Bus), &[], 100.0);
        assert_eq!(d, SegmentDistance { meters: 0.0, flagged: true });
        assert!(segment_distance(&seg(0, 600, Metro), &[], 100.0).flagged);
    }

    #[test]
    fn carbon_examples() {
        let table = EmissionTable::fixture();
        let with = |mode, m| TripSegment { distance: m, ..seg(0, 1, mode) };
        assert_eq!(carbon(&with(Walk, 2000.0), &table), 0.0);
        assert_eq!(carbon(&with(Bus, 10_000.0), &table), 800.0);
        assert_eq!(carbon(&with(Metro, 5000.0), &table), 200.0);
    }

    #[test]
    fn emission_table_validation() {
        assert_eq!(
            EmissionTable::parse("WALK 0\nBICYCLE 0\nSTILL 0\nUNKNOWN 0\nMETRO 40\nBUS 80\n"),
            Err(EmissionError::Missing(PrivateVehicle))
        );
        let bad = include_str!("../fixtures/emissions.txt").replace("WALK 0", "WALK 5");
        assert!(matches!(EmissionTable::parse(&bad), Err(EmissionError::Invalid { mode: Walk, .. })));
        let neg = include_str!("../fixtures/emissions.txt").replace("BUS 80", "BUS -1");
        assert!(matches!(EmissionTable::parse(&neg), Err(EmissionError::Invalid { mode: Bus, .. })));
        assert!(matches!(EmissionTable::parse("TRAM 3"), Err(EmissionError::Parse { line: 1, .. })));
    }

    fn trip_between(a: &str, b: &str, modes: &[RefinedMode]) -> Trip {
        let mut segs = chain(&modes.iter().map(|m| (*m, 120)).collect::<Vec<_>>());
        segs[0].origin_zone = Some(a.into());
        segs.last_mut().unwrap().dest_zone = Some(b.into());
        Trip::new("p", segs)
    }

    #[test]
    fn usual_routes_examples() {
        let five: Vec<_> = (0..5).map(|_| trip_between("A", "B", &[Walk, Metro, Walk])).collect();
        let r = usual_routes(&five, 3);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].1, 5);
        assert_eq!(r[0].0.modes, vec![Walk, Metro, Walk]);

        let mut mixed: Vec<_> = (0..4).map(|_| trip_between("A", "B", &[Walk])).collect();
        mixed.extend((0..2).map(|_| trip_between("B", "A", &[Bus])));
        let r = usual_routes(&mixed, 3);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].0.origin_zone.as_deref(), r[0].1), (Some("A"), 4));

        assert!(usual_routes(&[], 1).is_empty());
    }

    #[test]
    fn usual_routes_tie_order() {
        let trips = vec![
            trip_between("B", "A", &[Walk]),
            trip_between("A", "B", &[Walk]),
        ];
        let r = usual_routes(&trips, 1);
        assert_eq!(r[0].0.origin_zone.as_deref(), Some("A"));
    }

    fn mode_strategy() -> impl Strategy<Value = RefinedMode> {
        prop::sample::select(RefinedMode::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn totals_conserved_and_every_moving_segment_in_one_trip(
            plan in prop::collection::vec((mode_strategy(), 1i64..900, 0.0f64..5000.0), 0..30),
        ) {
            let table = EmissionTable::fixture();
            let mut segs = chain(&plan.iter().map(|(m, d, _)| (*m, *d)).collect::<Vec<_>>());
            for (s, (_, _, dist)) in segs.iter_mut().zip(&plan) {
                s.distance = *dist;
                s.carbon_g = carbon(s, &table);
            }
            let trips = split_trips("p", &segs, &TripConfig::default());
            for t in &trips {
                prop_assert_eq!(t.total_distance, t.segments.iter().map(|s| s.distance).sum::<f64>());
                prop_assert_eq!(t.total_carbon_g, t.segments.iter().map(|s| s.carbon_g).sum::<f64>());
            }
            let placed: Vec<i64> = trips.iter().flat_map(|t| &t.segments).filter(|s| s.mode != Still).map(|s| s.start_ts).collect();
            let moving: Vec<i64> = segs.iter().filter(|s| s.mode != Still).map(|s| s.start_ts).collect();
            prop_assert_eq!(placed, moving);
        }

        #[test]
        fn resplitting_is_idempotent(
            plan in prop::collection::vec((mode_strategy(), 1i64..900), 0..30),
        ) {
            let cfg = TripConfig::default();
            let trips = split_trips("p", &chain(&plan), &cfg);
            let flat: Vec<TripSegment> = trips.iter().flat_map(|t| t.segments.clone()).collect();
            prop_assert_eq!(split_trips("p", &flat, &cfg), trips);
        }

        #[test]
        fn carbon_is_linear(mode in mode_strategy(), d in 0.0f64..1e6) {
            let table = EmissionTable::fixture();
            let one = TripSegment { distance: d, ..seg(0, 1, mode) };
            let two = TripSegment { distance: 2.0 * d, ..seg(0, 1, mode) };
            prop_assert_eq!(carbon(&two, &table), 2.0 * carbon(&one, &table));
        }
    }
}

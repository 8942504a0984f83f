//! Aggregate queries over stored trips.
//!
//! Every function here is a pure function of a record slice and a filter.
//! Trip-level predicates (dates, zones, time of day, pseudonym) select trips;
//! the mode set selects trips containing one of the modes, or segments of
//! those modes for segment-level aggregates.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::model::{seconds_of_day, RefinedMode, TripSegment};
use crate::store::{paginate, Page, StoreError, StoredRecord};
use crate::trips::{usual_routes, Trip};

pub const MAX_PAGE: usize = 500;
pub const DEFAULT_PAGE: usize = 100;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("bad parameter {name}: {message}")]
    BadParam { name: String, message: String },
    #[error(transparent)]
    Cursor(#[from] StoreError),
}

fn bad(name: &str, message: impl Into<String>) -> AnalyticsError {
    AnalyticsError::BadParam { name: name.to_owned(), message: message.into() }
}

/// Empty sets and absent bounds match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalyticsFilter {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub modes: BTreeSet<RefinedMode>,
    pub zones: BTreeSet<String>,
    /// Half-open `[time_from, time_to)` over the trip start, seconds of day.
    pub time_from: Option<i64>,
    pub time_to: Option<i64>,
    pub pseudonym: Option<String>,
}

fn parse_time_of_day(name: &str, s: &str) -> Result<i64, AnalyticsError> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<i64> = parts
        .iter()
        .map(|p| p.parse::<i64>().ok().filter(|_| p.len() == 2))
        .collect::<Option<_>>()
        .ok_or_else(|| bad(name, "expected HH:MM or HH:MM:SS"))?;
    let secs = match nums.as_slice() {
        [h, m] => h * 3600 + m * 60,
        [h, m, s] if *s < 60 => h * 3600 + m * 60 + s,
        _ => return Err(bad(name, "expected HH:MM or HH:MM:SS")),
    };
    if nums[1] >= 60 || secs > 86_400 {
        return Err(bad(name, "out of range"));
    }
    Ok(secs)
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

impl AnalyticsFilter {
    /// Builds a filter from query parameters. `extra` names parameters the
    /// caller handles itself; any other unknown name is an error.
    pub fn from_query(params: &[(String, String)], extra: &[&str]) -> Result<Self, AnalyticsError> {
        let mut f = AnalyticsFilter::default();
        for (k, v) in params {
            let date = |v: &str| {
                NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| bad(k, "expected YYYY-MM-DD"))
            };
            match k.as_str() {
                "from" => f.from = Some(date(v)?),
                "to" => f.to = Some(date(v)?),
                "modes" | "mode" => {
                    for m in split_list(v) {
                        f.modes.insert(m.parse().map_err(|e: String| bad(k, e))?);
                    }
                }
                "zones" | "zone" => f.zones.extend(split_list(v).map(str::to_owned)),
                "time_from" => f.time_from = Some(parse_time_of_day(k, v)?),
                "time_to" => f.time_to = Some(parse_time_of_day(k, v)?),
                "pseudonym" => f.pseudonym = Some(v.clone()),
                other if extra.contains(&other) => {}
                other => return Err(bad(other, "unknown parameter")),
            }
        }
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if let (Some(a), Some(b)) = (self.from, self.to) {
            if a > b {
                return Err(bad("from", "must not be after `to`"));
            }
        }
        if let (Some(a), Some(b)) = (self.time_from, self.time_to) {
            if a >= b {
                return Err(bad("time_from", "must be before `time_to`"));
            }
        }
        Ok(())
    }

    fn record_matches(&self, r: &StoredRecord) -> bool {
        self.from.is_none_or(|d| r.date >= d)
            && self.to.is_none_or(|d| r.date <= d)
            && self.pseudonym.as_deref().is_none_or(|p| r.pseudonym == p)
    }

    /// All predicates except the mode set.
    fn trip_matches_base(&self, t: &Trip) -> bool {
        let tod = seconds_of_day(t.start_ts());
        let zone_ok = self.zones.is_empty()
            || [t.origin_zone(), t.dest_zone()]
                .into_iter()
                .flatten()
                .any(|z| self.zones.contains(z));
        zone_ok
            && self.time_from.is_none_or(|a| tod >= a)
            && self.time_to.is_none_or(|b| tod < b)
    }

    fn mode_ok(&self, m: RefinedMode) -> bool {
        self.modes.is_empty() || self.modes.contains(&m)
    }

    fn trip_matches(&self, t: &Trip) -> bool {
        self.trip_matches_base(t) && t.segments.iter().any(|s| self.mode_ok(s.mode))
    }

    fn matched_trips<'a>(
        &'a self,
        records: &'a [StoredRecord],
    ) -> impl Iterator<Item = (&'a StoredRecord, &'a Trip)> + 'a {
        records
            .iter()
            .filter(|r| self.record_matches(r))
            .flat_map(|r| r.trips.iter().map(move |t| (r, t)))
            .filter(|(_, t)| self.trip_matches(t))
    }

    fn matched_segments<'a>(&'a self, records: &'a [StoredRecord]) -> impl Iterator<Item = &'a TripSegment> + 'a {
        records
            .iter()
            .filter(|r| self.record_matches(r))
            .flat_map(|r| &r.trips)
            .filter(|t| self.trip_matches_base(t))
            .flat_map(|t| &t.segments)
            .filter(|s| self.mode_ok(s.mode))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModeShare {
    pub segment_count: usize,
    pub total_distance_m: f64,
    /// Distance-weighted share.
    pub share: f64,
    /// Count-weighted share.
    pub count_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalSplit {
    pub segment_count: usize,
    pub total_distance_m: f64,
    /// One entry per mode, zero-filled.
    pub modes: BTreeMap<RefinedMode, ModeShare>,
}

pub fn modal_split(records: &[StoredRecord], filter: &AnalyticsFilter) -> ModalSplit {
    let mut modes: BTreeMap<RefinedMode, ModeShare> =
        RefinedMode::ALL.into_iter().map(|m| (m, ModeShare::default())).collect();
    for s in filter.matched_segments(records) {
        let e = modes.get_mut(&s.mode).expect("all modes present");
        e.segment_count += 1;
        e.total_distance_m += s.distance;
    }
    let segment_count: usize = modes.values().map(|e| e.segment_count).sum();
    let total_distance_m: f64 = modes.values().map(|e| e.total_distance_m).sum();
    for e in modes.values_mut() {
        if total_distance_m > 0.0 {
            e.share = e.total_distance_m / total_distance_m;
        }
        if segment_count > 0 {
            e.count_share = e.segment_count as f64 / segment_count as f64;
        }
    }
    ModalSplit { segment_count, total_distance_m, modes }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdMatrix {
    pub zones: Vec<String>,
    /// `cells[o][d]` counts trips from `zones[o]` to `zones[d]`.
    pub cells: Vec<Vec<u64>>,
    pub matched_trips: u64,
    /// Matched trips with an endpoint outside every listed zone.
    pub unzoned: u64,
}

pub fn od_matrix(records: &[StoredRecord], zones: &[String], filter: &AnalyticsFilter) -> OdMatrix {
    let idx = |z: Option<&str>| z.and_then(|z| zones.iter().position(|x| x == z));
    let mut cells = vec![vec![0u64; zones.len()]; zones.len()];
    let (mut matched_trips, mut unzoned) = (0, 0);
    for (_, t) in filter.matched_trips(records) {
        matched_trips += 1;
        match (idx(t.origin_zone()), idx(t.dest_zone())) {
            (Some(o), Some(d)) => cells[o][d] += 1,
            _ => unzoned += 1,
        }
    }
    OdMatrix { zones: zones.to_vec(), cells, matched_trips, unzoned }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarbonTotal {
    pub total_g: f64,
    /// Modes with at least one matched segment.
    pub by_mode: BTreeMap<RefinedMode, f64>,
}

pub fn carbon_total(records: &[StoredRecord], filter: &AnalyticsFilter) -> CarbonTotal {
    let mut by_mode: BTreeMap<RefinedMode, f64> = BTreeMap::new();
    for s in filter.matched_segments(records) {
        *by_mode.entry(s.mode).or_default() += s.carbon_g;
    }
    // Summed in map order so the total equals the breakdown bit for bit.
    let total_g = by_mode.values().fold(0.0, |acc, g| acc + g);
    CarbonTotal { total_g, by_mode }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripSummary {
    pub trip_id: String,
    pub date: NaiveDate,
    /// Present only when the filter named this pseudonym.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudonym: Option<String>,
    pub start_ts: i64,
    pub end_ts: i64,
    pub modes: Vec<RefinedMode>,
    pub distance_m: f64,
    pub carbon_g: f64,
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
}

/// Matched trips ordered by (date, pseudonym, start), `limit` capped at
/// [`MAX_PAGE`].
pub fn trips(
    records: &[StoredRecord],
    filter: &AnalyticsFilter,
    cursor: Option<&str>,
    limit: usize,
) -> Result<Page<TripSummary>, AnalyticsError> {
    let mut matched: Vec<(&StoredRecord, &Trip)> = filter.matched_trips(records).collect();
    matched.sort_by(|(ra, ta), (rb, tb)| {
        (ra.date, &ra.pseudonym, ta.start_ts(), &ra.envelope_id)
            .cmp(&(rb.date, &rb.pseudonym, tb.start_ts(), &rb.envelope_id))
    });
    let reveal = filter.pseudonym.is_some();
    let summaries: Vec<TripSummary> = matched
        .into_iter()
        .map(|(r, t)| TripSummary {
            trip_id: t.trip_id.clone(),
            date: r.date,
            pseudonym: reveal.then(|| r.pseudonym.clone()),
            start_ts: t.start_ts(),
            end_ts: t.end_ts(),
            modes: t.mode_sequence(),
            distance_m: t.total_distance,
            carbon_g: t.total_carbon_g,
            origin_zone: t.origin_zone().map(str::to_owned),
            dest_zone: t.dest_zone().map(str::to_owned),
        })
        .collect();
    Ok(paginate(&summaries, cursor, limit.clamp(1, MAX_PAGE))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteCount {
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
    pub modes: Vec<RefinedMode>,
    pub count: usize,
}

/// Recurring (origin, destination, mode sequence) patterns among matched
/// trips, most frequent first.
pub fn routes(records: &[StoredRecord], filter: &AnalyticsFilter, min_support: usize) -> Vec<RouteCount> {
    let matched: Vec<Trip> = filter.matched_trips(records).map(|(_, t)| t.clone()).collect();
    usual_routes(&matched, min_support.max(1))
        .into_iter()
        .map(|(sig, count)| RouteCount {
            origin_zone: sig.origin_zone,
            dest_zone: sig.dest_zone,
            modes: sig.modes,
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(start: i64, mode: RefinedMode, km: f64, carbon: f64, o: &str, d: &str) -> TripSegment {
        let mut s = TripSegment::new(start, start + 600, mode);
        s.distance = km * 1000.0;
        s.carbon_g = carbon;
        s.origin_zone = Some(o.into()).filter(|z: &String| !z.is_empty());
        s.dest_zone = Some(d.into()).filter(|z: &String| !z.is_empty());
        s
    }

    fn trip(p: &str, segs: Vec<TripSegment>) -> Trip {
        let cfg = crate::trips::TripConfig::default();
        let mut t = crate::trips::split_trips(p, &segs, &cfg);
        assert_eq!(t.len(), 1);
        t.pop().unwrap()
    }

    fn record(id: &str, day: u32, p: &str, trips: Vec<Trip>) -> StoredRecord {
        StoredRecord {
            envelope_id: id.into(),
            received_at: 0,
            pseudonym: p.into(),
            date: NaiveDate::from_ymd_opt(2026, 3, day).unwrap(),
            trace: String::new(),
            trips,
        }
    }

    const D2: i64 = 1_772_409_600; // 2026-03-02T00:00Z

    fn store() -> Vec<StoredRecord> {
        let w = RefinedMode::Walk;
        let m = RefinedMode::Metro;
        let b = RefinedMode::Bus;
        vec![
            record("e1", 2, "aaaa", vec![
                trip("aaaa", vec![seg(D2 + 8 * 3600, w, 0.5, 0.0, "WEST", "WEST"), seg(D2 + 8 * 3600 + 600, m, 4.0, 160.0, "WEST", "EAST")]),
                trip("aaaa", vec![seg(D2 + 18 * 3600, b, 10.0, 800.0, "EAST", "WEST")]),
            ]),
            record("e2", 2, "bbbb", vec![trip("bbbb", vec![seg(D2 + 9 * 3600, w, 1.0, 0.0, "", "CENTRE")])]),
            record("e3", 3, "aaaa", vec![trip("aaaa", vec![seg(D2 + 86_400 + 7 * 3600, w, 2.0, 0.0, "CENTRE", "CENTRE")])]),
        ]
    }

    fn q(pairs: &[(&str, &str)]) -> AnalyticsFilter {
        let params: Vec<(String, String)> = pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        AnalyticsFilter::from_query(&params, &[]).unwrap()
    }

    fn zones() -> Vec<String> {
        ["WEST", "CENTRE", "EAST"].map(String::from).to_vec()
    }

    #[test]
    fn symmetric_split() {
        let recs = vec![record("e", 2, "p", vec![trip("p", vec![
            seg(D2, RefinedMode::Walk, 1.0, 0.0, "", ""),
            seg(D2 + 600, RefinedMode::Metro, 1.0, 40.0, "", ""),
        ])])];
        let s = modal_split(&recs, &AnalyticsFilter::default());
        assert_eq!(s.modes[&RefinedMode::Walk].share, 0.5);
        assert_eq!(s.modes[&RefinedMode::Metro].share, 0.5);
        assert_eq!(s.modes[&RefinedMode::Bus].share, 0.0);
    }

    #[test]
    fn empty_store_is_all_zero() {
        let s = modal_split(&[], &AnalyticsFilter::default());
        assert_eq!(s.segment_count, 0);
        assert!(s.modes.values().all(|e| e.share == 0.0 && e.segment_count == 0));
        assert_eq!(carbon_total(&[], &AnalyticsFilter::default()).total_g, 0.0);
        let od = od_matrix(&[], &zones(), &AnalyticsFilter::default());
        assert_eq!((od.matched_trips, od.unzoned), (0, 0));
    }

    #[test]
    fn od_cells_and_unzoned() {
        let od = od_matrix(&store(), &zones(), &AnalyticsFilter::default());
        assert_eq!(od.cells, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!((od.matched_trips, od.unzoned), (4, 1));
    }

    #[test]
    fn bus_ten_km_is_800_g() {
        let c = carbon_total(&store(), &q(&[("modes", "BUS")]));
        assert_eq!(c.total_g, 800.0);
        let all = carbon_total(&store(), &AnalyticsFilter::default());
        assert_eq!(all.total_g, all.by_mode.values().sum::<f64>());
        assert_eq!(all.total_g, 960.0);
    }

    #[test]
    fn filters_select_expected_trips() {
        let ids = |f: &AnalyticsFilter| -> Vec<i64> {
            trips(&store(), f, None, 100).unwrap().items.iter().map(|t| t.start_ts).collect()
        };
        assert_eq!(ids(&q(&[("from", "2026-03-02"), ("to", "2026-03-02")])).len(), 3);
        assert_eq!(ids(&q(&[("modes", "METRO")])), [D2 + 8 * 3600]);
        assert_eq!(ids(&q(&[("zones", "CENTRE")])).len(), 2);
        assert_eq!(ids(&q(&[("time_from", "08:30"), ("time_to", "18:00")])), [D2 + 9 * 3600]);
        assert!(ids(&q(&[("from", "2027-01-01")])).is_empty());
    }

    #[test]
    fn pseudonym_only_when_requested() {
        let page = trips(&store(), &AnalyticsFilter::default(), None, 100).unwrap();
        assert!(page.items.iter().all(|t| t.pseudonym.is_none()));
        let json = serde_json::to_string(&page).unwrap();
        assert!(!json.contains("aaaa") && !json.contains("bbbb"));
        let page = trips(&store(), &q(&[("pseudonym", "aaaa")]), None, 100).unwrap();
        assert_eq!(page.items.len(), 3);
        assert!(page.items.iter().all(|t| t.pseudonym.as_deref() == Some("aaaa")));
    }

    #[test]
    fn trips_ordering_and_paging() {
        let all = trips(&store(), &AnalyticsFilter::default(), None, 500).unwrap();
        let order: Vec<_> = all.items.iter().map(|t| (t.date, t.start_ts)).collect();
        assert_eq!(order[0].1, D2 + 8 * 3600);
        assert_eq!(order[1].1, D2 + 18 * 3600);
        assert_eq!(order[2].1, D2 + 9 * 3600);
        let mut joined = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let p = trips(&store(), &AnalyticsFilter::default(), cursor.as_deref(), 3).unwrap();
            joined.extend(p.items);
            match p.next_cursor {
                Some(c) => cursor = Some(c),
                None => break,
            }
        }
        assert_eq!(joined, all.items);
        assert!(trips(&store(), &AnalyticsFilter::default(), Some("zz"), 3).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        for pairs in [
            vec![("from", "2026-03-05"), ("to", "2026-03-01")],
            vec![("time_from", "10:00"), ("time_to", "09:00")],
            vec![("modes", "TRAM")],
            vec![("time_from", "7:00")],
            vec![("bogus", "1")],
        ] {
            let params: Vec<(String, String)> = pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            assert!(AnalyticsFilter::from_query(&params, &[]).is_err(), "{pairs:?}");
        }
    }

    #[test]
    fn routes_count_signatures() {
        let r = routes(&store(), &AnalyticsFilter::default(), 1);
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|x| x.count == 1));
        assert!(routes(&store(), &AnalyticsFilter::default(), 2).is_empty());
    }

    fn arb_filter() -> impl Strategy<Value = Vec<(&'static str, &'static str)>> {
        let preds = prop::sample::subsequence(
            vec![
                ("from", "2026-03-03"),
                ("to", "2026-03-02"),
                ("modes", "WALK"),
                ("zones", "WEST"),
                ("time_from", "08:00"),
                ("time_to", "12:00"),
                ("pseudonym", "aaaa"),
            ],
            0..=7,
        );
        preds.prop_shuffle()
    }

    proptest! {
        #[test]
        fn adding_predicates_never_increases_counts(chain in arb_filter()) {
            let recs = store();
            let mut prev = (usize::MAX, u64::MAX, usize::MAX);
            for n in 0..=chain.len() {
                let params: Vec<(String, String)> =
                    chain[..n].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
                let Ok(f) = AnalyticsFilter::from_query(&params, &[]) else { break };
                let counts = (
                    modal_split(&recs, &f).segment_count,
                    od_matrix(&recs, &zones(), &f).matched_trips,
                    trips(&recs, &f, None, 500).unwrap().items.len(),
                );
                prop_assert!(counts.0 <= prev.0 && counts.1 <= prev.1 && counts.2 <= prev.2);
                prev = counts;
            }
        }
    }
}

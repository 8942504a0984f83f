//! Seeded synthetic traces with known ground truth.
//!
//! Stream discipline: a master [`SplitMix64`] seeded with the base seed
//! first draws the ten device ids of the pool (13 digits each via
//! `below(10)`), then for every trace in order one 64-bit trace seed and
//! one start offset. Each trace is generated from its own generator seeded
//! with its trace seed, drawing per 20 s tick, in order: dropout uniform,
//! north and east position normals, accuracy normal, class-flip uniform,
//! replacement-class uniform and confidence uniform. Draws happen whether
//! or not they are used, so noise settings never shift the stream.

mod rng;
mod scenario;

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{
    day_start, haversine_distance, path_length, quantize, ActivityClass, ActivitySample, LatLon,
    LocationFix, RefinedMode, TraceDay, EARTH_RADIUS_M,
};
use crate::privacy::encode_client_trace;
use crate::transit::{MatcherConfig, TransitDataset};

pub use rng::SplitMix64;
pub use scenario::{parse_scenario, Leg, Noise, PathSpec, Scenario};

pub const TICK_S: i64 = 20;
const SPARSE_PERIOD_S: i64 = 60;
const SPARSE_ACCURACY_M: f64 = 150.0;
const BASE_ACCURACY_M: f64 = 5.0;
/// Allowed mismatch between a leg's declared speed and its path length
/// over its duration.
const SPEED_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{scenario} leg {leg}: {message}")]
    Unrealistic {
        scenario: String,
        leg: usize,
        message: String,
    },
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A labelled span of ground truth, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthSpan {
    pub start: i64,
    pub end: i64,
    pub mode: RefinedMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub trace: TraceDay,
    pub truth: Vec<TruthSpan>,
}

/// The bundled scenarios in corpus order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    [
        include_str!("../../fixtures/scenarios/s_metro.scn"),
        include_str!("../../fixtures/scenarios/s_bus.scn"),
        include_str!("../../fixtures/scenarios/s_walk.scn"),
        include_str!("../../fixtures/scenarios/s_bike.scn"),
        include_str!("../../fixtures/scenarios/s_car.scn"),
        include_str!("../../fixtures/scenarios/s_mixed.scn"),
        include_str!("../../fixtures/scenarios/s_idle_gap.scn"),
        include_str!("../../fixtures/scenarios/s_still.scn"),
    ]
    .iter()
    .map(|t| parse_scenario(t).expect("bundled scenario"))
    .collect()
}

/// A leg resolved to a concrete polyline.
struct Track {
    points: Vec<LatLon>,
    cumulative: Vec<f64>,
}

impl Track {
    fn new(points: Vec<LatLon>) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let d = haversine_distance(w[0], w[1]).expect("validated points");
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Track { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn end(&self) -> LatLon {
        *self.points.last().unwrap()
    }

    /// Point at arc length `s`, linear in lat/lon within a polyline edge.
    fn at(&self, s: f64) -> LatLon {
        let i = self.cumulative.partition_point(|c| *c <= s);
        if i == 0 {
            return self.points[0];
        }
        if i >= self.points.len() {
            return self.end();
        }
        let (a, b) = (self.points[i - 1], self.points[i]);
        let span = self.cumulative[i] - self.cumulative[i - 1];
        let f = if span > 0.0 { (s - self.cumulative[i - 1]) / span } else { 0.0 };
        LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
    }
}

fn station(data: &TransitDataset, id: &str) -> Result<LatLon, SimError> {
    data.stop(id)
        .map(|s| s.position())
        .ok_or_else(|| SimError::Invalid(format!("unknown stop {id:?}")))
}

fn bus_track(data: &TransitDataset, route: &str, from: &str, to: &str) -> Result<Vec<LatLon>, SimError> {
    let shape = data
        .route(route)
        .ok_or_else(|| SimError::Invalid(format!("unknown route {route:?}")))?;
    for stop in [from, to] {
        if !shape.stop_ids.iter().any(|s| s == stop) {
            return Err(SimError::Invalid(format!("stop {stop:?} is not on route {route}")));
        }
    }
    let vertex = |p: LatLon| {
        (0..shape.polyline.len())
            .min_by(|a, b| {
                p.distance_to(shape.polyline[*a])
                    .total_cmp(&p.distance_to(shape.polyline[*b]))
            })
            .expect("non-empty polyline")
    };
    let (a, b) = (vertex(station(data, from)?), vertex(station(data, to)?));
    Ok(if a <= b {
        shape.polyline[a..=b].to_vec()
    } else {
        shape.polyline[b..=a].iter().rev().copied().collect()
    })
}

fn resolve(leg: &Leg, current: Option<LatLon>, data: &TransitDataset) -> Result<Vec<LatLon>, SimError> {
    let here = || current.ok_or_else(|| SimError::Invalid("`here` before any position".into()));
    Ok(match &leg.path {
        PathSpec::At(p) => vec![*p],
        PathSpec::Here => vec![here()?],
        PathSpec::Via(pts) => current.into_iter().chain(pts.iter().copied()).collect(),
        PathSpec::Metro { from, to } => {
            for id in [from, to] {
                if data.stop(id).map(|s| s.kind) != Some(crate::model::TransitKind::Metro) {
                    return Err(SimError::Invalid(format!("{id:?} is not a metro station")));
                }
            }
            vec![station(data, from)?, station(data, to)?]
        }
        PathSpec::Bus { route, from, to } => bus_track(data, route, from, to)?,
    })
}

fn offset(p: LatLon, north_m: f64, east_m: f64) -> LatLon {
    let k = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
    LatLon::new(p.lat + north_m / k, p.lon + east_m / (k * p.lat.to_radians().cos()))
}

fn check_realism(
    scenario: &Scenario,
    idx: usize,
    leg: &Leg,
    track: &Track,
    cfg: &MatcherConfig,
) -> Result<f64, SimError> {
    let fail = |message: String| SimError::Unrealistic {
        scenario: scenario.scenario_id.clone(),
        leg: idx + 1,
        message,
    };
    let actual = track.length() / leg.duration as f64;
    if (actual - leg.speed).abs() > SPEED_TOLERANCE * leg.speed.max(0.1) {
        return Err(fail(format!(
            "path gives {actual:.2} m/s but the leg declares {:.2} m/s",
            leg.speed
        )));
    }
    let range = match leg.mode {
        RefinedMode::Metro => Some(cfg.metro_speed),
        RefinedMode::Bus => Some(cfg.bus_speed),
        _ => None,
    };
    if let Some((lo, hi)) = range {
        // A metro gap also spans the tick before the leg.
        let elapsed = leg.duration + if leg.mode == RefinedMode::Metro { TICK_S } else { 0 };
        let v = track.length() / elapsed as f64;
        if !(lo..=hi).contains(&v) {
            return Err(fail(format!("mean speed {v:.2} m/s outside [{lo}, {hi}]")));
        }
    }
    Ok(actual)
}

/// Generates one trace of `scenario` starting at `start_ts`.
///
/// Fixes and samples are emitted every 20 s from each leg's start. Metro
/// legs emit no fixes unless flagged `sparse`; `nofix` legs emit none.
/// Every value is quantized to the trace format's precision.
pub fn generate(
    scenario: &Scenario,
    seed: u64,
    start_ts: i64,
    device_id: &str,
    data: &TransitDataset,
    cfg: &MatcherConfig,
) -> Result<Generated, SimError> {
    scenario.noise.validate().map_err(SimError::Invalid)?;
    let date = chrono::DateTime::from_timestamp(start_ts, 0)
        .ok_or_else(|| SimError::Invalid("start outside the calendar".into()))?
        .date_naive();
    let noise = scenario.noise;
    let mut rng = SplitMix64::new(seed);
    let mut trace = TraceDay::empty(device_id, date);
    let mut truth = Vec::with_capacity(scenario.legs.len());
    let mut current: Option<LatLon> = None;
    let mut t0 = start_ts;

    for (idx, leg) in scenario.legs.iter().enumerate() {
        if leg.duration % TICK_S != 0 {
            return Err(SimError::Invalid(format!(
                "{} leg {}: duration must be a multiple of {TICK_S} s",
                scenario.scenario_id,
                idx + 1
            )));
        }
        let track = Track::new(resolve(leg, current, data)?);
        let speed = check_realism(scenario, idx, leg, &track, cfg)?;
        let true_class = leg.mode.raw_class();

        for k in 0..leg.duration / TICK_S {
            let t = t0 + k * TICK_S;
            let elapsed = (k * TICK_S) as f64;
            let u_drop = rng.uniform();
            let (z_n, z_e, z_acc) = (rng.normal(), rng.normal(), rng.normal());
            let (u_flip, u_class, u_conf) = (rng.uniform(), rng.uniform(), rng.uniform());

            let true_pos = track.at(track.length() * elapsed / leg.duration as f64);
            let fix = if leg.nofix {
                None
            } else if leg.mode == RefinedMode::Metro {
                (leg.sparse && k > 0 && (k * TICK_S) % SPARSE_PERIOD_S == 0).then(|| {
                    let p = offset(true_pos, noise.accuracy_sigma * z_n, noise.accuracy_sigma * z_e);
                    (p, SPARSE_ACCURACY_M, None)
                })
            } else if u_drop < noise.dropout {
                None
            } else {
                let p = offset(true_pos, noise.accuracy_sigma * z_n, noise.accuracy_sigma * z_e);
                let acc = BASE_ACCURACY_M + noise.accuracy_sigma * z_acc.abs();
                Some((p, acc, Some(speed)))
            };
            if let Some((p, acc, v)) = fix {
                trace.fixes.push(LocationFix {
                    timestamp: t,
                    lat: quantize(p.lat, 7),
                    lon: quantize(p.lon, 7),
                    accuracy: quantize(acc, 1),
                    speed: v.map(|v| quantize(v, 2)),
                });
            }

            let flipped = u_flip < noise.sample_error_rate;
            let class = if flipped {
                let others: Vec<ActivityClass> =
                    ActivityClass::ALL.into_iter().filter(|c| *c != true_class).collect();
                others[((u_class * others.len() as f64) as usize).min(others.len() - 1)]
            } else {
                true_class
            };
            let confidence = if flipped { 30 } else { 70 } + (u_conf * 30.0) as u8;
            trace.samples.push(ActivitySample { timestamp: t, class, confidence });
        }

        truth.push(TruthSpan { start: t0, end: t0 + leg.duration, mode: leg.mode });
        current = Some(track.end());
        t0 += leg.duration;
    }
    trace.validate().map_err(SimError::Invalid)?;
    Ok(Generated { trace, truth })
}

/// Named corpus layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub count: usize,
    /// Replaces every scenario's own noise when set.
    pub noise: Option<Noise>,
}

impl Suite {
    pub fn by_name(name: &str) -> Result<Self, SimError> {
        let noise = match name {
            "default" => None,
            "noisy" => Some(Noise { dropout: 0.1, accuracy_sigma: 20.0, sample_error_rate: 0.1 }),
            _ => return Err(SimError::UnknownSuite(name.to_owned())),
        };
        Ok(Suite { name: name.to_owned(), count: 50, noise })
    }
}

pub const DEVICE_POOL: usize = 10;
pub const FIRST_DATE: (i32, u32, u32) = (2026, 3, 2);
const DAY_WINDOW: (i64, i64) = (7 * 3600, 19 * 3600);

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub file_name: String,
    pub scenario_id: String,
    pub device_id: String,
    pub profile: Vec<(String, String)>,
    pub generated: Generated,
}

fn device_pool(master: &mut SplitMix64) -> Vec<String> {
    (0..DEVICE_POOL)
        .map(|_| {
            let mut id = String::from("35");
            for _ in 0..13 {
                id.push(char::from(b'0' + master.below(10) as u8));
            }
            id
        })
        .collect()
}

/// Builds a suite: trace `i` replays scenario `i mod 8` for device
/// `i mod 10` on day `i / 10` after the first corpus date, starting at a
/// random 20 s tick between 07:00 and 19:00.
pub fn corpus(
    suite: &Suite,
    base_seed: u64,
    data: &TransitDataset,
    cfg: &MatcherConfig,
) -> Result<Vec<CorpusEntry>, SimError> {
    let scenarios = builtin_scenarios();
    let mut master = SplitMix64::new(base_seed);
    let devices = device_pool(&mut master);
    let (y, m, d) = FIRST_DATE;
    let first = NaiveDate::from_ymd_opt(y, m, d).unwrap();
    let slots = ((DAY_WINDOW.1 - DAY_WINDOW.0) / TICK_S) as u64;
    (0..suite.count)
        .map(|i| {
            let mut scenario = scenarios[i % scenarios.len()].clone();
            if let Some(n) = suite.noise {
                scenario.noise = n;
            }
            let seed = master.next_u64();
            let date = first + chrono::Days::new((i / DEVICE_POOL) as u64);
            let start = day_start(date) + DAY_WINDOW.0 + master.below(slots) as i64 * TICK_S;
            let device_id = devices[i % DEVICE_POOL].clone();
            let generated = generate(&scenario, seed, start, &device_id, data, cfg)?;
            let profile = if i % 5 == 0 {
                vec![
                    ("email".to_owned(), format!("{device_id}@example.org")),
                    ("name".to_owned(), format!("Participant {}", i % DEVICE_POOL)),
                ]
            } else {
                Vec::new()
            };
            Ok(CorpusEntry {
                file_name: format!("trace_{i:03}.txt"),
                scenario_id: scenario.scenario_id,
                device_id,
                profile,
                generated,
            })
        })
        .collect()
}

/// Manifest text: `M <file> <scenario>` followed by that trace's
/// `G <start> <end> <MODE>` truth lines.
pub fn encode_manifest(entries: &[CorpusEntry]) -> String {
    let mut out = String::from("# mobiliscope corpus manifest\n");
    for e in entries {
        writeln!(out, "M {} {}", e.file_name, e.scenario_id).unwrap();
        for g in &e.generated.truth {
            writeln!(out, "G {} {} {}", g.start, g.end, g.mode).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file_name: String,
    pub scenario_id: String,
    pub truth: Vec<TruthSpan>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, SimError> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let err = |message: String| SimError::Parse { line: i + 1, message };
        match body.split(' ').collect::<Vec<_>>().as_slice() {
            ["M", file, scenario] => out.push(ManifestEntry {
                file_name: file.to_string(),
                scenario_id: scenario.to_string(),
                truth: Vec::new(),
            }),
            ["G", start, end, mode] => {
                let entry = out.last_mut().ok_or_else(|| err("G line before any M line".into()))?;
                entry.truth.push(TruthSpan {
                    start: start.parse().map_err(|_| err(format!("bad start {start:?}")))?,
                    end: end.parse().map_err(|_| err(format!("bad end {end:?}")))?,
                    mode: mode.parse().map_err(err)?,
                });
            }
            _ => return Err(err(format!("unrecognized line {body:?}"))),
        }
    }
    Ok(out)
}

/// Writes every trace (client format, with profile lines) and
/// `manifest.txt` into `dir`, creating it when missing.
pub fn write_corpus(dir: &Path, entries: &[CorpusEntry]) -> Result<(), SimError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SimError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for e in entries {
        let path = dir.join(&e.file_name);
        std::fs::write(&path, encode_client_trace(&e.generated.trace, &e.profile)).map_err(io(&path))?;
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, encode_manifest(entries)).map_err(io(&path))
}

/// Total length of the true path of a generated trace's usable fixes.
pub fn fix_path_length(trace: &TraceDay, max_accuracy: f64) -> f64 {
    let pts: Vec<LatLon> = trace
        .fixes
        .iter()
        .filter(|f| f.is_usable(max_accuracy))
        .map(LocationFix::position)
        .collect();
    path_length(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decode_trace, encode_trace};

    fn setup() -> (TransitDataset, MatcherConfig) {
        (TransitDataset::fixture(), MatcherConfig::default())
    }

    fn by_id(id: &str) -> Scenario {
        builtin_scenarios().into_iter().find(|s| s.scenario_id == id).unwrap()
    }

    fn eight_am() -> i64 {
        day_start(NaiveDate::from_ymd_opt(2026, 3, 2).unwrap()) + 8 * 3600
    }

    #[test]
    fn metro_zero_noise_has_single_gap_over_the_ride() {
        let (data, cfg) = setup();
        let g = generate(&by_id("S-METRO"), 7, eight_am(), "dev", &data, &cfg).unwrap();
        let metro = g.truth.iter().find(|s| s.mode == RefinedMode::Metro).unwrap();
        let holes: Vec<(i64, i64)> = g
            .trace
            .fixes
            .windows(2)
            .filter(|w| w[1].timestamp - w[0].timestamp > TICK_S)
            .map(|w| (w[0].timestamp, w[1].timestamp))
            .collect();
        assert_eq!(holes, [(metro.start - TICK_S, metro.end)]);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let (data, cfg) = setup();
        let s = by_id("S-MIXED");
        let a = generate(&s, 99, eight_am(), "dev", &data, &cfg).unwrap();
        let b = generate(&s, 99, eight_am(), "dev", &data, &cfg).unwrap();
        let text = encode_trace(&a.trace);
        assert_eq!(text, encode_trace(&b.trace));
        assert_eq!(decode_trace(&text).unwrap(), a.trace);
    }

    #[test]
    fn zero_error_rate_keeps_true_classes() {
        let (data, cfg) = setup();
        for s in builtin_scenarios() {
            let g = generate(&s, 3, eight_am(), "dev", &data, &cfg).unwrap();
            for sample in &g.trace.samples {
                let span = g.truth.iter().find(|t| t.start <= sample.timestamp && sample.timestamp < t.end).unwrap();
                assert_eq!(sample.class, span.mode.raw_class());
            }
        }
    }

    #[test]
    fn truth_tiles_the_trace() {
        let (data, cfg) = setup();
        for s in builtin_scenarios() {
            let g = generate(&s, 5, eight_am(), "dev", &data, &cfg).unwrap();
            assert_eq!(g.truth[0].start, eight_am());
            for w in g.truth.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
            let last = g.truth.last().unwrap().end;
            assert!(g.trace.samples.iter().all(|x| x.timestamp < last));
        }
    }

    #[test]
    fn sparse_metro_fixes_are_low_quality() {
        let (data, cfg) = setup();
        let g = generate(&by_id("S-MIXED"), 1, eight_am(), "dev", &data, &cfg).unwrap();
        let metro = g.truth.iter().find(|s| s.mode == RefinedMode::Metro).unwrap();
        let inside: Vec<_> = g
            .trace
            .fixes
            .iter()
            .filter(|f| f.timestamp >= metro.start && f.timestamp < metro.end)
            .collect();
        assert_eq!(inside.len(), 7);
        assert!(inside.iter().all(|f| f.accuracy == SPARSE_ACCURACY_M));
    }

    #[test]
    fn unknown_references_fail() {
        let (data, cfg) = setup();
        for path in ["metro:URGELL,NOWHERE", "metro:URGELL,B1_01", "bus:B9,B1_01,B1_02", "bus:B1,B1_01,H24_01"] {
            let s = parse_scenario(&format!("S X\nL STILL 120 0 at:41.38:2.145\nL METRO 480 7 {path}")).unwrap();
            assert!(matches!(generate(&s, 1, eight_am(), "d", &data, &cfg), Err(SimError::Invalid(_))), "{path}");
        }
    }

    #[test]
    fn unrealistic_speed_fails() {
        let (data, cfg) = setup();
        let s = parse_scenario("S X\nL METRO 120 30 metro:URGELL,DIAGONAL").unwrap();
        assert!(matches!(generate(&s, 1, eight_am(), "d", &data, &cfg), Err(SimError::Unrealistic { .. })));
        let s = parse_scenario("S X\nL WALK 120 1.4 via:41.0:2.0;41.1:2.0").unwrap();
        assert!(matches!(generate(&s, 1, eight_am(), "d", &data, &cfg), Err(SimError::Unrealistic { .. })));
    }

    #[test]
    fn default_suite_layout() {
        let (data, cfg) = setup();
        let entries = corpus(&Suite::by_name("default").unwrap(), 42, &data, &cfg).unwrap();
        assert_eq!(entries.len(), 50);
        let manifest = encode_manifest(&entries);
        assert!(entries.iter().all(|e| !manifest.contains(&e.device_id)));
        let parsed = parse_manifest(&manifest).unwrap();
        assert_eq!(parsed.len(), 50);
        assert_eq!(parsed[7].scenario_id, "S-STILL");
        assert_eq!(parsed[8].scenario_id, "S-METRO");
        assert_eq!(parsed[3].truth, entries[3].generated.truth);

        let other = corpus(&Suite::by_name("default").unwrap(), 43, &data, &cfg).unwrap();
        assert_ne!(other[0].generated.trace, entries[0].generated.trace);
        let ids = |c: &[CorpusEntry]| c.iter().map(|e| e.scenario_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&other), ids(&entries));
    }

    #[test]
    fn noisy_suite_applies_noise() {
        let (data, cfg) = setup();
        let entries = corpus(&Suite::by_name("noisy").unwrap(), 42, &data, &cfg).unwrap();
        let fixes: usize = entries.iter().map(|e| e.generated.trace.fixes.len()).sum();
        let low: usize = entries
            .iter()
            .map(|e| e.generated.trace.fixes.iter().filter(|f| f.accuracy > BASE_ACCURACY_M).count())
            .sum();
        assert!(low * 2 > fixes);
        assert!(matches!(Suite::by_name("huge"), Err(SimError::UnknownSuite(_))));
    }
}

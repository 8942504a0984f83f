#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use mobiliscope::model::{zone_of, LatLon, RefinedMode, TripSegment, Zone};
use mobiliscope::pipeline::Pipeline;
use mobiliscope::privacy::{encode_client_trace, encrypt_envelope, pseudonymize, KeyRing};
use mobiliscope::simulator::{builtin_scenarios, corpus, CorpusEntry, PathSpec, Suite};
use mobiliscope::store::{FixedClock, IngestService, Store};
use sha2::{Digest, Sha256};

pub const SEED: u64 = 42;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mobiliscope")
}

pub fn suite(name: &str, seed: u64) -> Vec<CorpusEntry> {
    let p = Pipeline::fixture();
    corpus(&Suite::by_name(name).unwrap(), seed, &p.transit, &p.settings.matcher).unwrap()
}

pub fn overlap(a0: i64, a1: i64, b0: i64, b1: i64) -> i64 {
    (a1.min(b1) - a0.max(b0)).max(0)
}

/// Seconds of `[start, end)` that `segments` label as `mode`.
pub fn labelled(segments: &[TripSegment], start: i64, end: i64, mode: RefinedMode) -> i64 {
    segments
        .iter()
        .filter(|s| s.mode == mode)
        .map(|s| overlap(s.start_ts, s.end_ts, start, end))
        .sum()
}

/// Client-side sealing: pseudonymize the header, then encrypt.
pub fn seal(entry: &CorpusEntry, keys: &KeyRing) -> Vec<u8> {
    let mut trace = entry.generated.trace.clone();
    trace.pseudonym = pseudonymize(&trace.pseudonym, trace.date, keys.pseudonym_key().unwrap()).unwrap();
    let payload = encode_client_trace(&trace, &entry.profile);
    encrypt_envelope(payload.as_bytes(), keys.current_key_id().unwrap(), keys)
        .unwrap()
        .to_bytes()
}

pub fn service(dir: &Path, keys: &KeyRing) -> IngestService {
    let store = Store::open(dir, Arc::new(FixedClock(1_800_000_000))).unwrap();
    IngestService::new(Arc::new(store), Arc::new(Pipeline::fixture()), Arc::new(keys.clone()))
}

/// Fixed key ring so stores built in different tests are comparable.
pub fn fixed_keys() -> KeyRing {
    KeyRing::parse(&format!("K 1 {}\nP {} 1\n", "11".repeat(32), "22".repeat(32))).unwrap()
}

/// sha256 of every file under `dir`, keyed by relative path.
pub fn digest_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
            }
        }
    }
    out
}

/// Every file under `dir`, concatenated.
pub fn read_tree(dir: &Path) -> Vec<u8> {
    let mut out = Vec::new();
    for rel in digest_tree(dir).keys() {
        out.extend(std::fs::read(dir.join(rel)).unwrap());
    }
    out
}

pub fn contains(haystack: &[u8], needle: &str) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle.as_bytes())
}

/// A `mobiliscope serve` child process, killed on drop.
pub struct Server {
    pub child: Child,
    pub url: String,
    pub log: PathBuf,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn spawn_server(data: &Path, key_file: &Path, log: &Path, token: Option<&str>) -> Server {
    let mut cmd = Command::new(bin());
    cmd.args(["serve", "--port", "0", "--data"])
        .arg(data)
        .arg("--key")
        .arg(key_file)
        .env("RUST_LOG", "info")
        .env_remove("MOBILISCOPE_TOKEN")
        .stdout(Stdio::piped())
        .stderr(std::fs::File::create(log).unwrap());
    if let Some(t) = token {
        cmd.env("MOBILISCOPE_TOKEN", t);
    }
    let mut child = cmd.spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected server output {line:?}"))
        .to_owned();
    Server { child, url: format!("http://{addr}"), log: log.to_owned() }
}

/// A segment predicted from the ground-truth labels alone.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSegment {
    pub start: i64,
    pub end: i64,
    pub mode: RefinedMode,
    pub distance: f64,
    pub origin_zone: Option<String>,
    pub dest_zone: Option<String>,
}

fn walk_length(points: &[LatLon]) -> f64 {
    let mut total = 0.0;
    for w in points.windows(2) {
        total += w[0].distance_to(w[1]);
    }
    total
}

/// Trips expected from a zero-noise trace, derived from its truth spans:
/// stationary spans of at least `still_split` seconds separate trips,
/// stationary spans at either end of a trip are dropped, metro legs run
/// station to station and other legs follow their usable fixes.
pub fn oracle_trips(entry: &CorpusEntry, pipeline: &Pipeline) -> Vec<Vec<OracleSegment>> {
    let scenario = builtin_scenarios()
        .into_iter()
        .find(|s| s.scenario_id == entry.scenario_id)
        .unwrap();
    let still_split = pipeline.settings.trips.still_split;
    let max_acc = pipeline.settings.matcher.max_accuracy;
    let trace = &entry.generated.trace;
    let zones: &[Zone] = &pipeline.zones;

    let mut groups: Vec<Vec<OracleSegment>> = vec![Vec::new()];
    for (leg, span) in scenario.legs.iter().zip(&entry.generated.truth) {
        if span.mode == RefinedMode::Still && span.end - span.start >= still_split {
            groups.push(Vec::new());
            continue;
        }
        let points: Vec<LatLon> = match &leg.path {
            PathSpec::Metro { from, to } => vec![
                pipeline.transit.stop(from).unwrap().position(),
                pipeline.transit.stop(to).unwrap().position(),
            ],
            _ => trace
                .fixes
                .iter()
                .filter(|f| f.timestamp >= span.start && f.timestamp < span.end && f.accuracy <= max_acc)
                .map(|f| LatLon { lat: f.lat, lon: f.lon })
                .collect(),
        };
        groups.last_mut().unwrap().push(OracleSegment {
            start: span.start,
            end: span.end,
            mode: span.mode,
            distance: walk_length(&points),
            origin_zone: points.first().and_then(|p| zone_of(*p, zones)).map(str::to_owned),
            dest_zone: points.last().and_then(|p| zone_of(*p, zones)).map(str::to_owned),
        });
    }
    groups
        .into_iter()
        .filter_map(|mut g| {
            while g.first().is_some_and(|s| s.mode == RefinedMode::Still) {
                g.remove(0);
            }
            while g.last().is_some_and(|s| s.mode == RefinedMode::Still) {
                g.pop();
            }
            (!g.is_empty()).then_some(g)
        })
        .collect()
}

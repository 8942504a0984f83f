//! Line-delimited trace format.
//!
//! ```text
//! T <pseudonym> <YYYY-MM-DD> 1
//! F <ts> <lat:%.7f> <lon:%.7f> <accuracy:%.1f> <speed:%.2f|->
//! A <ts> <STILL|ON_FOOT|BICYCLE|VEHICLE|UNKNOWN> <confidence>
//! ```
//!
//! Records after the header are sorted by timestamp; at equal timestamps
//! fix lines precede sample lines.

use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

use super::{validate_fix, ActivityClass, ActivitySample, LocationFix, TraceDay};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError { line, message: message.into() }
    }
}

pub fn encode_trace(trace: &TraceDay) -> String {
    let mut out = String::with_capacity(64 + 48 * (trace.fixes.len() + trace.samples.len()));
    writeln!(
        out,
        "T {} {} {}",
        trace.pseudonym,
        trace.date.format("%Y-%m-%d"),
        FORMAT_VERSION
    )
    .unwrap();
    let (mut fi, mut si) = (0, 0);
    while fi < trace.fixes.len() || si < trace.samples.len() {
        let take_fix = match (trace.fixes.get(fi), trace.samples.get(si)) {
            (Some(f), Some(s)) => f.timestamp <= s.timestamp,
            (Some(_), None) => true,
            _ => false,
        };
        if take_fix {
            let f = &trace.fixes[fi];
            write!(out, "F {} {:.7} {:.7} {:.1} ", f.timestamp, f.lat, f.lon, f.accuracy).unwrap();
            match f.speed {
                Some(v) => writeln!(out, "{v:.2}").unwrap(),
                None => out.push_str("-\n"),
            }
            fi += 1;
        } else {
            let s = &trace.samples[si];
            writeln!(out, "A {} {} {}", s.timestamp, s.class, s.confidence).unwrap();
            si += 1;
        }
    }
    out
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(line, format!("invalid {what} {s:?}")))
}

pub(crate) fn parse_header(line: usize, text: &str) -> Result<(String, NaiveDate), ParseError> {
    let fields: Vec<&str> = text.split(' ').collect();
    match fields.as_slice() {
        ["T", pseudonym, date, version] => {
            if pseudonym.is_empty() {
                return Err(ParseError::new(line, "empty pseudonym"));
            }
            let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|_| ParseError::new(line, format!("invalid date {date:?}")))?;
            let version: u32 = parse_num(line, "version", version)?;
            if version != FORMAT_VERSION {
                return Err(ParseError::new(line, format!("unsupported version {version}")));
            }
            Ok((pseudonym.to_string(), date))
        }
        ["T", ..] => Err(ParseError::new(line, "header expects 3 fields")),
        _ => Err(ParseError::new(line, "missing header line")),
    }
}

pub(crate) enum Record {
    Fix(LocationFix),
    Sample(ActivitySample),
}

impl Record {
    fn timestamp(&self) -> i64 {
        match self {
            Record::Fix(f) => f.timestamp,
            Record::Sample(s) => s.timestamp,
        }
    }
}

/// Parses one `F` or `A` line. Returns `Ok(None)` for other record tags so
/// callers that accept extension records can handle them.
pub(crate) fn parse_record(line: usize, text: &str) -> Result<Option<Record>, ParseError> {
    let fields: Vec<&str> = text.split(' ').collect();
    match fields.as_slice() {
        ["F", ts, lat, lon, acc, speed] => {
            let fix = LocationFix {
                timestamp: parse_num(line, "timestamp", ts)?,
                lat: parse_num(line, "lat", lat)?,
                lon: parse_num(line, "lon", lon)?,
                accuracy: parse_num(line, "accuracy", acc)?,
                speed: match *speed {
                    "-" => None,
                    v => Some(parse_num(line, "speed", v)?),
                },
            };
            validate_fix(&fix).map_err(|m| ParseError::new(line, m))?;
            Ok(Some(Record::Fix(fix)))
        }
        ["A", ts, class, conf] => {
            let class: ActivityClass = class.parse().map_err(|m| ParseError::new(line, m))?;
            let confidence: u8 = parse_num(line, "confidence", conf)?;
            if confidence > 100 {
                return Err(ParseError::new(line, "confidence out of range"));
            }
            Ok(Some(Record::Sample(ActivitySample {
                timestamp: parse_num(line, "timestamp", ts)?,
                class,
                confidence,
            })))
        }
        ["F", ..] => Err(ParseError::new(line, "fix line expects 5 fields")),
        ["A", ..] => Err(ParseError::new(line, "sample line expects 3 fields")),
        _ => Ok(None),
    }
}

/// Incrementally assembles a trace from decoded records, checking ordering.
pub(crate) struct TraceBuilder {
    trace: TraceDay,
    last_ts: Option<i64>,
}

impl TraceBuilder {
    pub(crate) fn new(pseudonym: String, date: NaiveDate) -> Self {
        TraceBuilder { trace: TraceDay::empty(pseudonym, date), last_ts: None }
    }

    pub(crate) fn push(&mut self, line: usize, record: Record) -> Result<(), ParseError> {
        let ts = record.timestamp();
        if self.last_ts.is_some_and(|p| ts < p) {
            return Err(ParseError::new(line, "records not sorted by timestamp"));
        }
        self.last_ts = Some(ts);
        match record {
            Record::Fix(f) => self.trace.fixes.push(f),
            Record::Sample(s) => self.trace.samples.push(s),
        }
        Ok(())
    }

    pub(crate) fn finish(self, last_line: usize) -> Result<TraceDay, ParseError> {
        self.trace
            .validate()
            .map_err(|m| ParseError::new(last_line, m))?;
        Ok(self.trace)
    }
}

pub fn decode_trace(text: &str) -> Result<TraceDay, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, "missing header line"))?;
    let (pseudonym, date) = parse_header(1, header)?;
    let mut builder = TraceBuilder::new(pseudonym, date);
    let mut last = 1;
    for (line, text) in lines {
        last = line;
        match parse_record(line, text)? {
            Some(record) => builder.push(line, record)?,
            None => {
                return Err(ParseError::new(line, format!("unknown record {text:?}")));
            }
        }
    }
    builder.finish(last)
}

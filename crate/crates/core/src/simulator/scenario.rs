use crate::model::{parse_point_list, LatLon, RefinedMode};

use super::SimError;

/// Noise applied to a generated trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    /// Probability of dropping each fix.
    pub dropout: f64,
    /// Standard deviation of the per-axis position error, m.
    pub accuracy_sigma: f64,
    /// Probability of replacing a sample's class with another one.
    pub sample_error_rate: f64,
}

impl Noise {
    pub const NONE: Noise = Noise { dropout: 0.0, accuracy_sigma: 0.0, sample_error_rate: 0.0 };

    pub fn validate(&self) -> Result<(), String> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !prob(self.dropout) || !prob(self.sample_error_rate) {
            return Err("noise probabilities must lie in [0, 1]".into());
        }
        if !(self.accuracy_sigma.is_finite() && self.accuracy_sigma >= 0.0) {
            return Err("accuracy sigma must be >= 0".into());
        }
        Ok(())
    }
}

/// Where a leg goes.
#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    /// Stay at or start from a fixed point.
    At(LatLon),
    /// Stay where the previous leg ended.
    Here,
    /// Travel through the listed points; the first point is the start when
    /// no earlier leg set a position.
    Via(Vec<LatLon>),
    /// Ride between two metro stations.
    Metro { from: String, to: String },
    /// Ride a bus route between two of its stops.
    Bus { route: String, from: String, to: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub mode: RefinedMode,
    pub duration: i64,
    /// Nominal speed, m/s.
    pub speed: f64,
    pub path: PathSpec,
    /// Metro only: emit a 150 m-accuracy fix every 60 s underground.
    pub sparse: bool,
    /// Emit no fixes at all during the leg.
    pub nofix: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario_id: String,
    pub noise: Noise,
    pub legs: Vec<Leg>,
}

fn parse_path(s: &str) -> Result<PathSpec, String> {
    if s == "here" {
        return Ok(PathSpec::Here);
    }
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("bad path {s:?}"))?;
    match kind {
        "at" => {
            let pts = parse_point_list(rest)?;
            match pts.as_slice() {
                [p] => Ok(PathSpec::At(*p)),
                _ => Err("`at:` takes exactly one point".into()),
            }
        }
        "via" => {
            let pts = parse_point_list(rest)?;
            if pts.is_empty() {
                return Err("`via:` needs at least one point".into());
            }
            Ok(PathSpec::Via(pts))
        }
        "metro" => match rest.split(',').collect::<Vec<_>>().as_slice() {
            [from, to] => Ok(PathSpec::Metro { from: from.to_string(), to: to.to_string() }),
            _ => Err("expected `metro:FROM,TO`".into()),
        },
        "bus" => match rest.split(',').collect::<Vec<_>>().as_slice() {
            [route, from, to] => Ok(PathSpec::Bus {
                route: route.to_string(),
                from: from.to_string(),
                to: to.to_string(),
            }),
            _ => Err("expected `bus:ROUTE,FROM,TO`".into()),
        },
        _ => Err(format!("unknown path kind {kind:?}")),
    }
}

fn num<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} {s:?}"))
}

/// Parses a scenario file:
///
/// ```text
/// S <scenario_id>
/// N <dropout> <accuracy_sigma_m> <sample_error_rate>
/// L <MODE> <duration_s> <speed_mps> <path> [sparse|nofix]
/// ```
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let mut id = None;
    let mut noise = None;
    let mut legs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let err = |message: String| SimError::Parse { line, message };
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields.as_slice() {
            ["S", sid] if id.is_none() => id = Some(sid.to_string()),
            ["N", d, s, e] if noise.is_none() => {
                let n = Noise {
                    dropout: num("dropout", d).map_err(err)?,
                    accuracy_sigma: num("sigma", s).map_err(err)?,
                    sample_error_rate: num("error rate", e).map_err(err)?,
                };
                n.validate().map_err(err)?;
                noise = Some(n);
            }
            ["L", mode, dur, speed, path, flags @ ..] if flags.len() <= 1 => {
                let mode: RefinedMode = mode.parse().map_err(err)?;
                let duration: i64 = num("duration", dur).map_err(err)?;
                let speed: f64 = num("speed", speed).map_err(err)?;
                if duration <= 0 || !(speed.is_finite() && speed >= 0.0) {
                    return Err(err("duration must be > 0 and speed >= 0".into()));
                }
                let path = parse_path(path).map_err(err)?;
                let flag = flags.first().copied();
                if !matches!(flag, None | Some("sparse") | Some("nofix")) {
                    return Err(err(format!("unknown flag {:?}", flag.unwrap())));
                }
                let sparse = flag == Some("sparse");
                if sparse && mode != RefinedMode::Metro {
                    return Err(err("`sparse` applies to metro legs only".into()));
                }
                legs.push(Leg { mode, duration, speed, path, sparse, nofix: flag == Some("nofix") });
            }
            _ => return Err(err(format!("unrecognized line {body:?}"))),
        }
    }
    let scenario_id = id.ok_or(SimError::Parse { line: 0, message: "missing S line".into() })?;
    if legs.is_empty() {
        return Err(SimError::Invalid(format!("{scenario_id}: no legs")));
    }
    Ok(Scenario { scenario_id, noise: noise.unwrap_or(Noise::NONE), legs })
}

//! TOML configuration for the detection pipeline.
//!
//! Every key is optional; absent keys keep the defaults listed in
//! `docs/config.md`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::estimator::EstimatorConfig;
use crate::model::{ActivityClass, DEFAULT_MAX_ACCURACY_M};
use crate::transit::MatcherConfig;
use crate::trips::TripConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    estimator: RawEstimator,
    #[serde(default)]
    matcher: RawMatcher,
    #[serde(default)]
    trips: RawTrips,
    #[serde(default)]
    data: RawData,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    max_accuracy_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    sampling_period_s: Option<i64>,
    window_s: Option<i64>,
    tie_priority: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatcher {
    gap_min_s: Option<i64>,
    station_radius_m: Option<f64>,
    stop_corridor_m: Option<f64>,
    bus_fix_fraction: Option<f64>,
    bus_speed_mps: Option<[f64; 2]>,
    metro_speed_mps: Option<[f64; 2]>,
    poi_radius_m: Option<f64>,
    moving_window_s: Option<i64>,
    moving_speed_mps: Option<f64>,
    min_bus_fixes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrips {
    still_split_s: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    transit: Option<PathBuf>,
    zones: Option<PathBuf>,
    emissions: Option<PathBuf>,
}

/// Fully resolved settings. Relative data paths are resolved against the
/// config file's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub estimator: EstimatorConfig,
    pub matcher: MatcherConfig,
    pub trips: TripConfig,
    pub transit_file: Option<PathBuf>,
    pub zones_file: Option<PathBuf>,
    pub emissions_file: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Settings {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut s = Settings::default();

        s.matcher.max_accuracy = raw.model.max_accuracy_m.unwrap_or(DEFAULT_MAX_ACCURACY_M);

        set(&mut s.estimator.sampling_period, raw.estimator.sampling_period_s);
        set(&mut s.estimator.window_length, raw.estimator.window_s);
        if let Some(order) = raw.estimator.tie_priority {
            s.estimator.tie_break = order
                .iter()
                .map(|c| c.parse::<ActivityClass>())
                .collect::<Result<_, _>>()
                .map_err(ConfigError::Invalid)?;
        }

        let m = raw.matcher;
        set(&mut s.matcher.gap_min, m.gap_min_s);
        set(&mut s.matcher.station_radius, m.station_radius_m);
        set(&mut s.matcher.stop_corridor, m.stop_corridor_m);
        set(&mut s.matcher.bus_fix_fraction, m.bus_fix_fraction);
        set(&mut s.matcher.bus_speed, m.bus_speed_mps.map(|[a, b]| (a, b)));
        set(&mut s.matcher.metro_speed, m.metro_speed_mps.map(|[a, b]| (a, b)));
        set(&mut s.matcher.poi_radius, m.poi_radius_m);
        set(&mut s.matcher.moving_window, m.moving_window_s);
        set(&mut s.matcher.moving_speed, m.moving_speed_mps);
        set(&mut s.matcher.min_bus_fixes, m.min_bus_fixes);

        set(&mut s.trips.still_split, raw.trips.still_split_s);

        let resolve = |p: Option<PathBuf>| p.map(|p| base_dir.join(p));
        s.transit_file = resolve(raw.data.transit);
        s.zones_file = resolve(raw.data.zones);
        s.emissions_file = resolve(raw.data.emissions);

        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.estimator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.matcher
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.trips.still_split <= 0 {
            return Err(ConfigError::Invalid("trips.still_split_s must be > 0".into()));
        }
        Ok(())
    }
}

use serde::Serialize;

use crate::model::TransitKind;

use super::{Gap, MatcherConfig, TransitDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NotMetroReason {
    NoStations,
    EntryTooFar,
    ExitTooFar,
    SpeedOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MetroInference {
    Metro {
        entry_station: String,
        exit_station: String,
        implied_speed: f64,
    },
    NotMetro(NotMetroReason),
}

impl MetroInference {
    pub fn is_metro(&self) -> bool {
        matches!(self, MetroInference::Metro { .. })
    }
}

/// Decides whether a GPS gap was an underground metro ride: both bounding
/// fixes must be near a metro station, and the straight-line speed between
/// those stations over the gap must be plausible for a metro.
pub fn infer_metro(gap: &Gap, data: &TransitDataset, cfg: &MatcherConfig) -> MetroInference {
    let Some((entry, entry_d)) = data.nearest(gap.last_fix.position(), TransitKind::Metro) else {
        return MetroInference::NotMetro(NotMetroReason::NoStations);
    };
    if entry_d > cfg.station_radius {
        return MetroInference::NotMetro(NotMetroReason::EntryTooFar);
    }
    let (exit, exit_d) = data
        .nearest(gap.first_fix_after.position(), TransitKind::Metro)
        .expect("a metro station exists");
    if exit_d > cfg.station_radius {
        return MetroInference::NotMetro(NotMetroReason::ExitTooFar);
    }
    let implied_speed = entry.position().distance_to(exit.position()) / gap.duration as f64;
    let (lo, hi) = cfg.metro_speed;
    if !(lo..=hi).contains(&implied_speed) {
        return MetroInference::NotMetro(NotMetroReason::SpeedOutOfRange);
    }
    MetroInference::Metro {
        entry_station: entry.stop_id.clone(),
        exit_station: exit.stop_id.clone(),
        implied_speed,
    }
}

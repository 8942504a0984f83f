use serde::Serialize;

use crate::model::{path_length, polyline_distance, seconds_of_day, LocationFix, TransitKind};

use super::{MatcherConfig, TransitDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NotBusReason {
    NoRoutes,
    TooFewFixes,
    CorridorFractionLow,
    SpeedOutOfRange,
    OutsideTimetable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BusInference {
    Bus {
        route_id: String,
        corridor_fraction: f64,
        mean_speed: f64,
    },
    NotBus(NotBusReason),
}

/// Mean speed of a fix sequence: the mean reported speed when every fix has
/// one, otherwise path length over elapsed time.
pub(crate) fn mean_speed(fixes: &[&LocationFix]) -> f64 {
    if fixes.iter().all(|f| f.speed.is_some()) {
        return fixes.iter().filter_map(|f| f.speed).sum::<f64>() / fixes.len() as f64;
    }
    let elapsed = fixes.last().unwrap().timestamp - fixes[0].timestamp;
    if elapsed <= 0 {
        return 0.0;
    }
    let pts: Vec<_> = fixes.iter().map(|f| f.position()).collect();
    path_length(&pts) / elapsed as f64
}

struct Candidate<'a> {
    route_id: &'a str,
    fraction: f64,
    mean_distance: f64,
}

/// Tests a vehicle span against every bus route: corridor share of its fixes,
/// mean speed, and membership of its start time in the route's service
/// window.
pub fn infer_bus(
    start_ts: i64,
    fixes: &[LocationFix],
    data: &TransitDataset,
    cfg: &MatcherConfig,
) -> BusInference {
    let routes: Vec<_> = data
        .routes()
        .iter()
        .filter(|r| r.kind == TransitKind::Bus)
        .collect();
    if routes.is_empty() {
        return BusInference::NotBus(NotBusReason::NoRoutes);
    }
    let usable: Vec<&LocationFix> = fixes
        .iter()
        .filter(|f| f.is_usable(cfg.max_accuracy))
        .collect();
    if usable.len() < cfg.min_bus_fixes.max(1) {
        return BusInference::NotBus(NotBusReason::TooFewFixes);
    }

    let best = routes
        .iter()
        .map(|r| {
            let dists: Vec<f64> = usable
                .iter()
                .map(|f| polyline_distance(f.position(), &r.polyline))
                .collect();
            let inside = dists.iter().filter(|d| **d <= cfg.stop_corridor).count();
            Candidate {
                route_id: &r.route_id,
                fraction: inside as f64 / dists.len() as f64,
                mean_distance: dists.iter().sum::<f64>() / dists.len() as f64,
            }
        })
        .max_by(|a, b| {
            a.fraction
                .total_cmp(&b.fraction)
                .then(b.mean_distance.total_cmp(&a.mean_distance))
                .then(b.route_id.cmp(a.route_id))
        })
        .expect("at least one route");

    if best.fraction < cfg.bus_fix_fraction {
        return BusInference::NotBus(NotBusReason::CorridorFractionLow);
    }
    let speed = mean_speed(&usable);
    let (lo, hi) = cfg.bus_speed;
    if !(lo..=hi).contains(&speed) {
        return BusInference::NotBus(NotBusReason::SpeedOutOfRange);
    }
    let in_service = data
        .service(best.route_id)
        .is_some_and(|t| t.in_service(seconds_of_day(start_ts)));
    if !in_service {
        return BusInference::NotBus(NotBusReason::OutsideTimetable);
    }
    debug_assert!(best.fraction >= cfg.bus_fix_fraction);
    BusInference::Bus {
        route_id: best.route_id.to_string(),
        corridor_fraction: best.fraction,
        mean_speed: speed,
    }
}

use crate::model::{LocationFix, TransitStop};

use super::{MatcherConfig, TransitDataset};

/// Stops within `cfg.poi_radius` of the fix, nearest first. Equal distances
/// are ordered by stop id.
pub fn poi_context<'a>(
    fix: &LocationFix,
    data: &'a TransitDataset,
    cfg: &MatcherConfig,
) -> Vec<(&'a TransitStop, f64)> {
    let p = fix.position();
    let mut near: Vec<_> = data
        .stops()
        .iter()
        .map(|s| (s, p.distance_to(s.position())))
        .filter(|(_, d)| *d <= cfg.poi_radius)
        .collect();
    near.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.stop_id.cmp(&b.0.stop_id)));
    near
}

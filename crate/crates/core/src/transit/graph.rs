use std::collections::{HashMap, VecDeque};

use crate::model::{LatLon, RefinedMode, RouteShape, TransitKind, TransitStop};

use super::{MatcherConfig, TransitDataset};

/// Distance below which two stops are joined by a walking edge.
pub const WALK_LINK_M: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Metro,
    Bus,
    Walk,
}

/// Stops as nodes; consecutive stops on a route and stops within walking
/// distance of each other as undirected edges.
#[derive(Debug, Clone, Default)]
pub struct TransitGraph {
    adjacency: Vec<Vec<(usize, EdgeKind)>>,
}

impl TransitGraph {
    pub(crate) fn build(
        stops: &[TransitStop],
        routes: &[RouteShape],
        index: &HashMap<String, usize>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); stops.len()];
        let mut link = |a: usize, b: usize, kind: EdgeKind| {
            if a != b && !adjacency[a].contains(&(b, kind)) {
                adjacency[a].push((b, kind));
                adjacency[b].push((a, kind));
            }
        };
        for r in routes {
            let kind = match r.kind {
                TransitKind::Metro => EdgeKind::Metro,
                TransitKind::Bus => EdgeKind::Bus,
            };
            for pair in r.stop_ids.windows(2) {
                link(index[&pair[0]], index[&pair[1]], kind);
            }
        }
        for i in 0..stops.len() {
            for j in i + 1..stops.len() {
                if stops[i].position().distance_to(stops[j].position()) <= WALK_LINK_M {
                    link(i, j, EdgeKind::Walk);
                }
            }
        }
        TransitGraph { adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self, node: usize) -> &[(usize, EdgeKind)] {
        &self.adjacency[node]
    }

    /// Breadth-first reachability from any of `from` to any of `to` over
    /// edges accepted by `allow`.
    pub fn reachable(
        &self,
        from: &[usize],
        to: &[usize],
        allow: impl Fn(EdgeKind) -> bool,
    ) -> bool {
        let mut seen = vec![false; self.adjacency.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &f in from {
            if !seen[f] {
                seen[f] = true;
                queue.push_back(f);
            }
        }
        while let Some(n) = queue.pop_front() {
            if to.contains(&n) {
                return true;
            }
            for &(m, kind) in &self.adjacency[n] {
                if allow(kind) && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        false
    }
}

fn allowed(mode: RefinedMode, kind: EdgeKind) -> bool {
    match mode {
        RefinedMode::Metro => kind == EdgeKind::Metro,
        RefinedMode::Bus => kind == EdgeKind::Bus,
        RefinedMode::Walk => kind == EdgeKind::Walk,
        _ => true,
    }
}

/// Offline stand-in for a directions lookup: whether the transit graph links
/// a stop near `origin` to a stop near `dest` using edges of `mode`.
/// Metro, bus and walk use their own edges only; any other mode may use
/// every edge.
pub fn route_feasible(
    origin: LatLon,
    dest: LatLon,
    mode: RefinedMode,
    data: &TransitDataset,
    cfg: &MatcherConfig,
) -> bool {
    let access = |p: LatLon| -> Vec<usize> {
        data.stops()
            .iter()
            .filter(|s| p.distance_to(s.position()) <= cfg.station_radius)
            .filter_map(|s| data.stop_idx(&s.stop_id))
            .collect()
    };
    let from = access(origin);
    let to = access(dest);
    if from.is_empty() || to.is_empty() {
        return false;
    }
    data.graph().reachable(&from, &to, |k| allowed(mode, k))
}

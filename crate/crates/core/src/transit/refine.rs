use crate::model::{
    ActivityClass, LatLon, LocationFix, RefinedMode, TraceDay, TripSegment, WindowEstimate,
};

use super::{
    detect_gps_gaps, infer_bus, infer_metro, BusInference, Gap, MatcherConfig, MetroInference,
    TransitDataset,
};

struct MetroGap {
    gap: Gap,
    entry: LatLon,
    exit: LatLon,
}

#[derive(Debug, Clone, PartialEq)]
struct Draft {
    start: i64,
    end: i64,
    mode: RefinedMode,
    route_id: Option<String>,
    metro_gap: Option<usize>,
}

fn fixes_in(fixes: &[LocationFix], start: i64, end: i64) -> &[LocationFix] {
    let lo = fixes.partition_point(|f| f.timestamp < start);
    let hi = fixes.partition_point(|f| f.timestamp < end);
    &fixes[lo..hi]
}

fn usable_path(fixes: &[LocationFix], start: i64, end: i64, max_accuracy: f64) -> Vec<LatLon> {
    fixes_in(fixes, start, end)
        .iter()
        .filter(|f| f.is_usable(max_accuracy))
        .map(LocationFix::position)
        .collect()
}

/// Turns estimation windows into mode-labelled segments.
///
/// Runs of windows with the same class become segments. A vehicle run that
/// overlaps a GPS gap classified as a metro ride becomes `Metro`; other
/// vehicle runs are tested against the bus routes and fall back to
/// `PrivateVehicle`. Segments lying entirely inside a metro gap are folded
/// into the neighbouring metro segment. Output segments tile the windowed
/// span exactly.
pub fn refine_segments(
    windows: &[WindowEstimate],
    trace: &TraceDay,
    data: &TransitDataset,
    cfg: &MatcherConfig,
) -> Vec<TripSegment> {
    let metro_gaps: Vec<MetroGap> = detect_gps_gaps(trace, cfg)
        .into_iter()
        .filter_map(|gap| match infer_metro(&gap, data, cfg) {
            MetroInference::Metro { entry_station, exit_station, .. } => Some(MetroGap {
                entry: data.stop(&entry_station)?.position(),
                exit: data.stop(&exit_station)?.position(),
                gap,
            }),
            MetroInference::NotMetro(_) => None,
        })
        .collect();

    let mut drafts: Vec<Draft> = Vec::new();
    for w in windows {
        match drafts.last_mut() {
            Some(d) if d.end == w.window_start && d.mode == w.class.default_refinement() => {
                d.end = w.window_end;
            }
            _ => drafts.push(Draft {
                start: w.window_start,
                end: w.window_end,
                mode: w.class.default_refinement(),
                route_id: None,
                metro_gap: None,
            }),
        }
    }

    for d in &mut drafts {
        if d.mode != ActivityClass::Vehicle.default_refinement() {
            continue;
        }
        if let Some(g) = metro_gaps.iter().position(|m| m.gap.overlaps(d.start, d.end)) {
            d.mode = RefinedMode::Metro;
            d.metro_gap = Some(g);
            continue;
        }
        if let BusInference::Bus { route_id, .. } =
            infer_bus(d.start, fixes_in(&trace.fixes, d.start, d.end), data, cfg)
        {
            d.mode = RefinedMode::Bus;
            d.route_id = Some(route_id);
        }
    }

    // Fold GPS-silent neighbours into metro segments.
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..drafts.len() {
            let Some(g) = drafts[i].metro_gap else { continue };
            for j in [i.wrapping_sub(1), i + 1] {
                let Some(nb) = drafts.get(j) else { continue };
                if nb.metro_gap != Some(g) && metro_gaps[g].gap.covers(nb.start, nb.end) {
                    let nb = &mut drafts[j];
                    nb.mode = RefinedMode::Metro;
                    nb.route_id = None;
                    nb.metro_gap = Some(g);
                    changed = true;
                }
            }
        }
    }

    let mut merged: Vec<Draft> = Vec::with_capacity(drafts.len());
    for d in drafts {
        match merged.last_mut() {
            Some(prev)
                if prev.end == d.start
                    && prev.mode == d.mode
                    && prev.route_id == d.route_id
                    && prev.metro_gap == d.metro_gap =>
            {
                prev.end = d.end;
            }
            _ => merged.push(d),
        }
    }

    merged
        .into_iter()
        .map(|d| {
            let mut seg = TripSegment::new(d.start, d.end, d.mode);
            seg.route_id = d.route_id;
            seg.path = match d.metro_gap {
                Some(g) => {
                    let m = &metro_gaps[g];
                    let mut path = usable_path(&trace.fixes, d.start, m.gap.last_fix.timestamp + 1, cfg.max_accuracy);
                    path.push(m.entry);
                    path.push(m.exit);
                    path.extend(usable_path(
                        &trace.fixes,
                        m.gap.first_fix_after.timestamp,
                        d.end,
                        cfg.max_accuracy,
                    ));
                    path
                }
                None => usable_path(&trace.fixes, d.start, d.end, cfg.max_accuracy),
            };
            seg
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{day_start, ActivitySample, EARTH_RADIUS_M};
    use chrono::NaiveDate;

    fn offset(p: LatLon, north_m: f64, east_m: f64) -> LatLon {
        let k = std::f64::consts::PI * EARTH_RADIUS_M / 180.0;
        LatLon::new(p.lat + north_m / k, p.lon + east_m / (k * p.lat.to_radians().cos()))
    }

    fn window(start: i64, class: ActivityClass) -> WindowEstimate {
        WindowEstimate {
            window_start: start,
            window_end: start + 120,
            class,
            support: 6,
            mean_confidence: 80.0,
            sample_count: 6,
        }
    }

    struct Builder {
        t: i64,
        pos: LatLon,
        trace: TraceDay,
        windows: Vec<WindowEstimate>,
    }

    impl Builder {
        fn new(start: LatLon, hour: i64) -> Self {
            let date = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
            Builder {
                t: day_start(date) + hour * 3600,
                pos: start,
                trace: TraceDay::empty("p", date),
                windows: Vec::new(),
            }
        }

        /// Moves east at `speed` for `n` windows, emitting fixes unless
        /// `silent`.
        fn leg(&mut self, class: ActivityClass, n: usize, speed: f64, silent: bool) -> &mut Self {
            for _ in 0..n {
                self.windows.push(window(self.t, class));
                for _ in 0..6 {
                    if !silent {
                        self.trace.fixes.push(LocationFix {
                            timestamp: self.t,
                            lat: self.pos.lat,
                            lon: self.pos.lon,
                            accuracy: 5.0,
                            speed: Some(speed),
                        });
                    }
                    self.trace.samples.push(ActivitySample {
                        timestamp: self.t,
                        class,
                        confidence: 80,
                    });
                    self.t += 20;
                    self.pos = offset(self.pos, 0.0, speed * 20.0);
                }
            }
            self
        }

        fn jump(&mut self, to: LatLon) -> &mut Self {
            self.pos = to;
            self
        }
    }

    fn modes(segs: &[TripSegment]) -> Vec<RefinedMode> {
        segs.iter().map(|s| s.mode).collect()
    }

    fn assert_tiles(segs: &[TripSegment], windows: &[WindowEstimate]) {
        assert_eq!(segs.first().unwrap().start_ts, windows.first().unwrap().window_start);
        assert_eq!(segs.last().unwrap().end_ts, windows.last().unwrap().window_end);
        for pair in segs.windows(2) {
            assert_eq!(pair[0].end_ts, pair[1].start_ts);
        }
    }

    #[test]
    fn walk_metro_walk() {
        let data = TransitDataset::fixture();
        let entry = data.stop("URGELL").unwrap().position();
        let exit = data.stop("DIAGONAL").unwrap().position();
        let mut b = Builder::new(offset(entry, 0.0, -120.0 - 5.0 * 120.0 * 1.4), 8);
        b.leg(ActivityClass::OnFoot, 5, 1.4, false);
        // ~3.56 km over a 500 s gap.
        b.leg(ActivityClass::Vehicle, 4, 9.0, true);
        b.jump(exit);
        b.leg(ActivityClass::OnFoot, 4, 1.4, false);
        let segs = refine_segments(&b.windows, &b.trace, &data, &MatcherConfig::default());
        assert_eq!(modes(&segs), [RefinedMode::Walk, RefinedMode::Metro, RefinedMode::Walk]);
        assert_tiles(&segs, &b.windows);
        assert_eq!(segs[1].path, vec![entry, exit]);
    }

    #[test]
    fn all_still_is_one_segment() {
        let data = TransitDataset::fixture();
        let mut b = Builder::new(LatLon::new(41.388, 2.205), 8);
        b.leg(ActivityClass::Still, 10, 0.0, false);
        let segs = refine_segments(&b.windows, &b.trace, &data, &MatcherConfig::default());
        assert_eq!(modes(&segs), [RefinedMode::Still]);
        assert_tiles(&segs, &b.windows);
    }

    #[test]
    fn walk_bus_walk() {
        let data = TransitDataset::fixture();
        let stop = data.stop("B1_01").unwrap().position();
        let mut b = Builder::new(offset(stop, 0.0, -2.0 * 120.0 * 1.4), 10);
        b.leg(ActivityClass::OnFoot, 2, 1.4, false);
        b.leg(ActivityClass::Vehicle, 8, 6.0, false);
        b.leg(ActivityClass::OnFoot, 2, 1.4, false);
        let segs = refine_segments(&b.windows, &b.trace, &data, &MatcherConfig::default());
        assert_eq!(modes(&segs), [RefinedMode::Walk, RefinedMode::Bus, RefinedMode::Walk]);
        assert_eq!(segs[1].route_id.as_deref(), Some("B1"));
        assert_tiles(&segs, &b.windows);
    }

    #[test]
    fn car_away_from_routes() {
        let data = TransitDataset::fixture();
        let mut b = Builder::new(LatLon::new(41.34, 2.096), 10);
        b.leg(ActivityClass::OnFoot, 1, 1.4, false);
        b.leg(ActivityClass::Vehicle, 6, 14.0, false);
        let segs = refine_segments(&b.windows, &b.trace, &data, &MatcherConfig::default());
        assert_eq!(modes(&segs), [RefinedMode::Walk, RefinedMode::PrivateVehicle]);
    }

    #[test]
    fn silent_misclassified_window_folds_into_metro() {
        let data = TransitDataset::fixture();
        let entry = data.stop("URGELL").unwrap().position();
        let exit = data.stop("DIAGONAL").unwrap().position();
        let mut b = Builder::new(offset(entry, 0.0, -100.0 - 3.0 * 120.0 * 1.4), 8);
        b.leg(ActivityClass::OnFoot, 3, 1.4, false);
        b.leg(ActivityClass::Vehicle, 2, 9.0, true);
        b.leg(ActivityClass::Still, 1, 9.0, true);
        b.leg(ActivityClass::Vehicle, 1, 9.0, true);
        b.jump(exit);
        b.leg(ActivityClass::OnFoot, 3, 1.4, false);
        let segs = refine_segments(&b.windows, &b.trace, &data, &MatcherConfig::default());
        assert_eq!(modes(&segs), [RefinedMode::Walk, RefinedMode::Metro, RefinedMode::Walk]);
        assert_eq!(segs[1].duration(), 4 * 120);
        assert_tiles(&segs, &b.windows);
    }

    #[test]
    fn empty_windows_no_segments() {
        let data = TransitDataset::fixture();
        let date = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
        let t = TraceDay::empty("p", date);
        assert!(refine_segments(&[], &t, &data, &MatcherConfig::default()).is_empty());
    }
}

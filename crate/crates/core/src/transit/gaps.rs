use serde::Serialize;

use crate::model::{path_length, LocationFix, TraceDay};

use super::MatcherConfig;

/// Loss of GPS contact between two usable fixes while the device was moving.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub last_fix: LocationFix,
    pub first_fix_after: LocationFix,
    pub duration: i64,
}

impl Gap {
    /// Whether the half-open span `[start, end)` overlaps the silent interval
    /// strictly between the two bounding fixes.
    pub fn overlaps(&self, start: i64, end: i64) -> bool {
        start < self.first_fix_after.timestamp && end > self.last_fix.timestamp
    }

    /// Whether `[start, end)` lies inside the silence.
    pub fn covers(&self, start: i64, end: i64) -> bool {
        start > self.last_fix.timestamp && end <= self.first_fix_after.timestamp
    }
}

/// Mean speed over the `cfg.moving_window` seconds ending at `usable[idx]`.
///
/// Uses the fixes' reported speeds when every fix in the look-back carries
/// one; otherwise falls back to path length over elapsed time. A single fix
/// without a reported speed yields zero.
pub fn trailing_speed(usable: &[&LocationFix], idx: usize, cfg: &MatcherConfig) -> f64 {
    let end = usable[idx].timestamp;
    let first = usable[..=idx].partition_point(|f| f.timestamp < end - cfg.moving_window);
    let window = &usable[first..=idx];
    if window.iter().all(|f| f.speed.is_some()) {
        return window.iter().filter_map(|f| f.speed).sum::<f64>() / window.len() as f64;
    }
    let elapsed = end - window[0].timestamp;
    if elapsed <= 0 {
        return 0.0;
    }
    let pts: Vec<_> = window.iter().map(|f| f.position()).collect();
    path_length(&pts) / elapsed as f64
}

pub fn detect_gps_gaps(trace: &TraceDay, cfg: &MatcherConfig) -> Vec<Gap> {
    let usable: Vec<&LocationFix> = trace
        .fixes
        .iter()
        .filter(|f| f.is_usable(cfg.max_accuracy))
        .collect();
    let mut gaps = Vec::new();
    for i in 1..usable.len() {
        let (before, after) = (usable[i - 1], usable[i]);
        let duration = after.timestamp - before.timestamp;
        if duration >= cfg.gap_min && trailing_speed(&usable, i - 1, cfg) > cfg.moving_speed {
            gaps.push(Gap {
                last_fix: before.clone(),
                first_fix_after: after.clone(),
                duration,
            });
        }
    }
    gaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn trace(fixes: Vec<LocationFix>) -> TraceDay {
        let date = NaiveDate::from_ymd_opt(2026, 3, 2).unwrap();
        TraceDay { pseudonym: "p".into(), date, fixes, samples: vec![] }
    }

    /// Fixes every 20 s moving north at `speed`, starting at `t0`.
    fn walk(t0: i64, n: usize, speed: f64, lat0: f64) -> Vec<LocationFix> {
        (0..n)
            .map(|i| LocationFix {
                timestamp: t0 + 20 * i as i64,
                lat: lat0 + speed * 20.0 * i as f64 / 111_195.0,
                lon: 2.0,
                accuracy: 5.0,
                speed: Some(speed),
            })
            .collect()
    }

    #[test]
    fn continuous_coverage_has_no_gaps() {
        let t = trace(walk(0, 4320, 1.4, 41.0));
        assert!(detect_gps_gaps(&t, &MatcherConfig::default()).is_empty());
    }

    #[test]
    fn silence_while_moving_is_a_gap() {
        let mut fixes = walk(1000, 10, 1.5, 41.0);
        let resume = fixes.last().unwrap().timestamp + 600;
        fixes.extend(walk(resume, 10, 1.5, 41.02));
        let gaps = detect_gps_gaps(&trace(fixes), &MatcherConfig::default());
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].duration, 600);
        assert_eq!(gaps[0].last_fix.timestamp, 1180);
    }

    #[test]
    fn stationary_silence_is_not_a_gap() {
        let mut fixes = walk(1000, 10, 0.0, 41.0);
        let resume = fixes.last().unwrap().timestamp + 600;
        fixes.extend(walk(resume, 10, 0.0, 41.0));
        assert!(detect_gps_gaps(&trace(fixes), &MatcherConfig::default()).is_empty());
    }

    #[test]
    fn displacement_speed_without_reported_speeds() {
        let mut fixes = walk(1000, 10, 1.5, 41.0);
        for f in &mut fixes {
            f.speed = None;
        }
        let resume = fixes.last().unwrap().timestamp + 600;
        fixes.extend(walk(resume, 3, 1.5, 41.02));
        let gaps = detect_gps_gaps(&trace(fixes), &MatcherConfig::default());
        assert_eq!(gaps.len(), 1);
    }

    #[test]
    fn low_quality_fixes_do_not_break_a_gap() {
        let mut fixes = walk(1000, 10, 1.5, 41.0);
        let last = fixes.last().unwrap().timestamp;
        for k in 1..10 {
            fixes.push(LocationFix {
                timestamp: last + 60 * k,
                lat: 41.01,
                lon: 2.0,
                accuracy: 150.0,
                speed: None,
            });
        }
        fixes.extend(walk(last + 700, 5, 1.5, 41.02));
        let gaps = detect_gps_gaps(&trace(fixes), &MatcherConfig::default());
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].duration, 700);
    }

    #[test]
    fn fewer_than_two_usable_fixes() {
        assert!(detect_gps_gaps(&trace(vec![]), &MatcherConfig::default()).is_empty());
        assert!(detect_gps_gaps(&trace(walk(0, 1, 2.0, 41.0)), &MatcherConfig::default()).is_empty());
    }
}

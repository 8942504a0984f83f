//! Windowed activity estimation.
//!
//! Activity samples arrive every `sampling_period` seconds. The sample stream
//! is cut into tumbling windows of `window_length` seconds aligned to the
//! first sample, and each window is reduced to its most probable class by a
//! plurality vote over non-`Unknown` samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActivityClass, ActivitySample, TraceDay, WindowEstimate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimatorError {
    #[error("window contains no samples")]
    NoData,
    #[error("invalid estimator config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UnknownPolicy {
    /// `Unknown` samples do not vote unless every sample is `Unknown`.
    #[default]
    ExcludeUnlessAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub sampling_period: i64,
    pub window_length: i64,
    pub unknown_policy: UnknownPolicy,
    /// Final tie-breaker, highest priority first. A permutation of the four
    /// known classes.
    pub tie_break: Vec<ActivityClass>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            sampling_period: 20,
            window_length: 120,
            unknown_policy: UnknownPolicy::ExcludeUnlessAll,
            tie_break: vec![
                ActivityClass::Vehicle,
                ActivityClass::Bicycle,
                ActivityClass::OnFoot,
                ActivityClass::Still,
            ],
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if self.sampling_period <= 0 || self.window_length <= 0 {
            return Err(EstimatorError::Config("periods must be positive".into()));
        }
        if self.window_length % self.sampling_period != 0 {
            return Err(EstimatorError::Config(
                "window length must be a multiple of the sampling period".into(),
            ));
        }
        let mut sorted = self.tie_break.clone();
        sorted.sort();
        sorted.dedup();
        let known = [
            ActivityClass::Still,
            ActivityClass::OnFoot,
            ActivityClass::Bicycle,
            ActivityClass::Vehicle,
        ];
        if sorted.len() != self.tie_break.len() || sorted != known {
            return Err(EstimatorError::Config(
                "tie priority must list STILL, ON_FOOT, BICYCLE and VEHICLE once each".into(),
            ));
        }
        Ok(())
    }

    /// Nominal number of samples in a full window.
    pub fn samples_per_window(&self) -> i64 {
        self.window_length / self.sampling_period
    }

    fn priority(&self, class: ActivityClass) -> usize {
        self.tie_break
            .iter()
            .position(|c| *c == class)
            .unwrap_or(usize::MAX)
    }
}

fn slot(class: ActivityClass) -> usize {
    match class {
        ActivityClass::Still => 0,
        ActivityClass::OnFoot => 1,
        ActivityClass::Bicycle => 2,
        ActivityClass::Vehicle => 3,
        ActivityClass::Unknown => 4,
    }
}

/// Reduces the samples of one window to a single estimate.
///
/// The winner is the plurality class among non-`Unknown` samples. Ties go to
/// the class with the higher mean confidence, then to the earlier class in
/// `cfg.tie_break`. `Unknown` wins only when every sample is `Unknown`.
pub fn window_estimate(
    samples: &[ActivitySample],
    window_start: i64,
    cfg: &EstimatorConfig,
) -> Result<WindowEstimate, EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::NoData);
    }
    let mut counts = [0usize; 5];
    let mut conf_sums = [0u64; 5];
    for s in samples {
        counts[slot(s.class)] += 1;
        conf_sums[slot(s.class)] += u64::from(s.confidence);
    }

    let known = [
        ActivityClass::Still,
        ActivityClass::OnFoot,
        ActivityClass::Bicycle,
        ActivityClass::Vehicle,
    ];
    let winner = if counts[..4].iter().all(|&c| c == 0) {
        ActivityClass::Unknown
    } else {
        // Tied classes share a count, so comparing confidence sums is the
        // same as comparing means, without rounding.
        known
            .into_iter()
            .filter(|c| counts[slot(*c)] > 0)
            .max_by(|a, b| {
                counts[slot(*a)]
                    .cmp(&counts[slot(*b)])
                    .then(conf_sums[slot(*a)].cmp(&conf_sums[slot(*b)]))
                    .then(cfg.priority(*b).cmp(&cfg.priority(*a)))
            })
            .expect("at least one known class has samples")
    };
    let support = counts[slot(winner)];
    Ok(WindowEstimate {
        window_start,
        window_end: window_start + cfg.window_length,
        class: winner,
        support,
        mean_confidence: conf_sums[slot(winner)] as f64 / support as f64,
        sample_count: samples.len(),
    })
}

/// Tumbling window layout anchored at the first activity sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGrid {
    pub origin: i64,
    pub length: i64,
    pub count: usize,
}

impl WindowGrid {
    pub fn for_trace(trace: &TraceDay, cfg: &EstimatorConfig) -> Option<WindowGrid> {
        let first = trace.samples.first()?.timestamp;
        let last = trace.samples.last()?.timestamp;
        Some(WindowGrid {
            origin: first,
            length: cfg.window_length,
            count: ((last - first) / cfg.window_length) as usize + 1,
        })
    }

    pub fn index_of(&self, ts: i64) -> Option<usize> {
        if ts < self.origin {
            return None;
        }
        let idx = ((ts - self.origin) / self.length) as usize;
        (idx < self.count).then_some(idx)
    }

    pub fn bounds(&self, idx: usize) -> (i64, i64) {
        let start = self.origin + idx as i64 * self.length;
        (start, start + self.length)
    }

    pub fn end(&self) -> i64 {
        self.origin + self.count as i64 * self.length
    }
}

/// Estimates every window of the trace. Windows without samples are emitted
/// as `Unknown` with zero support so the timeline has no holes.
pub fn windows(trace: &TraceDay, cfg: &EstimatorConfig) -> Vec<WindowEstimate> {
    let Some(grid) = WindowGrid::for_trace(trace, cfg) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(grid.count);
    let mut rest = trace.samples.as_slice();
    for idx in 0..grid.count {
        let (start, end) = grid.bounds(idx);
        let split = rest.partition_point(|s| s.timestamp < end);
        let (inside, tail) = rest.split_at(split);
        rest = tail;
        out.push(match window_estimate(inside, start, cfg) {
            Ok(est) => est,
            Err(_) => WindowEstimate {
                window_start: start,
                window_end: end,
                class: ActivityClass::Unknown,
                support: 0,
                mean_confidence: 0.0,
                sample_count: 0,
            },
        });
    }
    out
}

/// Fix statistics for one estimation window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyWindow {
    pub window_start: i64,
    pub window_end: i64,
    /// `None` when the window holds no fixes at all.
    pub mean_accuracy: Option<f64>,
    pub fix_count: usize,
    /// Set when the mean accuracy radius exceeds the quality threshold.
    pub low_quality: bool,
}

impl AccuracyWindow {
    pub fn is_silent(&self) -> bool {
        self.fix_count == 0
    }
}

/// Mean fix accuracy per estimation window. Fixes outside the window grid
/// are not reported.
pub fn accuracy_profile(
    trace: &TraceDay,
    cfg: &EstimatorConfig,
    max_accuracy: f64,
) -> Vec<AccuracyWindow> {
    let Some(grid) = WindowGrid::for_trace(trace, cfg) else {
        return Vec::new();
    };
    let mut sums = vec![(0.0f64, 0usize); grid.count];
    for fix in &trace.fixes {
        if let Some(idx) = grid.index_of(fix.timestamp) {
            sums[idx].0 += fix.accuracy;
            sums[idx].1 += 1;
        }
    }
    sums.into_iter()
        .enumerate()
        .map(|(idx, (sum, n))| {
            let (window_start, window_end) = grid.bounds(idx);
            let mean = (n > 0).then(|| sum / n as f64);
            AccuracyWindow {
                window_start,
                window_end,
                mean_accuracy: mean,
                fix_count: n,
                low_quality: mean.is_some_and(|m| m > max_accuracy),
            }
        })
        .collect()
}

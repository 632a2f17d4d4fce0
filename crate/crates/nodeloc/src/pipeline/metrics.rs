use crate::geometry::PoseSeries;

use super::LocalizationFix;

/// A fix counts as correctly disambiguated when its heading is within
/// half a quarter turn of the truth.
pub const CORRECT_YAW_TOLERANCE_RAD: f64 = std::f64::consts::FRAC_PI_4;

/// Frame-level context for the rate and timing statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricsInput<'a> {
    pub frame_times_s: &'a [f64],
    /// Whether a full node was visible in each frame.
    pub node_visible: Option<&'a [bool]>,
    pub processing_ms: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub fix_times_s: Vec<f64>,
    /// Planar error per fix, aligned with `fix_times_s`.
    pub position_errors_m: Vec<f64>,
    pub yaw_errors_rad: Vec<f64>,
    /// Gaps between consecutive fixes, including the leading and trailing
    /// gaps to the run boundaries; zero-length gaps are dropped.
    pub elapsed_since_fix_s: Vec<f64>,
    pub fix_rate_hz: f64,
    pub disambiguation_success: f64,
    pub processing_ms: Vec<f64>,
}

fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

impl RunMetrics {
    pub fn max_error_m(&self) -> Option<f64> {
        self.position_errors_m.iter().copied().reduce(f64::max)
    }

    pub fn error_quantile_m(&self, p: f64) -> Option<f64> {
        quantile(&self.position_errors_m, p)
    }

    pub fn median_processing_ms(&self) -> Option<f64> {
        quantile(&self.processing_ms, 0.5)
    }

    pub fn mean_error_m(&self) -> Option<f64> {
        let n = self.position_errors_m.len();
        (n > 0).then(|| self.position_errors_m.iter().sum::<f64>() / n as f64)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let d = a.rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Compares fixes with interpolated truth. Fixes outside the truth span
/// carry no error sample.
pub fn compute_metrics(fixes: &[LocalizationFix], truth: &PoseSeries, input: &MetricsInput<'_>) -> RunMetrics {
    let mut m = RunMetrics {
        processing_ms: input.processing_ms.to_vec(),
        ..RunMetrics::default()
    };
    let mut correct = 0usize;
    for f in fixes {
        let Some(t) = truth.at(f.timestamp_s) else {
            continue;
        };
        let d = f.world_pose.translation - t.translation;
        m.fix_times_s.push(f.timestamp_s);
        m.position_errors_m.push((d.x * d.x + d.y * d.y).sqrt());
        let yaw_err = wrap_angle(f.world_pose.yaw() - t.yaw());
        m.yaw_errors_rad.push(yaw_err);
        if yaw_err < CORRECT_YAW_TOLERANCE_RAD {
            correct += 1;
        }
    }
    if !m.fix_times_s.is_empty() {
        m.disambiguation_success = correct as f64 / m.fix_times_s.len() as f64;
    }
    if fixes.is_empty() {
        return m;
    }
    let start = input
        .frame_times_s
        .first()
        .copied()
        .or(truth.start_time())
        .unwrap_or(fixes[0].timestamp_s);
    let end = input
        .frame_times_s
        .last()
        .copied()
        .or(truth.end_time())
        .unwrap_or(fixes[fixes.len() - 1].timestamp_s);
    let mut prev = start;
    for f in fixes.iter().map(|f| f.timestamp_s).chain(std::iter::once(end)) {
        let gap = f - prev;
        if gap > 1e-9 {
            m.elapsed_since_fix_s.push(gap);
        }
        prev = prev.max(f);
    }
    let period = if input.frame_times_s.len() >= 2 {
        (end - start) / (input.frame_times_s.len() - 1) as f64
    } else {
        0.0
    };
    m.fix_rate_hz = match input.node_visible {
        Some(vis) if period > 0.0 => {
            let visible: Vec<f64> = input
                .frame_times_s
                .iter()
                .zip(vis)
                .filter(|(_, v)| **v)
                .map(|(t, _)| *t)
                .collect();
            let hits = fixes
                .iter()
                .filter(|f| visible.iter().any(|t| (t - f.timestamp_s).abs() < 1e-6))
                .count();
            if visible.is_empty() {
                0.0
            } else {
                hits as f64 / (visible.len() as f64 * period)
            }
        }
        _ if end > start => fixes.len() as f64 / (end - start),
        _ => 0.0,
    };
    m
}

//! The seven task metrics computed from a trajectory log.
//!
//! Averaging windows end at the episode duration (ED, the first time the
//! furthest progress was reached) so a stalled tail does not dilute them.

use serde::{Deserialize, Serialize};

use crate::geom::{central_difference_curvature, dist, rms, Point};
use crate::track::{TrackError, TrackIndex};
use crate::trajectory::{LogError, TrajectoryLog};

/// Arc-length spacing used for both the track and the driven path when
/// computing trajectory efficiency.
pub const DEFAULT_TRE_SPACING: f64 = 2.5;

/// Floor applied to the jerk integral before taking the logarithm.
pub const JERK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("path of length {length} m is shorter than {required} m")]
    PathTooShort { length: f64, required: f64 },
    #[error("driven path has zero curvature; efficiency ratio undefined")]
    ZeroPathCurvature,
    #[error("need at least 5 samples for the smoothness metric, found {0}")]
    TooFewSamples(usize),
    #[error("peak speed is zero; smoothness undefined")]
    ZeroPeakSpeed,
    #[error("laps_required must be positive")]
    NoLaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Episode completion percentage.
    #[serde(rename = "ECP")]
    pub ecp: f64,
    /// Episode duration, s.
    #[serde(rename = "ED")]
    pub ed: f64,
    /// Average adjusted track speed, km/h.
    #[serde(rename = "AATS")]
    pub aats: f64,
    /// Average displacement error, m.
    #[serde(rename = "ADE")]
    pub ade: f64,
    /// Trajectory admissibility.
    #[serde(rename = "TrA")]
    pub tra: f64,
    /// Trajectory efficiency; `None` when the path has no curvature or is too short.
    #[serde(rename = "TrE")]
    pub tre: Option<f64>,
    /// Movement smoothness; `None` with fewer than 5 samples or zero peak speed.
    #[serde(rename = "MS")]
    pub ms: Option<f64>,
}

impl MetricsReport {
    pub const KEYS: [&'static str; 7] = ["ECP", "ED", "AATS", "ADE", "TrA", "TrE", "MS"];

    pub fn get(&self, key: &str) -> Option<f64> {
        match key {
            "ECP" => Some(self.ecp),
            "ED" => Some(self.ed),
            "AATS" => Some(self.aats),
            "ADE" => Some(self.ade),
            "TrA" => Some(self.tra),
            "TrE" => self.tre,
            "MS" => self.ms,
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Index of the first sample attaining the maximum progress.
pub fn ed_index(log: &TrajectoryLog) -> usize {
    let mut best = 0;
    for (i, s) in log.samples.iter().enumerate() {
        if s.progress > log.samples[best].progress {
            best = i;
        }
    }
    best
}

pub fn ecp(log: &TrajectoryLog, track: &TrackIndex, laps_required: u32) -> Result<f64, MetricError> {
    log.validate()?;
    if laps_required == 0 {
        return Err(MetricError::NoLaps);
    }
    let max = log.samples.iter().map(|s| s.progress).fold(f64::NEG_INFINITY, f64::max);
    let pct = 100.0 * max / (laps_required as f64 * track.total_length());
    Ok(pct.clamp(0.0, 100.0))
}

pub fn ed(log: &TrajectoryLog) -> Result<f64, MetricError> {
    log.validate()?;
    Ok(log.samples[ed_index(log)].sim_time - log.samples[0].sim_time)
}

pub fn aats(log: &TrajectoryLog) -> Result<f64, MetricError> {
    log.validate()?;
    let window = &log.samples[..=ed_index(log)];
    let mean = window.iter().map(|s| s.state.v).sum::<f64>() / window.len() as f64;
    Ok(3.6 * mean)
}

pub fn ade(log: &TrajectoryLog) -> Result<f64, MetricError> {
    log.validate()?;
    let window = &log.samples[..=ed_index(log)];
    Ok(window.iter().map(|s| s.lateral_offset.abs()).sum::<f64>() / window.len() as f64)
}

/// `1 − √(t_u/t_e)`. Each sample after the first stands for the step that
/// ended at it, so `t_u` counts those samples with exactly one wheel out.
pub fn tra(log: &TrajectoryLog) -> Result<f64, MetricError> {
    log.validate()?;
    let t_e = log.duration();
    let unsafe_steps = log.samples[1..].iter().filter(|s| s.wheels_out == 1).count();
    let t_u = unsafe_steps as f64 * log.metadata.dt_env;
    Ok(admissibility(t_u, t_e))
}

pub fn admissibility(t_u: f64, t_e: f64) -> f64 {
    (1.0 - (t_u / t_e).sqrt()).clamp(0.0, 1.0)
}

/// Resamples `points` uniformly by arc length at `spacing`; consecutive
/// duplicates are dropped first. Returns the samples and the path length.
pub fn resample_path(points: &[Point], spacing: f64) -> (Vec<Point>, f64) {
    let mut pts: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        if pts.last().is_none_or(|&q| dist(p, q) > 1e-12) {
            pts.push(p);
        }
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let length = *cum.last().unwrap_or(&0.0);
    if pts.len() < 2 {
        return (pts, length);
    }
    let count = (length / spacing).floor() as usize;
    let mut out = Vec::with_capacity(count + 1);
    let mut seg = 0;
    for k in 0..=count {
        let s = k as f64 * spacing;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { ((s - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (pts[seg], pts[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    (out, length)
}

/// RMS parametric curvature of a driven path, from central differences on
/// an arc-length resampling.
pub fn path_curvature_rms(points: &[Point], spacing: f64) -> Result<f64, MetricError> {
    let (samples, length) = resample_path(points, spacing);
    if length < 4.0 * spacing {
        return Err(MetricError::PathTooShort {
            length,
            required: 4.0 * spacing,
        });
    }
    let kappa: Vec<f64> = (1..samples.len() - 1)
        .filter_map(|i| central_difference_curvature(samples[i - 1], samples[i], samples[i + 1], spacing))
        .collect();
    Ok(rms(&kappa))
}

/// Ratio of track RMS curvature over the covered span to RMS curvature of
/// the driven path, both over `[0, ED]`.
pub fn tre(log: &TrajectoryLog, track: &TrackIndex, spacing: f64) -> Result<f64, MetricError> {
    log.validate()?;
    let window = &log.samples[..=ed_index(log)];
    let path: Vec<Point> = window.iter().map(|s| s.state.position()).collect();
    let path_rms = path_curvature_rms(&path, spacing)?;
    if path_rms < 1e-9 {
        return Err(MetricError::ZeroPathCurvature);
    }
    let s0 = track.project(window[0].state.position()).s - window[0].progress;
    let lo = window.iter().map(|s| s.progress).fold(f64::INFINITY, f64::min);
    let hi = window.iter().map(|s| s.progress).fold(f64::NEG_INFINITY, f64::max);
    let track_rms = track.curvature_rms_over_span(s0 + lo, s0 + hi, spacing)?;
    Ok(track_rms / path_rms)
}

/// `ln((t₂−t₁)³/v_peak² · ∫|v̈|² dt)` for a uniformly sampled speed profile.
/// Second differences at the two ends are extrapolated linearly.
pub fn log_dimensionless_jerk(speeds: &[f64], dt: f64) -> Result<f64, MetricError> {
    let n = speeds.len();
    if n < 5 {
        return Err(MetricError::TooFewSamples(n));
    }
    let v_peak = speeds.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if v_peak == 0.0 {
        return Err(MetricError::ZeroPeakSpeed);
    }
    let mut acc = vec![0.0; n];
    for i in 1..n - 1 {
        acc[i] = (speeds[i + 1] - 2.0 * speeds[i] + speeds[i - 1]) / (dt * dt);
    }
    acc[0] = 2.0 * acc[1] - acc[2];
    acc[n - 1] = 2.0 * acc[n - 2] - acc[n - 3];
    let integral: f64 = acc
        .windows(2)
        .map(|w| 0.5 * (w[0] * w[0] + w[1] * w[1]) * dt)
        .sum();
    let duration = (n - 1) as f64 * dt;
    Ok((duration.powi(3) / (v_peak * v_peak) * integral.max(JERK_FLOOR)).ln())
}

/// Movement smoothness, the negated log dimensionless jerk over `[0, ED]`.
pub fn ms(log: &TrajectoryLog) -> Result<f64, MetricError> {
    log.validate()?;
    let speeds: Vec<f64> = log.samples[..=ed_index(log)].iter().map(|s| s.state.v).collect();
    Ok(-log_dimensionless_jerk(&speeds, log.metadata.dt_env)?)
}

pub fn compute_metrics(log: &TrajectoryLog, track: &TrackIndex, laps_required: u32) -> Result<MetricsReport, MetricError> {
    compute_metrics_with(log, track, laps_required, DEFAULT_TRE_SPACING)
}

pub fn compute_metrics_with(
    log: &TrajectoryLog,
    track: &TrackIndex,
    laps_required: u32,
    tre_spacing: f64,
) -> Result<MetricsReport, MetricError> {
    log.validate()?;
    Ok(MetricsReport {
        ecp: ecp(log, track, laps_required)?,
        ed: ed(log)?,
        aats: aats(log)?,
        ade: ade(log)?,
        tra: tra(log)?,
        tre: tre(log, track, tre_spacing).ok(),
        ms: ms(log).ok(),
    })
}

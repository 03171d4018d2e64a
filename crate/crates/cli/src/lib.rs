//! Evaluation harness behind the `l2r` binary.

pub mod harness;

use std::path::Path;

use l2r_core::metrics::{compute_metrics, MetricsReport};
use l2r_core::sim::EpisodeConfig;
use l2r_core::track::{self, TrackIndex};
use l2r_core::trajectory::TrajectoryLog;

pub use harness::{
    aggregate, load_replay, AgentSpec, EpisodeResult, EvaluationReport, Harness, HarnessError, MetricAggregate,
    PreEvaluationReport, ReplaySource, FLAGGED_WHEN_INCOMPLETE, PRE_EVAL_ACCEL_CAP, PRE_EVAL_BUDGET_S,
};

/// Reads an episode config from JSON; missing fields take their defaults.
pub fn load_config(path: &Path) -> anyhow::Result<EpisodeConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(EpisodeConfig::from_json_str(&text)?)
}

/// Scores a saved log against `track`, or the track named in its metadata.
pub fn score_log(path: &Path, track: Option<&str>) -> anyhow::Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let log = TrajectoryLog::from_json(&text)?;
    let name = track.unwrap_or(&log.metadata.track);
    let index = TrackIndex::new(track::resolve(name)?)?;
    Ok(compute_metrics(&log, &index, log.metadata.laps_required)?)
}

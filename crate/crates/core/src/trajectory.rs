//! Timestamped episode samples consumed by the metrics.

use serde::{Deserialize, Serialize};

use crate::vehicle::{ActionCommand, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    LapsComplete,
    OutOfBounds,
    InsufficientProgress,
    StepLimit,
    #[default]
    None,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::LapsComplete => "laps_complete",
            TerminationReason::OutOfBounds => "out_of_bounds",
            TerminationReason::InsufficientProgress => "insufficient_progress",
            TerminationReason::StepLimit => "step_limit",
            TerminationReason::None => "none",
        }
    }
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub sim_time: f64,
    pub state: VehicleState,
    /// Command applied over the step that ended at this sample.
    pub action: ActionCommand,
    /// Unwrapped progress since spawn, m.
    pub progress: f64,
    pub lateral_offset: f64,
    pub wheels_out: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetadata {
    pub track: String,
    pub laps_required: u32,
    pub dt_env: f64,
    pub termination_reason: TerminationReason,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub metadata: LogMetadata,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("log needs at least 2 samples, found {0}")]
    TooShort(usize),
    #[error("sample {index} breaks the constant {dt} s spacing")]
    IrregularSpacing { index: usize, dt: f64 },
    #[error("malformed log: {0}")]
    Malformed(String),
}

impl TrajectoryLog {
    pub fn validate(&self) -> Result<(), LogError> {
        let n = self.samples.len();
        if n < 2 {
            return Err(LogError::TooShort(n));
        }
        let dt = self.metadata.dt_env;
        let t0 = self.samples[0].sim_time;
        for (i, w) in self.samples.windows(2).enumerate() {
            let expected = t0 + (i + 1) as f64 * dt;
            if !(w[1].sim_time > w[0].sim_time) || (w[1].sim_time - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(LogError::IrregularSpacing { index: i + 1, dt });
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.sim_time - a.sim_time,
            _ => 0.0,
        }
    }

    /// Prefix of the log up to and including sample `end`.
    pub fn truncated(&self, end: usize) -> TrajectoryLog {
        TrajectoryLog {
            metadata: self.metadata.clone(),
            samples: self.samples[..=end.min(self.samples.len() - 1)].to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LogError> {
        serde_json::from_str(text).map_err(|e| LogError::Malformed(e.to_string()))
    }
}

/// 64-bit FNV-1a, used to fingerprint configurations.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

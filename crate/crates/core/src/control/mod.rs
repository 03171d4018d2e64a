//! Baseline agents: the centerline MPC and the uniform random policy.

pub mod ilqr;
pub mod mpc;
pub mod random;

use crate::observation::Observation;
use crate::vehicle::ActionCommand;

pub use ilqr::{ilqr_solve, rollout, BikeModel, IlqrOptions, IlqrSolution, Model, TrackingCost};
pub use mpc::{build_reference, mpc_decide, mpc_policy, MpcAgent, MpcConfig, MpcDecision, FALLBACK_ACTION};
pub use random::RandomAgent;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("steering angle {0} rad reaches the tan singularity")]
    SteeringSingularity(f64),
    #[error("solver diverged")]
    Diverged,
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("unknown MPC preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("agent failed: {0}")]
    Failed(String),
    #[error("replay exhausted after {0} actions")]
    Exhausted(usize),
}

/// Anything that maps observations to commands, one call per env step.
pub trait Agent {
    fn name(&self) -> &str;

    /// Called at the start of every episode.
    fn reset(&mut self) {}

    fn act(&mut self, observation: &Observation) -> Result<ActionCommand, AgentError>;
}

/// Plays back a fixed action sequence.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    actions: Vec<ActionCommand>,
    cursor: usize,
}

impl ReplayAgent {
    pub fn new(actions: Vec<ActionCommand>) -> Self {
        ReplayAgent { actions, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl Agent for ReplayAgent {
    fn name(&self) -> &str {
        "replay"
    }

    fn reset(&mut self) {
        self.cursor = 0;
    }

    fn act(&mut self, _observation: &Observation) -> Result<ActionCommand, AgentError> {
        let a = self.actions.get(self.cursor).copied().ok_or(AgentError::Exhausted(self.cursor))?;
        self.cursor += 1;
        Ok(a)
    }
}

//! Drives one agent through one episode of an in-process simulator.

use crate::control::{Agent, AgentError};
use crate::observation::Observation;
use crate::sim::{SimError, Simulator};
use crate::trajectory::TrajectoryLog;
use crate::vehicle::ActionCommand;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub log: TrajectoryLog,
    pub total_reward: f64,
    pub steps: u64,
    /// The agent failed mid-episode; the log ends at its last good step.
    pub agent_error: Option<AgentError>,
}

pub fn run_episode(sim: &mut Simulator, agent: &mut dyn Agent) -> Result<EpisodeOutcome, SimError> {
    run_episode_with(sim, agent, |_, _| {})
}

/// Like [`run_episode`], calling `on_step(observation, action)` with each
/// observation and the action chosen from it.
pub fn run_episode_with(
    sim: &mut Simulator,
    agent: &mut dyn Agent,
    mut on_step: impl FnMut(&Observation, &ActionCommand),
) -> Result<EpisodeOutcome, SimError> {
    let mut obs = sim.reset()?;
    agent.reset();
    let mut total_reward = 0.0;
    let mut steps = 0;
    let mut agent_error = None;
    while !sim.state().is_some_and(|s| s.done) {
        let action = match agent.act(&obs) {
            Ok(a) => a,
            Err(e) => {
                agent_error = Some(e);
                break;
            }
        };
        on_step(&obs, &action);
        let result = sim.step(action)?;
        total_reward += result.reward;
        steps += 1;
        obs = result.observation;
    }
    Ok(EpisodeOutcome {
        log: sim.trajectory_log(),
        total_reward,
        steps,
        agent_error,
    })
}

//! Receding-horizon centerline tracker built on the iLQR solver.

use std::sync::Arc;

use nalgebra::{Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::ilqr::{ilqr_solve, BikeModel, IlqrOptions, IlqrSolution, Input, Model, State, TrackingCost};
use super::{Agent, AgentError, ControlError};
use crate::geom::unwrap_near;
use crate::observation::Observation;
use crate::track::TrackIndex;
use crate::vehicle::{ActionCommand, VehicleState};

pub const PRESETS: [&str; 2] = ["matched", "paper-estimates"];

/// Emitted when the solver fails: coast straight while braking gently.
pub const FALLBACK_ACTION: ActionCommand = ActionCommand {
    acceleration: -0.5,
    steering: 0.0,
    gear: crate::vehicle::Gear::Drive,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Diagonal state weights on `[x, y, v, φ]`.
    pub q: [f64; 4],
    /// Diagonal action weights on `[accel, steer]`.
    pub r: [f64; 2],
    pub v_ref: f64,
    pub horizon: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub wheelbase: f64,
    pub accel_gain: f64,
    pub steer_gain: f64,
    pub dt_model: f64,
    pub solver: IlqrOptions,
    /// Seed each solve with the previous plan shifted by one step.
    pub warm_start: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig::matched()
    }
}

impl MpcConfig {
    /// Model gains equal to the simulator defaults.
    pub fn matched() -> Self {
        MpcConfig {
            q: [1.0, 1.0, 1.0, 16.0],
            r: [0.1, 1.0],
            v_ref: 12.5,
            horizon: 6,
            lower: [-1.0, -1.0],
            upper: [1.0, 1.0],
            wheelbase: 2.7,
            accel_gain: 10.0,
            steer_gain: 0.3,
            dt_model: 0.1,
            solver: IlqrOptions::default(),
            warm_start: false,
        }
    }

    /// Estimated gains: steering gain 6 with a ±0.2 steering box.
    pub fn paper_estimates() -> Self {
        MpcConfig {
            lower: [-1.0, -0.2],
            upper: [1.0, 0.2],
            steer_gain: 6.0,
            ..MpcConfig::matched()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ControlError> {
        match name {
            "matched" => Ok(Self::matched()),
            "paper-estimates" => Ok(Self::paper_estimates()),
            other => Err(ControlError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::InvalidConfig(m.to_string()));
        if self.q.iter().any(|&w| !(w >= 0.0)) {
            return bad("Q entries must be non-negative");
        }
        if self.r.iter().any(|&w| !(w > 0.0)) {
            return bad("R entries must be positive");
        }
        if self.horizon < 2 {
            return bad("horizon must be at least 2");
        }
        if (0..2).any(|i| !(self.lower[i] < self.upper[i])) {
            return bad("lower bounds must be below upper bounds");
        }
        if !(self.wheelbase > 0.0 && self.dt_model > 0.0 && self.v_ref >= 0.0) {
            return bad("wheelbase, dt_model and v_ref must be positive");
        }
        if self.solver.line_search.is_empty() {
            return bad("line search schedule is empty");
        }
        Ok(())
    }

    pub fn model(&self) -> BikeModel {
        BikeModel {
            wheelbase: self.wheelbase,
            accel_gain: self.accel_gain,
            steer_gain: self.steer_gain,
            dt: self.dt_model,
        }
    }
}

/// Reference states `[x, y, v_ref, φ_ref]` at `v_ref·dt_model` spacing from
/// the projection of the vehicle, headings unwrapped onto the branch nearest
/// the vehicle yaw.
pub fn build_reference(state: &VehicleState, track: &TrackIndex, config: &MpcConfig) -> Vec<State> {
    let s_star = track.project(state.position()).s;
    let step = config.v_ref * config.dt_model;
    let mut out = Vec::with_capacity(config.horizon + 1);
    let mut prev_heading = state.yaw;
    for k in 0..=config.horizon {
        let sample = track.sample_centerline(s_star + k as f64 * step);
        let heading = unwrap_near(sample.heading, prev_heading);
        prev_heading = heading;
        out.push(State::new(sample.point[0], sample.point[1], config.v_ref, heading));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDecision {
    pub action: ActionCommand,
    /// Set when the solver failed and the fallback action was emitted.
    pub fallback: Option<ControlError>,
    pub solution: Option<IlqrSolution>,
}

fn tracking_cost(config: &MpcConfig, reference: Vec<State>) -> TrackingCost {
    TrackingCost {
        q: Vector4::from(config.q),
        r: Vector2::from(config.r),
        lower: Input::from(config.lower),
        upper: Input::from(config.upper),
        reference,
    }
}

/// One receding-horizon decision using an arbitrary internal model.
pub fn mpc_decide<M: Model>(
    state: &VehicleState,
    track: &TrackIndex,
    config: &MpcConfig,
    model: &M,
    init: Option<&[Input]>,
) -> MpcDecision {
    let reference = build_reference(state, track, config);
    let cost = tracking_cost(config, reference);
    let s0 = State::new(state.x, state.y, state.v, state.yaw);
    match ilqr_solve(model, &s0, &cost, &config.solver, init) {
        Ok(sol) => {
            let a = cost.clamp(&sol.actions[0]);
            let action = ActionCommand::new(a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0));
            MpcDecision {
                action,
                fallback: None,
                solution: Some(sol),
            }
        }
        Err(e) => MpcDecision {
            action: FALLBACK_ACTION,
            fallback: Some(e),
            solution: None,
        },
    }
}

/// Decision from an observation, reconstructing the rear-axle state from the
/// pose and speed slots.
pub fn mpc_policy(observation: &Observation, track: &TrackIndex, config: &MpcConfig) -> MpcDecision {
    let state = observation.rear_axle_state(config.wheelbase);
    mpc_decide(&state, track, config, &config.model(), None)
}

/// Stateful MPC agent; counts fallbacks and optionally warm-starts.
#[derive(Debug, Clone)]
pub struct MpcAgent {
    config: MpcConfig,
    track: Arc<TrackIndex>,
    previous: Option<Vec<Input>>,
    pub fallbacks: usize,
    pub last_error: Option<ControlError>,
}

impl MpcAgent {
    pub fn new(config: MpcConfig, track: Arc<TrackIndex>) -> Result<Self, ControlError> {
        config.validate()?;
        Ok(MpcAgent {
            config,
            track,
            previous: None,
            fallbacks: 0,
            last_error: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn decide(&mut self, observation: &Observation) -> MpcDecision {
        let state = observation.rear_axle_state(self.config.wheelbase);
        let init = if self.config.warm_start { self.previous.as_deref() } else { None };
        let decision = mpc_decide(&state, &self.track, &self.config, &self.config.model(), init);
        if let Some(e) = &decision.fallback {
            self.fallbacks += 1;
            self.last_error = Some(e.clone());
            self.previous = None;
        } else if let Some(sol) = &decision.solution {
            let mut shifted = sol.actions[1..].to_vec();
            shifted.push(*sol.actions.last().unwrap());
            self.previous = Some(shifted);
        }
        decision
    }
}

impl Agent for MpcAgent {
    fn name(&self) -> &str {
        "mpc"
    }

    fn reset(&mut self) {
        self.previous = None;
    }

    fn act(&mut self, observation: &Observation) -> Result<ActionCommand, AgentError> {
        Ok(self.decide(observation).action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::synth;

    #[test]
    fn straight_reference_spacing() {
        let t = TrackIndex::new(synth::oval()).unwrap();
        let st = VehicleState::new(20.0, 0.0, 12.5, 0.0);
        let r = build_reference(&st, &t, &MpcConfig::matched());
        assert_eq!(r.len(), 7);
        for w in r.windows(2) {
            assert!(((w[1][0] - w[0][0]) - 1.25).abs() < 1e-9);
            assert!(w[1][1].abs() < 1e-9 && w[1][3] == w[0][3]);
        }
    }

    #[test]
    fn presets() {
        assert_eq!(MpcConfig::preset("paper-estimates").unwrap().steer_gain, 6.0);
        assert!(MpcConfig::preset("nope").is_err());
        for p in PRESETS {
            MpcConfig::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn config_json_defaults() {
        let c: MpcConfig = serde_json::from_str(r#"{"v_ref": 10.0}"#).unwrap();
        assert_eq!(c.v_ref, 10.0);
        assert_eq!(c.q, [1.0, 1.0, 1.0, 16.0]);
    }
}

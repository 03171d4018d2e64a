//! Episodic engine: spawn, step, reward, termination, lap accounting and
//! observation assembly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::camera::{render_pseudocamera, CameraConfig};
use crate::geom::Point;
use crate::observation::{assemble_observation, Observation, ObservationContext};
use crate::track::{self, TrackError, TrackIndex};
use crate::trajectory::{fnv1a64, LogMetadata, TerminationReason, TrajectoryLog, TrajectorySample};
use crate::vehicle::{self, clamp_action, wheel_positions, ActionCommand, Gear, VehicleError, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Reward per meter of forward progress.
    pub progress_coef: f64,
    /// Weight of the optional centering bonus (per second).
    pub center_coef: f64,
    /// Penalty on the out-of-bounds terminal step.
    pub oob_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            progress_coef: 1.0,
            center_coef: 0.0,
            oob_penalty: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Bundled track name or path to a track JSON file.
    pub track: String,
    /// Spawn progress along the centerline, m.
    pub spawn_s: f64,
    /// Spawn lateral offset, m, positive left.
    pub spawn_offset: f64,
    /// Spawn heading relative to the centerline tangent, rad.
    pub spawn_yaw_offset: f64,
    pub laps_required: u32,
    pub dt_env: f64,
    pub max_wall_steps: u64,
    pub min_progress_window: f64,
    pub min_progress_distance: f64,
    /// Multiplier on positive acceleration commands, in (0, 1].
    pub accel_cap: f64,
    pub reward: RewardConfig,
    pub vehicle: VehicleParams,
    pub seed: u64,
    pub camera: CameraConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            track: "oval".to_string(),
            spawn_s: 0.0,
            spawn_offset: 0.0,
            spawn_yaw_offset: 0.0,
            laps_required: 3,
            dt_env: 0.1,
            max_wall_steps: 20_000,
            min_progress_window: 15.0,
            min_progress_distance: 1.0,
            accel_cap: 1.0,
            reward: RewardConfig::default(),
            vehicle: VehicleParams::default(),
            seed: 0,
            camera: CameraConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("episode not started; call reset first")]
    NotReset,
    #[error("episode already finished ({0})")]
    EpisodeFinished(TerminationReason),
    #[error("malformed config: {0}")]
    Malformed(String),
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.laps_required < 1 {
            return bad("laps_required must be at least 1");
        }
        if !(self.dt_env > 0.0 && self.dt_env.is_finite()) {
            return bad("dt_env must be positive");
        }
        if !(self.accel_cap > 0.0 && self.accel_cap <= 1.0) {
            return bad("accel_cap must lie in (0, 1]");
        }
        if !(self.min_progress_window > 0.0) {
            return bad("min_progress_window must be positive");
        }
        if self.max_wall_steps == 0 {
            return bad("max_wall_steps must be positive");
        }
        if ![self.spawn_s, self.spawn_offset, self.spawn_yaw_offset].iter().all(|v| v.is_finite()) {
            return bad("spawn pose must be finite");
        }
        self.vehicle.validate()?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        let cfg: EpisodeConfig = serde_json::from_str(text).map_err(|e| SimError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// FNV-1a fingerprint of the canonical JSON form.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_json().as_bytes()))
    }

    pub fn load_track(&self) -> Result<Arc<TrackIndex>, SimError> {
        let spec = track::resolve(&self.track)?;
        Ok(Arc::new(TrackIndex::new(spec)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub vehicle: VehicleState,
    pub sim_time: f64,
    pub step_count: u64,
    /// Progress since spawn, m, accumulated from wrapped projection deltas.
    pub unwrapped_progress: f64,
    pub laps_done: u32,
    pub wheels_out: u8,
    pub lateral_offset: f64,
    /// Half-width on the side of the current lateral offset.
    pub half_width: f64,
    /// Wrapped projection progress of the rear axle.
    pub track_s: f64,
    pub done: bool,
    pub termination_reason: TerminationReason,
    /// Unwrapped progress after every step, starting with 0 at reset.
    pub progress_history: Vec<f64>,
}

/// Stable keys of the per-step info map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub progress: f64,
    pub lateral_offset: f64,
    pub wheels_out: u8,
    pub termination_reason: TerminationReason,
    pub laps_done: u32,
    pub sim_time: f64,
    pub step: u64,
    /// A non-finite command component was replaced by zero.
    pub action_clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Termination rule in priority order: laps, out-of-bounds, insufficient
/// progress, step limit.
pub fn check_termination(state: &SimState, config: &EpisodeConfig) -> TerminationReason {
    if state.laps_done >= config.laps_required {
        return TerminationReason::LapsComplete;
    }
    if state.wheels_out >= 2 {
        return TerminationReason::OutOfBounds;
    }
    let window_steps = (config.min_progress_window / config.dt_env).round() as usize;
    let k = state.progress_history.len().saturating_sub(1);
    if k >= window_steps {
        let net = state.progress_history[k] - state.progress_history[k - window_steps];
        if net < config.min_progress_distance {
            return TerminationReason::InsufficientProgress;
        }
    }
    if state.step_count >= config.max_wall_steps {
        return TerminationReason::StepLimit;
    }
    TerminationReason::None
}

/// `c_prog·Δs + c_center·max(0, 1 − |d|/w)·dt − P_oob` (penalty on the
/// out-of-bounds terminal step only).
pub fn compute_reward(prev: &SimState, next: &SimState, config: &RewardConfig, dt_env: f64) -> f64 {
    let delta = next.unwrapped_progress - prev.unwrapped_progress;
    let mut r = config.progress_coef * delta;
    if config.center_coef != 0.0 {
        let centering = (1.0 - next.lateral_offset.abs() / next.half_width).max(0.0);
        r += config.center_coef * centering * dt_env;
    }
    if next.termination_reason == TerminationReason::OutOfBounds {
        r -= config.oob_penalty;
    }
    r
}

/// One episode engine. Single-threaded; `Send` so it can move between
/// threads between calls.
#[derive(Debug)]
pub struct Simulator {
    config: EpisodeConfig,
    track: Arc<TrackIndex>,
    state: Option<SimState>,
    last_action: ActionCommand,
    last_velocity: [f64; 3],
    log: Vec<TrajectorySample>,
}

impl Simulator {
    pub fn new(config: EpisodeConfig) -> Result<Self, SimError> {
        config.validate()?;
        let track = config.load_track()?;
        Ok(Self::with_track(config, track))
    }

    /// Uses an already indexed track; `config.track` is kept for metadata.
    pub fn with_track(config: EpisodeConfig, track: Arc<TrackIndex>) -> Self {
        Simulator {
            config,
            track,
            state: None,
            last_action: ActionCommand::zero(),
            last_velocity: [0.0; 3],
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn track(&self) -> &Arc<TrackIndex> {
        &self.track
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    /// Replaces the configuration (reloading the track if it changed) and
    /// resets. On failure the engine is left untouched.
    pub fn reset_with(&mut self, config: EpisodeConfig) -> Result<Observation, SimError> {
        config.validate()?;
        let track = if config.track == self.config.track {
            self.track.clone()
        } else {
            config.load_track()?
        };
        self.config = config;
        self.track = track;
        self.reset()
    }

    /// Standing start at `spawn_s` offset by `spawn_offset`, heading along
    /// the centerline tangent plus `spawn_yaw_offset`.
    pub fn reset(&mut self) -> Result<Observation, SimError> {
        let sample = self.track.sample_centerline(self.config.spawn_s);
        let heading = sample.heading;
        let normal = [-heading.sin(), heading.cos()];
        let vehicle = VehicleState::new(
            sample.point[0] + self.config.spawn_offset * normal[0],
            sample.point[1] + self.config.spawn_offset * normal[1],
            0.0,
            heading + self.config.spawn_yaw_offset,
        );
        let proj = self.track.project(vehicle.position());
        let (left, right) = self.track.half_widths_at(proj.s);
        let mut state = SimState {
            vehicle,
            sim_time: 0.0,
            step_count: 0,
            unwrapped_progress: 0.0,
            laps_done: 0,
            wheels_out: self.count_wheels_out(&vehicle),
            lateral_offset: proj.d,
            half_width: if proj.d >= 0.0 { left } else { right },
            track_s: proj.s,
            done: false,
            termination_reason: TerminationReason::None,
            progress_history: vec![0.0],
        };
        state.termination_reason = check_termination(&state, &self.config);
        state.done = state.termination_reason != TerminationReason::None;
        self.last_action = ActionCommand::zero();
        self.last_velocity = [0.0; 3];
        self.log.clear();
        self.log.push(TrajectorySample {
            sim_time: 0.0,
            state: vehicle,
            action: self.last_action,
            progress: 0.0,
            lateral_offset: proj.d,
            wheels_out: state.wheels_out,
        });
        self.state = Some(state);
        Ok(self.observe())
    }

    /// Places the vehicle at `(s, d)` at rest and restarts the episode there.
    pub fn set_pose(&mut self, s: f64, d: f64) -> Result<Observation, SimError> {
        let mut cfg = self.config.clone();
        cfg.spawn_s = s;
        cfg.spawn_offset = d;
        self.reset_with(cfg)
    }

    fn count_wheels_out(&self, vehicle: &VehicleState) -> u8 {
        wheel_positions(vehicle, &self.config.vehicle)
            .iter()
            .filter(|w| !self.track.is_inside_drivable(**w))
            .count() as u8
    }

    /// Command that actually drives the plant: gear gating and the
    /// acceleration cap apply to positive acceleration only.
    pub fn effective_action(&self, cmd: &ActionCommand) -> ActionCommand {
        let mut a = *cmd;
        if a.acceleration > 0.0 {
            if a.gear != Gear::Drive {
                a.acceleration = 0.0;
            } else {
                a.acceleration *= self.config.accel_cap;
            }
        }
        a
    }

    pub fn step(&mut self, action: ActionCommand) -> Result<StepResult, SimError> {
        let prev = self.state.as_ref().ok_or(SimError::NotReset)?;
        if prev.done {
            return Err(SimError::EpisodeFinished(prev.termination_reason));
        }
        let (mut clamped, warned) = clamp_action(action.acceleration, action.steering);
        clamped.gear = action.gear;
        let applied = self.effective_action(&clamped);
        let vehicle = vehicle::step(&prev.vehicle, &applied, self.config.dt_env, &self.config.vehicle)?;

        let proj = self.track.project(vehicle.position());
        let total = self.track.total_length();
        let mut delta = proj.s - prev.track_s;
        if self.track.closed() {
            delta = (delta + total / 2.0).rem_euclid(total) - total / 2.0;
        }
        let unwrapped = prev.unwrapped_progress + delta;
        let laps_done = (unwrapped / total).floor().max(0.0) as u32;
        let (left, right) = self.track.half_widths_at(proj.s);
        let step_count = prev.step_count + 1;

        let mut history = prev.progress_history.clone();
        history.push(unwrapped);
        let mut next = SimState {
            vehicle,
            sim_time: step_count as f64 * self.config.dt_env,
            step_count,
            unwrapped_progress: unwrapped,
            laps_done,
            wheels_out: self.count_wheels_out(&vehicle),
            lateral_offset: proj.d,
            half_width: if proj.d >= 0.0 { left } else { right },
            track_s: proj.s,
            done: false,
            termination_reason: TerminationReason::None,
            progress_history: history,
        };
        next.termination_reason = check_termination(&next, &self.config);
        next.done = next.termination_reason != TerminationReason::None;
        let reward = compute_reward(prev, &next, &self.config.reward, self.config.dt_env);

        self.last_action = applied;
        self.log.push(TrajectorySample {
            sim_time: next.sim_time,
            state: vehicle,
            action: applied,
            progress: unwrapped,
            lateral_offset: proj.d,
            wheels_out: next.wheels_out,
        });
        let info = StepInfo {
            progress: unwrapped,
            lateral_offset: proj.d,
            wheels_out: next.wheels_out,
            termination_reason: next.termination_reason,
            laps_done,
            sim_time: next.sim_time,
            step: step_count,
            action_clamped: warned,
        };
        let done = next.done;
        self.state = Some(next);
        let observation = self.observe();
        Ok(StepResult {
            observation,
            reward,
            done,
            info,
        })
    }

    /// Observation of the current state; also advances the velocity memory
    /// used for the acceleration slots.
    fn observe(&mut self) -> Observation {
        let state = self.state.as_ref().expect("observe after reset");
        let mut obs = assemble_observation(
            &state.vehicle,
            &ObservationContext {
                last_action: &self.last_action,
                previous_velocity: self.last_velocity,
                dt_env: self.config.dt_env,
                sim_time: state.sim_time,
            },
            &self.config.vehicle,
        );
        self.last_velocity = obs.velocity();
        if self.config.camera.enabled {
            obs.image = Some(self.render(&self.config.camera));
        }
        obs
    }

    pub fn render(&self, camera: &CameraConfig) -> crate::observation::Image {
        let state = self.state.as_ref().expect("render after reset");
        render_pseudocamera(&state.vehicle, &self.track, &self.config.vehicle, camera)
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.log
    }

    pub fn trajectory_log(&self) -> TrajectoryLog {
        TrajectoryLog {
            metadata: LogMetadata {
                track: self.track.name().to_string(),
                laps_required: self.config.laps_required,
                dt_env: self.config.dt_env,
                termination_reason: self
                    .state
                    .as_ref()
                    .map(|s| s.termination_reason)
                    .unwrap_or_default(),
                config_hash: self.config.hash(),
            },
            samples: self.log.clone(),
        }
    }

    pub fn wheel_positions(&self) -> Option<[Point; 4]> {
        self.state
            .as_ref()
            .map(|s| wheel_positions(&s.vehicle, &self.config.vehicle))
    }
}

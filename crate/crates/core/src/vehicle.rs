//! Kinematic bicycle model about the rear axle, command mapping, RK4
//! integration and wheel footprint.
//!
//! State is `[x, y, v, φ]`: rear-axle position in east/north meters, speed in
//! m/s and yaw measured anti-clockwise from east. Commands in `[-1, 1]` map
//! linearly to physical inputs: `a = k1 · accel_cmd`, `δ = k2 · steer_cmd`.

use serde::{Deserialize, Serialize};

use crate::geom::{rotate, wrap_angle, Point};

/// Integrator substep, in seconds.
pub const SUBSTEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    /// Unwrapped yaw.
    pub yaw: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, v: f64, yaw: f64) -> Self {
        VehicleState { x, y, v, yaw }
    }

    pub fn position(&self) -> Point {
        [self.x, self.y]
    }

    pub fn yaw_wrapped(&self) -> f64 {
        wrap_angle(self.yaw)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.yaw.is_finite()
    }

    /// Geometric center: rear axle moved forward by half the wheelbase.
    pub fn body_center(&self, wheelbase: f64) -> Point {
        let half = wheelbase / 2.0;
        [self.x + half * self.yaw.cos(), self.y + half * self.yaw.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gear {
    Park,
    #[default]
    Drive,
    Neutral,
    Reverse,
}

impl Gear {
    pub fn code(self) -> u8 {
        match self {
            Gear::Park => 0,
            Gear::Drive => 1,
            Gear::Neutral => 2,
            Gear::Reverse => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Gear> {
        match code {
            0 => Some(Gear::Park),
            1 => Some(Gear::Drive),
            2 => Some(Gear::Neutral),
            3 => Some(Gear::Reverse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionCommand {
    pub acceleration: f64,
    pub steering: f64,
    #[serde(default)]
    pub gear: Gear,
}

impl ActionCommand {
    pub fn new(acceleration: f64, steering: f64) -> Self {
        ActionCommand {
            acceleration,
            steering,
            gear: Gear::Drive,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Clamps raw commands into `[-1, 1]`. Non-finite components become 0 and
/// set the returned warning flag.
pub fn clamp_action(acceleration: f64, steering: f64) -> (ActionCommand, bool) {
    let mut warned = false;
    let mut fix = |v: f64| {
        if v.is_finite() {
            v.clamp(-1.0, 1.0)
        } else {
            warned = true;
            0.0
        }
    };
    let a = fix(acceleration);
    let s = fix(steering);
    (ActionCommand::new(a, s), warned)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Wheelbase `L`, m.
    pub wheelbase: f64,
    /// `k1`: m/s² per unit acceleration command.
    pub accel_gain: f64,
    /// `k2`: rad per unit steering command.
    pub steer_gain: f64,
    pub track_width: f64,
    pub wheel_radius: f64,
    /// Quadratic drag coefficient `c_d`, 1/m.
    pub drag_coeff: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.7,
            accel_gain: 10.0,
            steer_gain: 0.3,
            track_width: 1.6,
            wheel_radius: 0.3,
            drag_coeff: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VehicleError {
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("dynamics diverged to a non-finite state")]
    Diverged,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.wheelbase > 0.0) {
            return Err(VehicleError::InvalidParams("wheelbase must be positive"));
        }
        if !(self.accel_gain > 0.0) {
            return Err(VehicleError::InvalidParams("accel_gain must be positive"));
        }
        if !(self.steer_gain > 0.0 && self.steer_gain <= std::f64::consts::FRAC_PI_2) {
            return Err(VehicleError::InvalidParams("steer_gain must lie in (0, π/2]"));
        }
        if !(self.track_width > 0.0) {
            return Err(VehicleError::InvalidParams("track_width must be positive"));
        }
        if !(self.wheel_radius > 0.0) {
            return Err(VehicleError::InvalidParams("wheel_radius must be positive"));
        }
        if !(self.drag_coeff >= 0.0) {
            return Err(VehicleError::InvalidParams("drag_coeff must be non-negative"));
        }
        Ok(())
    }
}

/// Time derivative of the state, `(ẋ, ẏ, v̇, φ̇)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub dx: f64,
    pub dy: f64,
    pub dv: f64,
    pub dyaw: f64,
}

pub fn derivatives(state: &VehicleState, action: &ActionCommand, params: &VehicleParams) -> StateRate {
    let (s, c) = state.yaw.sin_cos();
    let delta = params.steer_gain * action.steering;
    StateRate {
        dx: state.v * c,
        dy: state.v * s,
        dv: params.accel_gain * action.acceleration - params.drag_coeff * state.v * state.v,
        dyaw: state.v * delta.tan() / params.wheelbase,
    }
}

fn advance(state: &VehicleState, rate: &StateRate, h: f64) -> VehicleState {
    VehicleState {
        x: state.x + h * rate.dx,
        y: state.y + h * rate.dy,
        v: state.v + h * rate.dv,
        yaw: state.yaw + h * rate.dyaw,
    }
}

/// One classical Runge-Kutta step of size `h`, without the speed floor.
pub fn rk4_step(state: &VehicleState, action: &ActionCommand, params: &VehicleParams, h: f64) -> VehicleState {
    let k1 = derivatives(state, action, params);
    let k2 = derivatives(&advance(state, &k1, h / 2.0), action, params);
    let k3 = derivatives(&advance(state, &k2, h / 2.0), action, params);
    let k4 = derivatives(&advance(state, &k3, h), action, params);
    let w = h / 6.0;
    VehicleState {
        x: state.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: state.y + w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        v: state.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv),
        yaw: state.yaw + w * (k1.dyaw + 2.0 * k2.dyaw + 2.0 * k3.dyaw + k4.dyaw),
    }
}

/// Number of RK4 substeps used for an outer step of `dt` seconds.
pub fn substep_count(dt: f64) -> usize {
    // Guard against 0.1 / 0.01 = 10.000000000000002.
    ((dt / SUBSTEP) - 1e-9).ceil().max(1.0) as usize
}

/// Integrates the model over `dt` with RK4 substeps of at most
/// [`SUBSTEP`]; speed is floored at zero after every substep.
pub fn step(
    state: &VehicleState,
    action: &ActionCommand,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::InvalidTimeStep(dt));
    }
    let n = substep_count(dt);
    let h = dt / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = rk4_step(&s, action, params, h);
        if s.v < 0.0 {
            s.v = 0.0;
        }
    }
    if !s.is_finite() {
        return Err(VehicleError::Diverged);
    }
    Ok(s)
}

/// Wheel centers ordered front-left, front-right, rear-left, rear-right.
pub fn wheel_positions(state: &VehicleState, params: &VehicleParams) -> [Point; 4] {
    let half = params.track_width / 2.0;
    let body: [Point; 4] = [
        [params.wheelbase, half],
        [params.wheelbase, -half],
        [0.0, half],
        [0.0, -half],
    ];
    body.map(|b| {
        let r = rotate(b, state.yaw);
        [state.x + r[0], state.y + r[1]]
    })
}

//! The 30-slot multimodal observation vector and its assembly from the
//! simulator state.

use serde::{Deserialize, Serialize};

use crate::vehicle::{ActionCommand, VehicleParams, VehicleState};

pub const OBS_DIM: usize = 30;

/// Slot indices of the multimodal vector.
pub mod slot {
    pub const STEERING_REQUEST: usize = 0;
    pub const GEAR_REQUEST: usize = 1;
    pub const MODE: usize = 2;
    pub const VELOCITY: usize = 3;
    pub const ACCELERATION: usize = 6;
    pub const ANGULAR_VELOCITY: usize = 9;
    pub const YAW: usize = 12;
    pub const PITCH: usize = 13;
    pub const ROLL: usize = 14;
    /// Center coordinates are stored in (y, x, z) order.
    pub const CENTER_Y: usize = 15;
    pub const CENTER_X: usize = 16;
    pub const CENTER_Z: usize = 17;
    pub const WHEEL_RPM: usize = 18;
    pub const WHEEL_BRAKE: usize = 22;
    pub const WHEEL_TORQUE: usize = 26;
}

/// Index groups and their meaning, in vector order.
pub const VECTOR_LAYOUT: [(&[usize], &str); 11] = [
    (&[0], "steering request"),
    (&[1], "gear request"),
    (&[2], "mode"),
    (&[3, 4, 5], "directional velocity in m/s"),
    (&[6, 7, 8], "directional acceleration in m/s^2"),
    (&[9, 10, 11], "directional angular velocity"),
    (&[12, 13, 14], "vehicle yaw, pitch, and roll, respectively"),
    (&[15, 16, 17], "center of vehicle coordinates in (y, x, z)"),
    (&[18, 19, 20, 21], "wheel revolutions per minute (per wheel)"),
    (&[22, 23, 24, 25], "wheel braking (per wheel)"),
    (&[26, 27, 28, 29], "wheel torque (per wheel)"),
];

/// Raw row-major 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: u16, height: u16, channels: u8) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels as usize],
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let c = self.channels as usize;
        let i = (row * self.width as usize + col) * c;
        &self.data[i..i + c]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, value: u8) {
        let c = self.channels as usize;
        let i = (row * self.width as usize + col) * c;
        self.data[i..i + c].fill(value);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub multimodal: [f64; OBS_DIM],
    pub image: Option<Image>,
    pub sim_time: f64,
}

impl Observation {
    pub fn velocity(&self) -> [f64; 3] {
        let v = slot::VELOCITY;
        [self.multimodal[v], self.multimodal[v + 1], self.multimodal[v + 2]]
    }

    pub fn speed(&self) -> f64 {
        let [e, n, u] = self.velocity();
        (e * e + n * n + u * u).sqrt()
    }

    pub fn yaw(&self) -> f64 {
        self.multimodal[slot::YAW]
    }

    /// Vehicle center as (east, north).
    pub fn center(&self) -> [f64; 2] {
        [self.multimodal[slot::CENTER_X], self.multimodal[slot::CENTER_Y]]
    }

    /// Rear-axle state reconstructed from the center, yaw and velocity slots
    /// for a vehicle of the given wheelbase.
    pub fn rear_axle_state(&self, wheelbase: f64) -> VehicleState {
        let yaw = self.yaw();
        let [cx, cy] = self.center();
        let half = wheelbase / 2.0;
        VehicleState::new(cx - half * yaw.cos(), cy - half * yaw.sin(), self.speed(), yaw)
    }
}

/// Inputs that are not part of the vehicle state itself.
#[derive(Debug, Clone, Copy)]
pub struct ObservationContext<'a> {
    /// Command actually applied during the last step (after clamping/capping).
    pub last_action: &'a ActionCommand,
    /// ENU velocity at the previous observation.
    pub previous_velocity: [f64; 3],
    pub dt_env: f64,
    pub sim_time: f64,
}

pub fn assemble_observation(
    state: &VehicleState,
    ctx: &ObservationContext<'_>,
    params: &VehicleParams,
) -> Observation {
    let mut m = [0.0; OBS_DIM];
    let a = ctx.last_action;
    m[slot::STEERING_REQUEST] = a.steering;
    m[slot::GEAR_REQUEST] = a.gear.code() as f64;
    m[slot::MODE] = 0.0;

    let (s, c) = state.yaw.sin_cos();
    let vel = [state.v * c, state.v * s, 0.0];
    for k in 0..3 {
        m[slot::VELOCITY + k] = vel[k];
        m[slot::ACCELERATION + k] = (vel[k] - ctx.previous_velocity[k]) / ctx.dt_env;
    }
    let yaw_rate = state.v * (params.steer_gain * a.steering).tan() / params.wheelbase;
    m[slot::ANGULAR_VELOCITY + 2] = yaw_rate;

    m[slot::YAW] = state.yaw_wrapped();
    m[slot::PITCH] = 0.0;
    m[slot::ROLL] = 0.0;

    let center = state.body_center(params.wheelbase);
    m[slot::CENTER_Y] = center[1];
    m[slot::CENTER_X] = center[0];
    m[slot::CENTER_Z] = 0.0;

    let rpm = state.v / (2.0 * std::f64::consts::PI * params.wheel_radius) * 60.0;
    let brake = (-a.acceleration).max(0.0);
    let torque = a.acceleration.max(0.0);
    for w in 0..4 {
        m[slot::WHEEL_RPM + w] = rpm;
        m[slot::WHEEL_BRAKE + w] = brake;
        m[slot::WHEEL_TORQUE + w] = torque;
    }

    Observation {
        multimodal: m,
        image: None,
        sim_time: ctx.sim_time,
    }
}

//! Socket front end of the simulator.
//!
//! Four channels: UDP action datagrams in, UDP sensor datagrams out, TCP
//! camera frames out, and a TCP control channel carrying one JSON object
//! per line in each direction.

pub mod client;
pub mod control;
pub mod register;
pub mod server;
pub mod wire;

pub use client::{bind_sensor_socket, run_remote_episode, Client, ClientError, RemoteOutcome, RemoteStep};
pub use control::Request;
pub use register::{LatestValueRegister, Stamped};
pub use server::{serve, start, Pacing, ServerAddrs, ServerConfig, ServerError, ServerHandle, StatsSnapshot};
pub use wire::{ActionMessage, CameraFrame, SensorMessage, WireError};

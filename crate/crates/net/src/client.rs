//! Blocking client for the server's four channels.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use l2r_core::control::{Agent, AgentError};
use l2r_core::observation::{Observation, OBS_DIM};
use l2r_core::sim::{EpisodeConfig, StepInfo};
use l2r_core::trajectory::TrajectoryLog;
use l2r_core::vehicle::ActionCommand;
use serde_json::Value;
use thiserror::Error;

use crate::control::{is_ok, Request};
use crate::register::LatestValueRegister;
use crate::server::ServerAddrs;
use crate::wire::{ActionMessage, CameraFrame, SensorMessage, WireError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {what} at {addr}: {source}")]
    Connect {
        what: &'static str,
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("server rejected {cmd}: {reason} ({detail})")]
    Rejected { cmd: String, reason: String, detail: String },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("malformed reply: {0}")]
    Reply(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl ClientError {
    pub fn reason(&self) -> Option<&str> {
        match self {
            ClientError::Rejected { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteStep {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

struct CameraReceiver {
    frames: Arc<LatestValueRegister<CameraFrame>>,
    received: Arc<AtomicU64>,
    stream: TcpStream,
    reader: Option<JoinHandle<()>>,
}

impl CameraReceiver {
    fn start(stream: TcpStream) -> io::Result<Self> {
        let frames = Arc::new(LatestValueRegister::new());
        let received = Arc::new(AtomicU64::new(0));
        let mut input = BufReader::new(stream.try_clone()?);
        let reader = {
            let (frames, received) = (frames.clone(), received.clone());
            thread::spawn(move || {
                while let Ok(frame) = CameraFrame::read_from(&mut input) {
                    received.fetch_add(1, Ordering::SeqCst);
                    frames.offer(frame.seq as u64, frame);
                }
            })
        };
        Ok(CameraReceiver {
            frames,
            received,
            stream,
            reader: Some(reader),
        })
    }
}

impl Drop for CameraReceiver {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(r) = self.reader.take() {
            let _ = r.join();
        }
    }
}

/// Binds a local UDP socket suitable as the server's sensor target.
pub fn bind_sensor_socket() -> io::Result<UdpSocket> {
    UdpSocket::bind("127.0.0.1:0")
}

pub struct Client {
    control: BufReader<TcpStream>,
    control_out: TcpStream,
    action: UdpSocket,
    action_addr: SocketAddr,
    sensor: UdpSocket,
    next_seq: u32,
    latest_sensor: Option<SensorMessage>,
    camera: Option<CameraReceiver>,
    vision_only: bool,
    timeout: Duration,
}

impl Client {
    /// Connects to a server whose sensor stream targets `sensor`.
    pub fn connect(addrs: ServerAddrs, sensor: UdpSocket, with_camera: bool, timeout: Duration) -> Result<Self, ClientError> {
        let tcp = |what, addr| {
            TcpStream::connect_timeout(&addr, timeout).map_err(|source| ClientError::Connect { what, addr, source })
        };
        let control_out = tcp("control channel", addrs.control)?;
        control_out.set_read_timeout(Some(timeout))?;
        control_out.set_nodelay(true)?;
        let control = BufReader::new(control_out.try_clone()?);
        let local = if addrs.action.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
        let action = UdpSocket::bind(local)?;
        sensor.set_read_timeout(Some(Duration::from_millis(20)))?;
        let mut client = Client {
            control,
            control_out,
            action,
            action_addr: addrs.action,
            sensor,
            next_seq: 1,
            latest_sensor: None,
            camera: None,
            vision_only: false,
            timeout,
        };
        if with_camera {
            let before = client.camera_subscribers()?;
            client.camera = Some(CameraReceiver::start(tcp("camera stream", addrs.camera)?)?);
            // Frames published before the server registers us would be missed.
            let deadline = Instant::now() + timeout;
            while client.camera_subscribers()? <= before {
                if Instant::now() >= deadline {
                    return Err(ClientError::Timeout("camera subscription"));
                }
                thread::sleep(Duration::from_millis(2));
            }
        }
        Ok(client)
    }

    fn camera_subscribers(&mut self) -> Result<u64, ClientError> {
        let s = self.get_state()?;
        s["camera_subscribers"].as_u64().ok_or_else(|| ClientError::Reply("missing camera_subscribers".into()))
    }

    /// Sends one request and returns the reply, which may be an error reply.
    pub fn request_raw(&mut self, request: &Request) -> Result<Value, ClientError> {
        self.control_out.write_all(request.to_line().as_bytes())?;
        let mut line = String::new();
        if self.control.read_line(&mut line)? == 0 {
            return Err(ClientError::Reply("control channel closed".into()));
        }
        serde_json::from_str(&line).map_err(|e| ClientError::Reply(e.to_string()))
    }

    pub fn request(&mut self, request: &Request) -> Result<Value, ClientError> {
        let reply = self.request_raw(request)?;
        if is_ok(&reply) {
            return Ok(reply);
        }
        let field = |k: &str| reply[k].as_str().unwrap_or_default().to_string();
        let cmd = serde_json::to_value(request).ok().and_then(|v| v["cmd"].as_str().map(String::from));
        Err(ClientError::Rejected {
            cmd: cmd.unwrap_or_default(),
            reason: field("reason"),
            detail: field("detail"),
        })
    }

    pub fn get_state(&mut self) -> Result<Value, ClientError> {
        self.request(&Request::GetState)
    }

    pub fn set_track(&mut self, name: &str) -> Result<Value, ClientError> {
        self.request(&Request::SetTrack { name: name.into() })
    }

    pub fn set_mode(&mut self, vision_only: bool) -> Result<Value, ClientError> {
        let r = self.request(&Request::SetMode { vision_only })?;
        self.vision_only = vision_only;
        Ok(r)
    }

    pub fn shutdown(&mut self) -> Result<Value, ClientError> {
        self.request(&Request::Shutdown)
    }

    pub fn get_log(&mut self) -> Result<TrajectoryLog, ClientError> {
        let mut reply = self.request(&Request::GetLog)?;
        serde_json::from_value(reply["log"].take()).map_err(|e| ClientError::Reply(e.to_string()))
    }

    pub fn reset(&mut self, config: Option<EpisodeConfig>) -> Result<Observation, ClientError> {
        let reply = self.request(&Request::Reset { config })?;
        self.observation_after(&reply)
    }

    pub fn set_pose(&mut self, s: f64, d: f64) -> Result<Observation, ClientError> {
        let reply = self.request(&Request::SetPose { s, d })?;
        self.observation_after(&reply)
    }

    /// Sends an action datagram and returns its sequence number.
    pub fn send_action(&mut self, command: ActionCommand) -> Result<u32, ClientError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.send_raw(&ActionMessage { seq, command }.encode())?;
        Ok(seq)
    }

    /// Sends arbitrary bytes to the action port.
    pub fn send_raw(&self, datagram: &[u8]) -> Result<(), ClientError> {
        self.action.send_to(datagram, self.action_addr)?;
        Ok(())
    }

    /// Lockstep step: send the action, have the server apply it, and wait
    /// for the resulting observation.
    pub fn step(&mut self, command: ActionCommand) -> Result<RemoteStep, ClientError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        let datagram = ActionMessage { seq, command }.encode();
        let mut attempts = 0;
        let reply = loop {
            self.send_raw(&datagram)?;
            match self.request(&Request::Step { seq: Some(seq) }) {
                Err(e) if e.reason() == Some("action_timeout") && attempts < 3 => attempts += 1,
                other => break other?,
            }
        };
        let observation = self.observation_after(&reply)?;
        let info = serde_json::from_value(reply["info"].clone()).map_err(|e| ClientError::Reply(e.to_string()))?;
        Ok(RemoteStep {
            observation,
            reward: reply["reward"].as_f64().unwrap_or(f64::NAN),
            done: reply["done"].as_bool().unwrap_or(true),
            info,
        })
    }

    fn observation_after(&mut self, reply: &Value) -> Result<Observation, ClientError> {
        let seq = |k: &str| reply[k].as_u64().unwrap_or(0);
        let (sensor_seq, frame_seq) = (seq("sensor_seq"), seq("frame_seq"));
        let multimodal = if self.vision_only {
            [0.0; OBS_DIM]
        } else {
            self.wait_sensor(sensor_seq as u32)?.multimodal
        };
        let image = match (&self.camera, frame_seq) {
            (Some(_), 1..) => Some(self.wait_frame(frame_seq)?.image),
            _ => None,
        };
        let sim_time = reply["sim_time"]
            .as_f64()
            .or_else(|| reply["info"]["sim_time"].as_f64())
            .unwrap_or(0.0);
        Ok(Observation {
            multimodal,
            image,
            sim_time,
        })
    }

    /// Reads sensor datagrams until one with `seq >= min_seq` arrives.
    pub fn wait_sensor(&mut self, min_seq: u32) -> Result<SensorMessage, ClientError> {
        let deadline = Instant::now() + self.timeout;
        let mut buf = [0u8; 512];
        loop {
            if let Some(m) = self.latest_sensor.filter(|m| m.seq >= min_seq) {
                return Ok(m);
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Timeout("sensor datagram"));
            }
            match self.sensor.recv_from(&mut buf) {
                Ok((n, _)) => {
                    if let Ok(m) = SensorMessage::decode(&buf[..n]) {
                        if self.latest_sensor.is_none_or(|l| m.seq > l.seq) {
                            self.latest_sensor = Some(m);
                        }
                    }
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn latest_sensor(&self) -> Option<SensorMessage> {
        self.latest_sensor
    }

    pub fn wait_frame(&self, min_seq: u64) -> Result<CameraFrame, ClientError> {
        let cam = self.camera.as_ref().ok_or(ClientError::Timeout("camera (not connected)"))?;
        cam.frames
            .wait_for(min_seq, self.timeout)
            .map(|s| s.value)
            .ok_or(ClientError::Timeout("camera frame"))
    }

    /// Frames read from the camera stream so far.
    pub fn frames_received(&self) -> u64 {
        self.camera.as_ref().map_or(0, |c| c.received.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOutcome {
    pub log: TrajectoryLog,
    pub total_reward: f64,
    pub steps: u64,
    pub agent_error: Option<AgentError>,
}

/// Drives `agent` through one lockstep episode on the server.
pub fn run_remote_episode(
    client: &mut Client,
    agent: &mut dyn Agent,
    config: Option<EpisodeConfig>,
) -> Result<RemoteOutcome, ClientError> {
    let mut obs = client.reset(config)?;
    agent.reset();
    let mut total_reward = 0.0;
    let mut steps = 0;
    let mut agent_error = None;
    loop {
        let action = match agent.act(&obs) {
            Ok(a) => a,
            Err(e) => {
                agent_error = Some(e);
                break;
            }
        };
        let r = client.step(action)?;
        total_reward += r.reward;
        steps += 1;
        obs = r.observation;
        if r.done {
            break;
        }
    }
    Ok(RemoteOutcome {
        log: client.get_log()?,
        total_reward,
        steps,
        agent_error,
    })
}

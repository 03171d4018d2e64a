//! Socket server: one task per channel plus the step loop.
//!
//! Actions arrive as UDP datagrams into a latest-value register and are
//! held (zero-order) until a newer one arrives. Sensor datagrams and camera
//! frames are scheduled on the episode clock (simulated time in `fast` and
//! `lockstep`, wall time in `realtime`); each due period publishes the most
//! recent observation once.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use l2r_core::observation::Observation;
use l2r_core::sim::{EpisodeConfig, SimError, Simulator};
use l2r_core::trajectory::TrajectoryLog;
use l2r_core::vehicle::ActionCommand;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::control::{error_reply, ok_reply, parse_request, Request, NOT_INITIALIZED};
use crate::register::LatestValueRegister;
use crate::wire::{ActionMessage, CameraFrame, SensorMessage, SENSOR_LEN};

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pacing {
    /// Steps every `dt_env` of wall time.
    #[default]
    Realtime,
    /// Steps as fast as possible.
    Fast,
    /// Steps only on a `step` control command.
    Lockstep,
}

impl Pacing {
    pub fn as_str(self) -> &'static str {
        match self {
            Pacing::Realtime => "realtime",
            Pacing::Fast => "fast",
            Pacing::Lockstep => "lockstep",
        }
    }
}

impl FromStr for Pacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(Pacing::Realtime),
            "fast" => Ok(Pacing::Fast),
            "lockstep" => Ok(Pacing::Lockstep),
            _ => Err(format!("unknown pacing mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    /// Interface the server binds on.
    pub host: String,
    pub action_port: u16,
    /// Where sensor datagrams are sent. Port 0 disables the sensor stream.
    pub sensor_host: String,
    pub sensor_port: u16,
    pub camera_port: u16,
    pub control_port: u16,
    pub sensor_rate_hz: f64,
    pub camera_rate_hz: f64,
    pub pacing: Pacing,
    /// Start the configured episode without waiting for a reset.
    pub autostart: bool,
    /// How long a lockstep step waits for its action datagram and for
    /// camera subscribers to take pending frames.
    pub step_timeout_ms: u64,
    pub episode: EpisodeConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            action_port: 7001,
            sensor_host: "127.0.0.1".into(),
            sensor_port: 7002,
            camera_port: 7003,
            control_port: 7004,
            sensor_rate_hz: 100.0,
            camera_rate_hz: 20.0,
            pacing: Pacing::Realtime,
            autostart: false,
            step_timeout_ms: 2000,
            episode: EpisodeConfig::default(),
        }
    }
}

impl ServerConfig {
    /// Ephemeral ports everywhere and no sensor target; handy for tests.
    pub fn ephemeral(pacing: Pacing, episode: EpisodeConfig) -> Self {
        ServerConfig {
            action_port: 0,
            sensor_port: 0,
            camera_port: 0,
            control_port: 0,
            pacing,
            episode,
            ..ServerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        let invalid = |m: String| Err(ServerError::InvalidConfig(m));
        let ports = [self.action_port, self.sensor_port, self.camera_port, self.control_port];
        for (i, a) in ports.iter().enumerate() {
            if *a != 0 && ports[i + 1..].contains(a) {
                return invalid(format!("port {a} used twice"));
            }
        }
        for (name, r) in [("sensor", self.sensor_rate_hz), ("camera", self.camera_rate_hz)] {
            if !(r.is_finite() && r > 0.0) {
                return invalid(format!("{name} rate must be positive, got {r}"));
            }
        }
        if self.camera_rate_hz > self.sensor_rate_hz {
            return invalid("camera rate exceeds sensor rate".into());
        }
        self.episode.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid server config: {0}")]
    InvalidConfig(String),
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Default)]
pub struct ServerStats {
    pub actions_received: AtomicU64,
    /// Malformed action datagrams.
    pub actions_dropped: AtomicU64,
    /// Well-formed action datagrams older than the held one.
    pub actions_stale: AtomicU64,
    pub sensors_sent: AtomicU64,
    pub frames_sent: AtomicU64,
    pub frames_dropped: AtomicU64,
    pub steps: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub actions_received: u64,
    pub actions_dropped: u64,
    pub actions_stale: u64,
    pub sensors_sent: u64,
    pub frames_sent: u64,
    pub frames_dropped: u64,
    pub steps: u64,
}

impl ServerStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let g = |a: &AtomicU64| a.load(Ordering::SeqCst);
        StatsSnapshot {
            actions_received: g(&self.actions_received),
            actions_dropped: g(&self.actions_dropped),
            actions_stale: g(&self.actions_stale),
            sensors_sent: g(&self.sensors_sent),
            frames_sent: g(&self.frames_sent),
            frames_dropped: g(&self.frames_dropped),
            steps: g(&self.steps),
        }
    }
}

fn bump(a: &AtomicU64) {
    a.fetch_add(1, Ordering::SeqCst);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerAddrs {
    pub action: SocketAddr,
    pub camera: SocketAddr,
    pub control: SocketAddr,
}

/// One camera connection: a single pending frame slot drained by a writer.
struct Subscriber {
    slot: Mutex<Option<Arc<Vec<u8>>>>,
    changed: Condvar,
    alive: AtomicBool,
}

#[derive(Default)]
struct CameraHub {
    subs: Mutex<Vec<Arc<Subscriber>>>,
}

impl CameraHub {
    fn count(&self) -> usize {
        let mut subs = self.subs.lock().unwrap();
        subs.retain(|s| s.alive.load(Ordering::SeqCst));
        subs.len()
    }

    /// Hands `frame` to every subscriber. With `wait`, blocks up to that long
    /// for each slot to empty; otherwise an untaken frame is replaced.
    fn publish(&self, frame: Arc<Vec<u8>>, wait: Option<Duration>, stats: &ServerStats) {
        let subs: Vec<_> = self.subs.lock().unwrap().clone();
        for s in subs {
            if !s.alive.load(Ordering::SeqCst) {
                continue;
            }
            let mut slot = s.slot.lock().unwrap();
            if let Some(w) = wait {
                let deadline = Instant::now() + w;
                while slot.is_some() && s.alive.load(Ordering::SeqCst) {
                    let now = Instant::now();
                    if now >= deadline {
                        break;
                    }
                    slot = s.changed.wait_timeout(slot, deadline - now).unwrap().0;
                }
            }
            if slot.is_some() {
                bump(&stats.frames_dropped);
            }
            *slot = Some(frame.clone());
            s.changed.notify_all();
        }
    }
}

fn camera_writer(mut stream: TcpStream, sub: Arc<Subscriber>, stop: Arc<AtomicBool>, stats: Arc<ServerStats>) {
    loop {
        let frame = {
            let mut slot = sub.slot.lock().unwrap();
            loop {
                if stop.load(Ordering::SeqCst) {
                    sub.alive.store(false, Ordering::SeqCst);
                    return;
                }
                if let Some(f) = slot.take() {
                    sub.changed.notify_all();
                    break f;
                }
                slot = sub.changed.wait_timeout(slot, POLL).unwrap().0;
            }
        };
        if stream.write_all(&frame).is_err() {
            sub.alive.store(false, Ordering::SeqCst);
            sub.changed.notify_all();
            return;
        }
        bump(&stats.frames_sent);
    }
}

struct Envelope {
    request: Request,
    reply: Sender<Value>,
}

fn control_session(stream: TcpStream, tx: Sender<Envelope>, stop: Arc<AtomicBool>) {
    if stream.set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let Ok(read_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(read_half);
    let mut out = stream;
    let mut buf = Vec::new();
    loop {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => return,
            Ok(_) => {
                let line = String::from_utf8_lossy(&buf).trim().to_string();
                buf.clear();
                if line.is_empty() {
                    continue;
                }
                let reply = match parse_request(&line) {
                    Ok(request) => {
                        let (rtx, rrx) = mpsc::channel();
                        if tx.send(Envelope { request, reply: rtx }).is_err() {
                            return;
                        }
                        match rrx.recv() {
                            Ok(v) => v,
                            Err(_) => return,
                        }
                    }
                    Err(e) => e,
                };
                let mut text = reply.to_string();
                text.push('\n');
                if out.write_all(text.as_bytes()).is_err() {
                    return;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, mut on_conn: impl FnMut(TcpStream)) {
    if let Err(e) = listener.set_nonblocking(true) {
        log::error!("listener setup failed: {e}");
        return;
    }
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((s, peer)) => {
                log::debug!("connection from {peer}");
                if s.set_nonblocking(false).is_ok() {
                    let _ = s.set_nodelay(true);
                    on_conn(s);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn action_ingest(socket: UdpSocket, actions: Arc<LatestValueRegister<ActionCommand>>, stop: Arc<AtomicBool>, stats: Arc<ServerStats>) {
    let mut buf = [0u8; 64];
    while !stop.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => match ActionMessage::decode(&buf[..n]) {
                Ok(m) => {
                    bump(&stats.actions_received);
                    if !actions.offer(m.seq as u64, m.command) {
                        bump(&stats.actions_stale);
                    }
                }
                Err(e) => {
                    bump(&stats.actions_dropped);
                    log::debug!("dropped action datagram: {e}");
                }
            },
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => log::debug!("action socket: {e}"),
        }
    }
}

fn sensor_publisher(
    socket: UdpSocket,
    target: Option<SocketAddr>,
    rx: Receiver<[u8; SENSOR_LEN]>,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
) {
    while !stop.load(Ordering::SeqCst) {
        match rx.recv_timeout(POLL) {
            Ok(datagram) => {
                if let Some(t) = target {
                    match socket.send_to(&datagram, t) {
                        Ok(_) => bump(&stats.sensors_sent),
                        Err(e) => log::debug!("sensor send: {e}"),
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

struct Engine {
    cfg: ServerConfig,
    sim: Simulator,
    initialized: bool,
    vision_only: bool,
    actions: Arc<LatestValueRegister<ActionCommand>>,
    /// Register sequence at the last reset; older actions are not held over.
    hold_floor: u64,
    sensor_tx: Sender<[u8; SENSOR_LEN]>,
    sensor_seq: u32,
    sensor_periods: u64,
    hub: Arc<CameraHub>,
    frame_seq: u32,
    camera_periods: u64,
    last_obs: Option<Observation>,
    episode_start: Instant,
    stats: Arc<ServerStats>,
    finished: SyncSender<TrajectoryLog>,
}

impl Engine {
    fn done(&self) -> bool {
        self.sim.state().is_none_or(|s| s.done)
    }

    fn running(&self) -> bool {
        self.initialized && !self.done()
    }

    fn step_timeout(&self) -> Duration {
        Duration::from_millis(self.cfg.step_timeout_ms)
    }

    fn publish_sensor(&mut self) {
        let Some(obs) = &self.last_obs else { return };
        if self.vision_only {
            return;
        }
        self.sensor_seq = self.sensor_seq.wrapping_add(1);
        let _ = self.sensor_tx.send(SensorMessage::from_observation(self.sensor_seq, obs).encode());
    }

    fn publish_frame(&mut self) {
        let Some(image) = self.last_obs.as_ref().and_then(|o| o.image.clone()) else {
            return;
        };
        self.frame_seq = self.frame_seq.wrapping_add(1);
        let frame = CameraFrame {
            seq: self.frame_seq,
            sim_time: self.last_obs.as_ref().unwrap().sim_time,
            image,
        };
        let wait = (self.cfg.pacing == Pacing::Lockstep).then(|| self.step_timeout());
        self.hub.publish(Arc::new(frame.encode()), wait, &self.stats);
    }

    /// Publishes once per sensor and camera period elapsed up to `clock`.
    fn publish_due(&mut self, clock: f64) {
        let due = |rate: f64| (clock * rate + 1e-9).floor() as u64;
        let sensor_due = due(self.cfg.sensor_rate_hz);
        while self.sensor_periods < sensor_due {
            self.sensor_periods += 1;
            self.publish_sensor();
        }
        let camera_due = due(self.cfg.camera_rate_hz);
        while self.camera_periods < camera_due {
            self.camera_periods += 1;
            self.publish_frame();
        }
    }

    fn begin_episode(&mut self, obs: Observation) {
        if self.running() {
            log::info!("episode aborted at step {}", self.sim.state().map_or(0, |s| s.step_count));
        }
        self.initialized = true;
        self.hold_floor = self.actions.seq();
        self.last_obs = Some(obs);
        self.sensor_periods = 0;
        self.camera_periods = 0;
        self.episode_start = Instant::now();
        self.publish_sensor();
        self.publish_frame();
        self.report_if_finished();
    }

    fn current_action(&self) -> ActionCommand {
        self.actions
            .latest()
            .filter(|s| s.seq > self.hold_floor)
            .map_or(ActionCommand::zero(), |s| s.value)
    }

    fn report_if_finished(&self) {
        if self.done() {
            let _ = self.finished.try_send(self.sim.trajectory_log());
        }
    }

    fn do_step(&mut self) -> Result<Value, SimError> {
        let r = self.sim.step(self.current_action())?;
        bump(&self.stats.steps);
        self.last_obs = Some(r.observation);
        if self.cfg.pacing != Pacing::Realtime {
            self.publish_due(r.info.sim_time);
        }
        if r.done {
            log::info!("episode finished: {}", r.info.termination_reason.as_str());
            self.report_if_finished();
        }
        Ok(json!({
            "reward": r.reward,
            "done": r.done,
            "info": r.info,
            "sensor_seq": self.sensor_seq,
            "frame_seq": self.frame_seq,
        }))
    }

    fn state_reply(&self) -> Value {
        let common = json!({
            "initialized": self.initialized,
            "track": self.sim.config().track,
            "pacing": self.cfg.pacing.as_str(),
            "vision_only": self.vision_only,
            "sensor_seq": self.sensor_seq,
            "frame_seq": self.frame_seq,
            "camera_subscribers": self.hub.count(),
            "stats": self.stats.snapshot(),
        });
        let specific = match (self.initialized, self.sim.state()) {
            (true, Some(s)) => json!({
                "done": s.done,
                "reason": s.termination_reason.as_str(),
                "sim_time": s.sim_time,
                "step": s.step_count,
                "laps_done": s.laps_done,
                "progress": s.unwrapped_progress,
                "lateral_offset": s.lateral_offset,
                "wheels_out": s.wheels_out,
                "pose": {"x": s.vehicle.x, "y": s.vehicle.y, "v": s.vehicle.v, "yaw": s.vehicle.yaw},
            }),
            _ => json!({"done": true, "reason": NOT_INITIALIZED}),
        };
        let mut v = ok_reply(common);
        if let (Value::Object(dst), Value::Object(src)) = (&mut v, specific) {
            dst.extend(src);
        }
        v
    }

    fn episode_reply(&self) -> Value {
        ok_reply(json!({
            "sim_time": self.last_obs.as_ref().map_or(0.0, |o| o.sim_time),
            "sensor_seq": self.sensor_seq,
            "frame_seq": self.frame_seq,
            "done": self.done(),
            "config_hash": self.sim.config().hash(),
        }))
    }

    /// Returns the reply and whether the server should stop.
    fn handle(&mut self, request: Request) -> (Value, bool) {
        let reply = match request {
            Request::Reset { config } => {
                let result = match config {
                    Some(c) => self.sim.reset_with(c),
                    None => self.sim.reset(),
                };
                match result {
                    Ok(obs) => {
                        self.begin_episode(obs);
                        self.episode_reply()
                    }
                    Err(e) => sim_error(e),
                }
            }
            Request::SetTrack { name } => {
                let config = EpisodeConfig {
                    track: name,
                    ..self.sim.config().clone()
                };
                match config.load_track() {
                    Ok(track) => {
                        let restart = self.initialized;
                        self.sim = Simulator::with_track(config, track);
                        if restart {
                            match self.sim.reset() {
                                Ok(obs) => self.begin_episode(obs),
                                Err(e) => return (sim_error(e), false),
                            }
                        } else {
                            self.last_obs = None;
                        }
                        ok_reply(json!({"track": self.sim.config().track}))
                    }
                    Err(e) => error_reply("unknown_track", e),
                }
            }
            Request::SetPose { s, d } => {
                if !self.initialized {
                    error_reply("not_initialized", "reset first")
                } else {
                    match self.sim.set_pose(s, d) {
                        Ok(obs) => {
                            self.begin_episode(obs);
                            self.episode_reply()
                        }
                        Err(e) => sim_error(e),
                    }
                }
            }
            Request::SetMode { vision_only } => {
                if vision_only && !self.sim.config().camera.enabled {
                    error_reply("camera_disabled", "vision-only mode needs the camera enabled")
                } else {
                    self.vision_only = vision_only;
                    ok_reply(json!({"vision_only": vision_only}))
                }
            }
            Request::GetState => self.state_reply(),
            Request::Step { seq } => {
                if self.cfg.pacing != Pacing::Lockstep {
                    error_reply("not_lockstep", self.cfg.pacing.as_str())
                } else if !self.initialized {
                    error_reply("not_initialized", "reset first")
                } else if self.done() {
                    error_reply("episode_finished", self.sim.state().unwrap().termination_reason.as_str())
                } else if seq.is_some_and(|q| self.actions.wait_for(q as u64, self.step_timeout()).is_none()) {
                    error_reply("action_timeout", format!("no action datagram with seq >= {}", seq.unwrap()))
                } else {
                    match self.do_step() {
                        Ok(v) => ok_reply(v),
                        Err(e) => sim_error(e),
                    }
                }
            }
            Request::GetLog => {
                if self.initialized {
                    ok_reply(json!({"log": self.sim.trajectory_log()}))
                } else {
                    error_reply("not_initialized", "no episode has been run")
                }
            }
            Request::Shutdown => return (ok_reply(json!({})), true),
        };
        (reply, false)
    }

    fn run(mut self, rx: Receiver<Envelope>, stop: Arc<AtomicBool>) {
        if self.cfg.autostart {
            match self.sim.reset() {
                Ok(obs) => self.begin_episode(obs),
                Err(e) => log::error!("autostart failed: {e}"),
            }
        }
        while !stop.load(Ordering::SeqCst) {
            let running = self.running();
            let wait = match (self.cfg.pacing, running) {
                (Pacing::Fast, true) => Duration::ZERO,
                (Pacing::Realtime, true) => self.realtime_wait(),
                _ => POLL,
            };
            let received = if wait.is_zero() {
                rx.try_recv().map_err(|e| match e {
                    mpsc::TryRecvError::Empty => RecvTimeoutError::Timeout,
                    mpsc::TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
                })
            } else {
                rx.recv_timeout(wait)
            };
            match received {
                Ok(env) => {
                    let (reply, quit) = self.handle(env.request);
                    let _ = env.reply.send(reply);
                    if quit {
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                    continue;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            if !self.running() {
                continue;
            }
            match self.cfg.pacing {
                Pacing::Fast => {
                    if let Err(e) = self.do_step() {
                        log::error!("step failed: {e}");
                    }
                }
                Pacing::Realtime => {
                    let elapsed = self.episode_start.elapsed().as_secs_f64();
                    let steps = self.sim.state().map_or(0, |s| s.step_count);
                    if elapsed >= (steps + 1) as f64 * self.sim.config().dt_env {
                        if let Err(e) = self.do_step() {
                            log::error!("step failed: {e}");
                        }
                    }
                    self.publish_due(elapsed);
                }
                Pacing::Lockstep => {}
            }
        }
        stop.store(true, Ordering::SeqCst);
    }

    /// Wall time until the next step or publication is due.
    fn realtime_wait(&self) -> Duration {
        let steps = self.sim.state().map_or(0, |s| s.step_count);
        let next = [
            (steps + 1) as f64 * self.sim.config().dt_env,
            (self.sensor_periods + 1) as f64 / self.cfg.sensor_rate_hz,
            (self.camera_periods + 1) as f64 / self.cfg.camera_rate_hz,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        let remaining = next - self.episode_start.elapsed().as_secs_f64();
        // A zero wait would mean try_recv; keep at least a tick.
        Duration::from_secs_f64(remaining.clamp(1e-4, POLL.as_secs_f64()))
    }
}

fn sim_error(e: SimError) -> Value {
    let reason = match e {
        SimError::Track(_) => "unknown_track",
        SimError::InvalidConfig(_) | SimError::Vehicle(_) | SimError::Malformed(_) => "invalid_config",
        SimError::NotReset => "not_initialized",
        SimError::EpisodeFinished(_) => "episode_finished",
    };
    error_reply(reason, e)
}

/// A running server. Dropping the handle shuts it down.
pub struct ServerHandle {
    addrs: ServerAddrs,
    stats: Arc<ServerStats>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    finished: Receiver<TrajectoryLog>,
}

impl ServerHandle {
    pub fn addrs(&self) -> ServerAddrs {
        self.addrs
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn is_running(&self) -> bool {
        !self.stop.load(Ordering::SeqCst)
    }

    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Log of the next episode to finish, if one does within `timeout`.
    pub fn next_finished_episode(&self, timeout: Duration) -> Option<TrajectoryLog> {
        self.finished.recv_timeout(timeout).ok()
    }

    /// Waits until the server stops (for example via a `shutdown` command).
    pub fn join(mut self) {
        self.join_threads();
    }

    fn join_threads(&mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
        self.join_threads();
    }
}

fn bind_udp(host: &str, port: u16, what: &'static str) -> Result<UdpSocket, ServerError> {
    let addr = format!("{host}:{port}");
    UdpSocket::bind(&addr).map_err(|source| ServerError::Bind { what, addr, source })
}

fn bind_tcp(host: &str, port: u16, what: &'static str) -> Result<TcpListener, ServerError> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).map_err(|source| ServerError::Bind { what, addr, source })
}

/// Binds all channels and starts the server threads.
pub fn start(config: ServerConfig) -> Result<ServerHandle, ServerError> {
    config.validate()?;
    let sim = Simulator::new(config.episode.clone())?;

    let action_socket = bind_udp(&config.host, config.action_port, "action socket")?;
    action_socket.set_read_timeout(Some(POLL))?;
    let sensor_socket = bind_udp(&config.host, 0, "sensor socket")?;
    let sensor_target = if config.sensor_port == 0 {
        None
    } else {
        let addr = format!("{}:{}", config.sensor_host, config.sensor_port);
        let resolved = addr.to_socket_addrs()?.next();
        if resolved.is_none() {
            return Err(ServerError::InvalidConfig(format!("cannot resolve sensor target {addr}")));
        }
        resolved
    };
    let camera_listener = bind_tcp(&config.host, config.camera_port, "camera listener")?;
    let control_listener = bind_tcp(&config.host, config.control_port, "control listener")?;
    let addrs = ServerAddrs {
        action: action_socket.local_addr()?,
        camera: camera_listener.local_addr()?,
        control: control_listener.local_addr()?,
    };

    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(ServerStats::default());
    let actions = Arc::new(LatestValueRegister::new());
    let hub = Arc::new(CameraHub::default());
    let (sensor_tx, sensor_rx) = mpsc::channel();
    let (cmd_tx, cmd_rx) = mpsc::channel::<Envelope>();
    let (finished_tx, finished_rx) = mpsc::sync_channel(64);
    let mut threads = Vec::new();

    {
        let (actions, stop, stats) = (actions.clone(), stop.clone(), stats.clone());
        threads.push(thread::spawn(move || action_ingest(action_socket, actions, stop, stats)));
    }
    {
        let (stop, stats) = (stop.clone(), stats.clone());
        threads.push(thread::spawn(move || sensor_publisher(sensor_socket, sensor_target, sensor_rx, stop, stats)));
    }
    {
        let (hub, stop, stats) = (hub.clone(), stop.clone(), stats.clone());
        threads.push(thread::spawn(move || {
            let conn_stop = stop.clone();
            accept_loop(camera_listener, stop, move |stream| {
                let sub = Arc::new(Subscriber {
                    slot: Mutex::new(None),
                    changed: Condvar::new(),
                    alive: AtomicBool::new(true),
                });
                hub.subs.lock().unwrap().push(sub.clone());
                let (stop, stats) = (conn_stop.clone(), stats.clone());
                thread::spawn(move || camera_writer(stream, sub, stop, stats));
            })
        }));
    }
    {
        let stop = stop.clone();
        threads.push(thread::spawn(move || {
            let conn_stop = stop.clone();
            accept_loop(control_listener, stop, move |stream| {
                let (tx, stop) = (cmd_tx.clone(), conn_stop.clone());
                thread::spawn(move || control_session(stream, tx, stop));
            })
        }));
    }
    let engine = Engine {
        cfg: config,
        sim,
        initialized: false,
        vision_only: false,
        actions,
        hold_floor: 0,
        sensor_tx,
        sensor_seq: 0,
        sensor_periods: 0,
        hub,
        frame_seq: 0,
        camera_periods: 0,
        last_obs: None,
        episode_start: Instant::now(),
        stats: stats.clone(),
        finished: finished_tx,
    };
    {
        let stop = stop.clone();
        threads.push(thread::spawn(move || engine.run(cmd_rx, stop)));
    }
    log::info!("serving: action {} camera {} control {}", addrs.action, addrs.camera, addrs.control);
    Ok(ServerHandle {
        addrs,
        stats,
        stop,
        threads,
        finished: finished_rx,
    })
}

/// Runs a server until it is shut down over the control channel.
pub fn serve(config: ServerConfig) -> Result<(), ServerError> {
    start(config)?.join();
    Ok(())
}

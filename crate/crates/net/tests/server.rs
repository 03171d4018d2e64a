use std::io::Read;
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use l2r_core::camera::CameraConfig;
use l2r_core::control::{MpcAgent, MpcConfig};
use l2r_core::episode::run_episode_with;
use l2r_core::observation::slot;
use l2r_core::sim::{EpisodeConfig, Simulator};
use l2r_core::trajectory::TerminationReason;
use l2r_core::vehicle::ActionCommand;
use l2r_net::control::NOT_INITIALIZED;
use l2r_net::{bind_sensor_socket, run_remote_episode, start, Client, Pacing, Request, ServerConfig, ServerHandle};
use serde_json::Value;

const TIMEOUT: Duration = Duration::from_secs(10);

fn launch(pacing: Pacing, episode: EpisodeConfig, camera: bool) -> (ServerHandle, Client) {
    launch_with(ServerConfig::ephemeral(pacing, episode), camera)
}

fn launch_with(mut config: ServerConfig, camera: bool) -> (ServerHandle, Client) {
    let sensor = bind_sensor_socket().unwrap();
    config.sensor_port = sensor.local_addr().unwrap().port();
    let server = start(config).unwrap();
    let client = Client::connect(server.addrs(), sensor, camera, TIMEOUT).unwrap();
    (server, client)
}

fn small_camera() -> CameraConfig {
    CameraConfig {
        enabled: true,
        width: 32,
        height: 24,
        window: 30.0,
    }
}

fn wait_until(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + TIMEOUT;
    while !cond() {
        assert!(Instant::now() < deadline, "condition not reached");
        thread::sleep(Duration::from_millis(2));
    }
}

/// First `n` actions an in-process MPC agent takes on the oval.
fn scripted_actions(n: usize) -> Vec<ActionCommand> {
    let mut sim = Simulator::new(EpisodeConfig {
        laps_required: 2,
        ..EpisodeConfig::default()
    })
    .unwrap();
    let mut agent = MpcAgent::new(MpcConfig::matched(), sim.track().clone()).unwrap();
    let mut actions = Vec::new();
    run_episode_with(&mut sim, &mut agent, |_, a| actions.push(*a)).unwrap();
    assert!(actions.len() >= n);
    actions.truncate(n);
    actions
}

#[test]
fn state_before_reset() {
    let (_server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    let s = client.get_state().unwrap();
    assert_eq!(s["status"], "ok");
    assert_eq!(s["done"], true);
    assert_eq!(s["reason"], NOT_INITIALIZED);
    assert_eq!(client.get_log().unwrap_err().reason(), Some("not_initialized"));
}

#[test]
fn malformed_and_unknown_commands_get_error_replies() {
    let (_server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    let mut raw = TcpStream::connect(_server.addrs().control).unwrap();
    use std::io::{BufRead, BufReader, Write};
    let mut reader = BufReader::new(raw.try_clone().unwrap());
    for (line, reason) in [
        ("{\"cmd\":\"warp\"}\n", "unknown_cmd"),
        ("not json at all\n", "malformed"),
        ("{\"cmd\":\"set_pose\",\"s\":\"far\"}\n", "malformed"),
    ] {
        raw.write_all(line.as_bytes()).unwrap();
        let mut reply = String::new();
        reader.read_line(&mut reply).unwrap();
        let v: Value = serde_json::from_str(&reply).unwrap();
        assert_eq!(v["status"], "error");
        assert_eq!(v["reason"], reason);
    }
    // The server keeps serving both connections.
    assert_eq!(client.get_state().unwrap()["status"], "ok");
}

#[test]
fn unknown_track_leaves_state_unchanged() {
    let (_server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    let before = client.get_state().unwrap();
    let err = client.set_track("atlantis").unwrap_err();
    assert_eq!(err.reason(), Some("unknown_track"));
    let after = client.get_state().unwrap();
    for k in ["track", "sim_time", "step", "pose", "progress", "done"] {
        assert_eq!(before[k], after[k], "{k}");
    }
}

#[test]
fn set_track_switches_map_and_respawns() {
    let (_server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    client.set_track("s-curve").unwrap();
    let s = client.get_state().unwrap();
    assert_eq!(s["track"], "s-curve");
    assert_eq!(s["step"], 0);
}

#[test]
fn lockstep_matches_in_process_bit_exactly() {
    let actions = scripted_actions(500);
    let config = EpisodeConfig {
        laps_required: 2,
        ..EpisodeConfig::default()
    };

    let mut sim = Simulator::new(config.clone()).unwrap();
    let mut expected_obs = vec![sim.reset().unwrap()];
    for a in &actions {
        expected_obs.push(sim.step(*a).unwrap().observation);
    }
    let expected = sim.trajectory_log();

    let (server, mut client) = launch(Pacing::Lockstep, config, false);
    let first = client.reset(None).unwrap();
    let mut observed = vec![first];
    for a in &actions {
        let r = client.step(*a).unwrap();
        assert!(!r.done);
        observed.push(r.observation);
    }
    let log = client.get_log().unwrap();
    assert_eq!(log.samples.len(), 501);
    assert_eq!(log, expected);
    assert_eq!(log.to_json(), expected.to_json());
    for (o, e) in observed.iter().zip(&expected_obs) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&o.multimodal), bits(&e.multimodal));
    }
    let stats = server.stats();
    assert_eq!(stats.steps, 500);
    assert_eq!(stats.actions_received, 500);
    assert_eq!(stats.actions_dropped, 0);
}

#[test]
fn reset_publishes_spawn_pose() {
    let config = EpisodeConfig {
        spawn_s: 120.0,
        ..EpisodeConfig::default()
    };
    let (_server, mut client) = launch(Pacing::Lockstep, config.clone(), false);
    let reply = client.request(&Request::Reset { config: None }).unwrap();
    let seq = reply["sensor_seq"].as_u64().unwrap() as u32;
    let m = client.wait_sensor(seq).unwrap();
    assert_eq!(m.seq, seq);
    let mut sim = Simulator::new(config).unwrap();
    let obs = sim.reset().unwrap();
    assert_eq!(m.multimodal, obs.multimodal);
    assert_eq!(m.multimodal[slot::CENTER_X], obs.center()[0]);
    assert_eq!(&m.multimodal[3..6], &[0.0, 0.0, 0.0]);
}

#[test]
fn later_sequence_number_wins() {
    let (server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    let fast = ActionCommand::new(1.0, 0.2);
    let slow = ActionCommand::new(-1.0, -0.2);
    client.send_raw(&l2r_net::ActionMessage { seq: 5, command: fast }.encode()).unwrap();
    wait_until(|| server.stats().actions_received == 1);
    client.send_raw(&l2r_net::ActionMessage { seq: 3, command: slow }.encode()).unwrap();
    client.send_raw(&[0u8; 28]).unwrap();
    wait_until(|| server.stats().actions_received == 2 && server.stats().actions_dropped == 1);
    assert_eq!(server.stats().actions_stale, 1);
    client.request(&Request::Step { seq: None }).unwrap();
    let log = client.get_log().unwrap();
    assert_eq!(log.samples[1].action, fast);
}

#[test]
fn zero_order_hold_between_datagrams() {
    let (_server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    // Before any datagram the held action is zero.
    client.request(&Request::Step { seq: None }).unwrap();
    let a = ActionCommand::new(0.7, 0.1);
    let seq = client.send_action(a).unwrap();
    client.request(&Request::Step { seq: Some(seq) }).unwrap();
    client.request(&Request::Step { seq: None }).unwrap();
    let log = client.get_log().unwrap();
    assert_eq!(log.samples[1].action, ActionCommand::zero());
    assert_eq!(log.samples[2].action, a);
    assert_eq!(log.samples[3].action, a);
}

#[test]
fn lockstep_camera_frame_count() {
    let config = EpisodeConfig {
        camera: small_camera(),
        ..EpisodeConfig::default()
    };
    let (server, mut client) = launch(Pacing::Lockstep, config, true);
    let obs = client.reset(None).unwrap();
    assert_eq!(obs.image.as_ref().unwrap().data.len(), small_camera().frame_bytes());
    let n = 20;
    let mut last_seq = 1;
    for _ in 0..n {
        let r = client.step(ActionCommand::new(0.5, 0.0)).unwrap();
        assert!(r.observation.image.is_some());
        let seq = client.wait_frame(0).unwrap().seq;
        assert!(seq > last_seq);
        last_seq = seq;
    }
    // 20 Hz camera over 0.1 s steps: two frames per step plus one at reset.
    let expected = 1 + 2 * n as u64;
    wait_until(|| client.frames_received() >= expected);
    thread::sleep(Duration::from_millis(50));
    assert_eq!(client.frames_received(), expected);
    assert_eq!(last_seq as u64, expected);
    let stats = server.stats();
    assert_eq!(stats.frames_dropped, 0);
    assert_eq!(stats.frames_sent, expected);
    wait_until(|| server.stats().sensors_sent == 1 + 10 * n as u64);
}

#[test]
fn idle_server_terminates_on_insufficient_progress() {
    let config = ServerConfig {
        autostart: true,
        ..ServerConfig::ephemeral(Pacing::Fast, EpisodeConfig::default())
    };
    let server = start(config).unwrap();
    let log = server.next_finished_episode(TIMEOUT).expect("episode should finish");
    assert_eq!(log.metadata.termination_reason, TerminationReason::InsufficientProgress);
    assert_eq!(log.samples.len(), 151);
    assert!(log.samples.iter().all(|s| s.action == ActionCommand::zero()));
}

#[test]
fn slow_camera_consumer_never_blocks_the_step_loop() {
    let camera = CameraConfig {
        enabled: true,
        width: 96,
        height: 96,
        window: 40.0,
    };
    let config = EpisodeConfig {
        camera,
        ..EpisodeConfig::default()
    };
    let (server, mut client) = launch(Pacing::Fast, config, false);
    // A subscriber that never reads; its socket buffer fills within a few frames.
    let stalled = TcpStream::connect(server.addrs().camera).unwrap();
    wait_until(|| client.get_state().unwrap()["camera_subscribers"] == 1);
    client.request(&Request::Reset { config: None }).unwrap();
    let log = server.next_finished_episode(TIMEOUT).expect("episode should finish");
    assert_eq!(log.samples.len(), 151);
    let stats = server.stats();
    assert_eq!(stats.steps, 150);
    assert!(stats.frames_dropped > 0, "{stats:?}");
    drop(stalled);
}

#[test]
fn camera_frames_arrive_in_order() {
    let config = EpisodeConfig {
        camera: small_camera(),
        ..EpisodeConfig::default()
    };
    let (server, mut client) = launch(Pacing::Lockstep, config, false);
    let mut raw = TcpStream::connect(server.addrs().camera).unwrap();
    wait_until(|| client.get_state().unwrap()["camera_subscribers"] == 1);
    client.reset(None).unwrap();
    client.step(ActionCommand::zero()).unwrap();
    let a = l2r_net::CameraFrame::read_from(&mut raw).unwrap();
    let b = l2r_net::CameraFrame::read_from(&mut raw).unwrap();
    assert!(b.seq > a.seq);
    assert_eq!(a.image.width, 32);
    let mut len = [0u8; 4];
    raw.read_exact(&mut len).unwrap();
    assert_eq!(u32::from_le_bytes(len) as usize, 17 + small_camera().frame_bytes());
}

#[test]
fn step_requires_lockstep_and_a_live_episode() {
    let (_s, mut client) = launch(Pacing::Fast, EpisodeConfig::default(), false);
    assert_eq!(client.request(&Request::Step { seq: None }).unwrap_err().reason(), Some("not_lockstep"));

    let (_s, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    assert_eq!(client.request(&Request::Step { seq: None }).unwrap_err().reason(), Some("not_initialized"));
    client.reset(None).unwrap();
    for _ in 0..150 {
        client.step(ActionCommand::zero()).unwrap();
    }
    let s = client.get_state().unwrap();
    assert_eq!(s["done"], true);
    assert_eq!(s["reason"], "insufficient_progress");
    assert_eq!(client.step(ActionCommand::zero()).unwrap_err().reason(), Some("episode_finished"));
    // Reset after the end starts over.
    client.reset(None).unwrap();
    assert_eq!(client.get_state().unwrap()["done"], false);
}

#[test]
fn set_pose_and_reset_mid_episode() {
    let (_s, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    for _ in 0..5 {
        client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    }
    let obs = client.set_pose(300.0, 1.0).unwrap();
    let mut sim = Simulator::new(EpisodeConfig {
        spawn_s: 300.0,
        spawn_offset: 1.0,
        ..EpisodeConfig::default()
    })
    .unwrap();
    assert_eq!(obs.multimodal, sim.reset().unwrap().multimodal);
    let s = client.get_state().unwrap();
    assert_eq!(s["step"], 0);
    assert!((s["lateral_offset"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    client.reset(None).unwrap();
    assert_eq!(client.get_state().unwrap()["sim_time"], 0.0);
}

#[test]
fn vision_only_mode() {
    let (_s, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    assert_eq!(client.set_mode(true).unwrap_err().reason(), Some("camera_disabled"));

    let config = EpisodeConfig {
        camera: small_camera(),
        ..EpisodeConfig::default()
    };
    let (_s, mut client) = launch(Pacing::Lockstep, config, true);
    client.set_mode(true).unwrap();
    let obs = client.reset(None).unwrap();
    assert!(obs.image.is_some());
    client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    let s = client.get_state().unwrap();
    assert_eq!(s["vision_only"], true);
    assert_eq!(s["sensor_seq"], 0);
    client.set_mode(false).unwrap();
    let r = client.step(ActionCommand::new(1.0, 0.0)).unwrap();
    assert!(r.observation.speed() > 0.0);
}

#[test]
fn realtime_paces_steps_by_wall_clock() {
    let (_s, mut client) = launch(Pacing::Realtime, EpisodeConfig::default(), false);
    client.reset(None).unwrap();
    let t0 = Instant::now();
    thread::sleep(Duration::from_millis(450));
    let s = client.get_state().unwrap();
    let steps = s["step"].as_u64().unwrap();
    let wall = t0.elapsed().as_secs_f64();
    assert!(steps >= 2 && (steps as f64) <= wall / 0.1 + 1.0, "{steps} steps in {wall} s");
    // Sensors stream at ~100 Hz even though the state changes at 10 Hz.
    let seq = s["sensor_seq"].as_u64().unwrap();
    assert!(seq >= 20, "{seq}");
}

#[test]
fn remote_mpc_completes_a_lap() {
    let config = EpisodeConfig {
        laps_required: 1,
        ..EpisodeConfig::default()
    };
    let (server, mut client) = launch(Pacing::Lockstep, config, false);
    let track = l2r_core::sim::EpisodeConfig::default().load_track().unwrap();
    let mut agent = MpcAgent::new(MpcConfig::matched(), track).unwrap();
    let out = run_remote_episode(&mut client, &mut agent, None).unwrap();
    assert_eq!(out.log.metadata.termination_reason, TerminationReason::LapsComplete);
    assert!(out.agent_error.is_none());
    let finished = server.next_finished_episode(TIMEOUT).unwrap();
    assert_eq!(finished, out.log);
}

#[test]
fn shutdown_command_stops_the_server() {
    let (server, mut client) = launch(Pacing::Lockstep, EpisodeConfig::default(), false);
    client.shutdown().unwrap();
    let t0 = Instant::now();
    server.join();
    assert!(t0.elapsed() < Duration::from_secs(2));
}

#[test]
fn bind_conflict_is_reported() {
    let first = start(ServerConfig::ephemeral(Pacing::Lockstep, EpisodeConfig::default())).unwrap();
    let taken = first.addrs().control.port();
    let clash = ServerConfig {
        control_port: taken,
        ..ServerConfig::ephemeral(Pacing::Lockstep, EpisodeConfig::default())
    };
    assert!(matches!(start(clash), Err(l2r_net::ServerError::Bind { .. })));
}

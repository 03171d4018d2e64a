use l2r_core::geom::rotate;
use l2r_core::vehicle::{derivatives, rk4_step, step, wheel_positions, ActionCommand, VehicleParams, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> VehicleParams {
    VehicleParams::default()
}

/// Closed-form constant-speed, constant-steer motion about the rear axle.
fn circle_oracle(s0: &VehicleState, delta: f64, wheelbase: f64, t: f64) -> VehicleState {
    let radius = wheelbase / delta.tan();
    let omega = s0.v / radius;
    let cx = s0.x - radius * s0.yaw.sin();
    let cy = s0.y + radius * s0.yaw.cos();
    let yaw = s0.yaw + omega * t;
    VehicleState::new(cx + radius * yaw.sin(), cy - radius * yaw.cos(), s0.v, yaw)
}

#[test]
fn circular_motion_matches_closed_form() {
    let p = params();
    for &(cmd, v) in &[(1.0, 10.0), (0.4, 10.0), (-0.7, 6.0), (0.05, 20.0)] {
        let s0 = VehicleState::new(12.0, -3.0, v, 0.7);
        let action = ActionCommand::new(0.0, cmd);
        let mut s = s0;
        for k in 1..=100 {
            s = step(&s, &action, 0.1, &p).unwrap();
            let t = k as f64 * 0.1;
            let exact = circle_oracle(&s0, p.steer_gain * cmd, p.wheelbase, t);
            let radius = (p.wheelbase / (p.steer_gain * cmd).tan()).abs();
            let err = ((s.x - exact.x).powi(2) + (s.y - exact.y).powi(2)).sqrt();
            assert!(err / radius < 1e-6, "cmd {cmd} t {t} err {err}");
            let heading = v * (p.steer_gain * cmd).tan() / p.wheelbase * t;
            assert!(((s.yaw - s0.yaw) - heading).abs() < 1e-6 * heading.abs().max(1.0));
        }
    }
}

#[test]
fn rk4_is_fourth_order() {
    let p = VehicleParams {
        drag_coeff: 0.02,
        ..params()
    };
    let s0 = VehicleState::new(0.0, 0.0, 5.0, 0.2);
    let action = ActionCommand::new(0.4, 0.8);
    let horizon = 2.0;
    let integrate = |h: f64| {
        let n = (horizon / h).round() as usize;
        let mut s = s0;
        for _ in 0..n {
            s = rk4_step(&s, &action, &p, h);
        }
        s
    };
    let error = |h: f64| {
        let coarse = integrate(h);
        let fine = integrate(h / 100.0);
        ((coarse.x - fine.x).powi(2) + (coarse.y - fine.y).powi(2) + (coarse.v - fine.v).powi(2) + (coarse.yaw - fine.yaw).powi(2)).sqrt()
    };
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| error(h)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.3, "observed order {order} from {e:?}");
    }
}

#[test]
fn dynamics_are_rigid_equivariant() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let actions: Vec<ActionCommand> = (0..50)
        .map(|_| ActionCommand::new(rng.gen_range(-0.2..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let theta = 1.1;
    let shift = [40.0, -17.0];
    let mut a = VehicleState::new(3.0, 4.0, 2.0, 0.3);
    let q = rotate([a.x, a.y], theta);
    let mut b = VehicleState::new(q[0] + shift[0], q[1] + shift[1], a.v, a.yaw + theta);
    for act in &actions {
        a = step(&a, act, 0.1, &p).unwrap();
        b = step(&b, act, 0.1, &p).unwrap();
        let q = rotate([a.x, a.y], theta);
        assert!((q[0] + shift[0] - b.x).abs() < 1e-9);
        assert!((q[1] + shift[1] - b.y).abs() < 1e-9);
        assert!((a.v - b.v).abs() < 1e-9);
        assert!((a.yaw + theta - b.yaw).abs() < 1e-9);
    }
}

#[test]
fn drag_limits_speed_monotonically() {
    let p = VehicleParams {
        drag_coeff: 0.1,
        ..params()
    };
    let terminal = (p.accel_gain / p.drag_coeff).sqrt();
    let mut s = VehicleState::default();
    let full = ActionCommand::new(1.0, 0.0);
    let mut prev = 0.0;
    for _ in 0..300 {
        s = step(&s, &full, 0.1, &p).unwrap();
        assert!(s.v >= prev && s.v <= terminal + 1e-12);
        prev = s.v;
    }
    assert!((s.v - terminal).abs() < 1e-6, "{}", s.v);
}

#[test]
fn planar_speed_equals_v() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let s = VehicleState::new(0.0, 0.0, rng.gen_range(0.0..40.0), rng.gen_range(-10.0..10.0));
        let r = derivatives(&s, &ActionCommand::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), &p);
        assert!(((r.dx * r.dx + r.dy * r.dy).sqrt() - s.v).abs() < 1e-12 * s.v.max(1.0));
    }
}

#[test]
fn wheel_rotation_oracle() {
    let p = params();
    let s = VehicleState::new(5.0, 3.0, 0.0, 0.3);
    let (sin, cos) = 0.3_f64.sin_cos();
    let body = [[2.7, 0.8], [2.7, -0.8], [0.0, 0.8], [0.0, -0.8]];
    for (w, b) in wheel_positions(&s, &p).iter().zip(body) {
        let x = 5.0 + cos * b[0] - sin * b[1];
        let y = 3.0 + sin * b[0] + cos * b[1];
        assert!((w[0] - x).abs() < 1e-12 && (w[1] - y).abs() < 1e-12);
    }
}

//! Clamped iterative LQR (Gauss-Newton) on a quadratic tracking cost.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::ControlError;

pub type State = Vector4<f64>;
pub type Input = Vector2<f64>;

/// Discrete-time dynamics `s⁺ = f(s, a)` with analytic Jacobians.
pub trait Model {
    fn step(&self, s: &State, a: &Input) -> Result<State, ControlError>;
    fn jacobians(&self, s: &State, a: &Input) -> Result<(Matrix4<f64>, Matrix4x2<f64>), ControlError>;
}

/// Forward-Euler kinematic bicycle, state `[x, y, v, φ]`, input
/// `[accel_cmd, steer_cmd]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BikeModel {
    pub wheelbase: f64,
    pub accel_gain: f64,
    pub steer_gain: f64,
    pub dt: f64,
}

impl BikeModel {
    fn steer_angle(&self, u: f64) -> Result<f64, ControlError> {
        let delta = self.steer_gain * u;
        if !(delta.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(ControlError::SteeringSingularity(delta));
        }
        Ok(delta)
    }
}

impl Model for BikeModel {
    fn step(&self, s: &State, a: &Input) -> Result<State, ControlError> {
        let delta = self.steer_angle(a[1])?;
        let (sin, cos) = s[3].sin_cos();
        Ok(State::new(
            s[0] + self.dt * s[2] * cos,
            s[1] + self.dt * s[2] * sin,
            s[2] + self.dt * self.accel_gain * a[0],
            s[3] + self.dt * s[2] * delta.tan() / self.wheelbase,
        ))
    }

    fn jacobians(&self, s: &State, a: &Input) -> Result<(Matrix4<f64>, Matrix4x2<f64>), ControlError> {
        let delta = self.steer_angle(a[1])?;
        let (sin, cos) = s[3].sin_cos();
        let dt = self.dt;
        let v = s[2];
        let mut am = Matrix4::identity();
        am[(0, 2)] = dt * cos;
        am[(0, 3)] = -dt * v * sin;
        am[(1, 2)] = dt * sin;
        am[(1, 3)] = dt * v * cos;
        am[(3, 2)] = dt * delta.tan() / self.wheelbase;
        let mut bm = Matrix4x2::zeros();
        bm[(2, 0)] = dt * self.accel_gain;
        let sec = 1.0 / delta.cos();
        bm[(3, 1)] = dt * v * self.steer_gain * sec * sec / self.wheelbase;
        Ok((am, bm))
    }
}

/// Quadratic tracking problem over a horizon of `reference.len() - 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingCost {
    pub q: Vector4<f64>,
    pub r: Vector2<f64>,
    pub lower: Input,
    pub upper: Input,
    /// Reference states `r_0..r_T`; `r_0` carries no cost.
    pub reference: Vec<State>,
}

impl TrackingCost {
    pub fn horizon(&self) -> usize {
        self.reference.len() - 1
    }

    pub fn clamp(&self, a: &Input) -> Input {
        Input::new(a[0].clamp(self.lower[0], self.upper[0]), a[1].clamp(self.lower[1], self.upper[1]))
    }

    /// `Σ_{t=1..T} (s_t−r_t)ᵀQ(s_t−r_t) + Σ_{t=0..T−1} a_tᵀRa_t`.
    pub fn total(&self, states: &[State], actions: &[Input]) -> f64 {
        let mut j = 0.0;
        for t in 1..states.len() {
            let e = states[t] - self.reference[t];
            j += e.component_mul(&e).dot(&self.q);
        }
        for a in actions {
            j += a.component_mul(a).dot(&self.r);
        }
        j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlqrOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub line_search: Vec<f64>,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        IlqrOptions {
            max_iters: 50,
            tol: 1e-6,
            line_search: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrSolution {
    pub states: Vec<State>,
    pub actions: Vec<Input>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost of the initial rollout followed by every accepted iterate.
    pub cost_history: Vec<f64>,
}

pub fn rollout<M: Model>(model: &M, s0: &State, actions: &[Input]) -> Result<Vec<State>, ControlError> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(*s0);
    for a in actions {
        let next = model.step(states.last().unwrap(), a)?;
        states.push(next);
    }
    Ok(states)
}

struct Gains {
    k: Vec<Input>,
    big_k: Vec<Matrix2x4<f64>>,
    /// Predicted cost decrease of a full step.
    expected: f64,
}

fn backward_pass<M: Model>(
    model: &M,
    cost: &TrackingCost,
    states: &[State],
    actions: &[Input],
) -> Result<Gains, ControlError> {
    let t_max = actions.len();
    let q2 = Matrix4::from_diagonal(&(2.0 * cost.q));
    let r2 = Matrix2::from_diagonal(&(2.0 * cost.r));
    let mut vx = q2 * (states[t_max] - cost.reference[t_max]);
    let mut vxx = q2;
    let mut k = vec![Input::zeros(); t_max];
    let mut big_k = vec![Matrix2x4::zeros(); t_max];
    let mut expected = 0.0;
    for t in (0..t_max).rev() {
        let (am, bm) = model.jacobians(&states[t], &actions[t])?;
        let (lx, lxx) = if t > 0 {
            (q2 * (states[t] - cost.reference[t]), q2)
        } else {
            (State::zeros(), Matrix4::zeros())
        };
        let qx = lx + am.transpose() * vx;
        let qu = r2 * actions[t] + bm.transpose() * vx;
        let qxx = lxx + am.transpose() * vxx * am;
        let quu = r2 + bm.transpose() * vxx * bm;
        let qux = bm.transpose() * vxx * am;
        let quu_inv = quu.try_inverse().ok_or(ControlError::Diverged)?;
        let kt = -quu_inv * qu;
        let kk = -quu_inv * qux;
        vx = qx + kk.transpose() * quu * kt + kk.transpose() * qu + qux.transpose() * kt;
        let v = qxx + kk.transpose() * quu * kk + kk.transpose() * qux + qux.transpose() * kk;
        vxx = 0.5 * (v + v.transpose());
        expected -= kt.dot(&qu) + 0.5 * kt.dot(&(quu * kt));
        k[t] = kt;
        big_k[t] = kk;
    }
    Ok(Gains { k, big_k, expected })
}

fn forward_pass<M: Model>(
    model: &M,
    cost: &TrackingCost,
    states: &[State],
    actions: &[Input],
    gains: &Gains,
    alpha: f64,
) -> Result<(Vec<State>, Vec<Input>), ControlError> {
    let mut new_states = Vec::with_capacity(states.len());
    let mut new_actions = Vec::with_capacity(actions.len());
    new_states.push(states[0]);
    for t in 0..actions.len() {
        let dx = new_states[t] - states[t];
        let a = cost.clamp(&(actions[t] + alpha * gains.k[t] + gains.big_k[t] * dx));
        let next = model.step(&new_states[t], &a)?;
        new_actions.push(a);
        new_states.push(next);
    }
    Ok((new_states, new_actions))
}

/// Solves the tracking problem from `s0`, starting from `init` (zeros when
/// `None`). Accepted iterates never increase the cost.
pub fn ilqr_solve<M: Model>(
    model: &M,
    s0: &State,
    cost: &TrackingCost,
    options: &IlqrOptions,
    init: Option<&[Input]>,
) -> Result<IlqrSolution, ControlError> {
    let t_max = cost.horizon();
    if t_max < 1 {
        return Err(ControlError::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut actions: Vec<Input> = match init {
        Some(a) if a.len() == t_max => a.iter().map(|a| cost.clamp(a)).collect(),
        _ => vec![Input::zeros(); t_max],
    };
    let mut states = rollout(model, s0, &actions)?;
    let mut j = cost.total(&states, &actions);
    if !j.is_finite() {
        return Err(ControlError::Diverged);
    }
    let mut history = vec![j];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let gains = backward_pass(model, cost, &states, &actions)?;
        let mut accepted = None;
        for &alpha in &options.line_search {
            let (s_new, a_new) = match forward_pass(model, cost, &states, &actions, &gains, alpha) {
                Ok(r) => r,
                Err(ControlError::SteeringSingularity(_)) => continue,
                Err(e) => return Err(e),
            };
            let j_new = cost.total(&s_new, &a_new);
            if j_new.is_finite() && j_new <= j {
                accepted = Some((s_new, a_new, j_new));
                break;
            }
        }
        match accepted {
            Some((s_new, a_new, j_new)) => {
                let delta = j - j_new;
                states = s_new;
                actions = a_new;
                j = j_new;
                history.push(j);
                if delta.abs() < options.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No step improves on the current iterate: stationary when
                // the model predicts no meaningful decrease either.
                converged = gains.expected.abs() < options.tol;
                break;
            }
        }
    }
    if !j.is_finite() || states.iter().any(|s| !s.iter().all(|v| v.is_finite())) {
        return Err(ControlError::Diverged);
    }
    Ok(IlqrSolution {
        states,
        actions,
        cost: j,
        iterations,
        converged,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> BikeModel {
        BikeModel {
            wheelbase: 2.7,
            accel_gain: 10.0,
            steer_gain: 0.3,
            dt: 0.1,
        }
    }

    fn straight_reference(s0: State, v: f64, t: usize) -> Vec<State> {
        (0..=t)
            .map(|k| {
                let d = k as f64 * v * 0.1;
                State::new(s0[0] + d * s0[3].cos(), s0[1] + d * s0[3].sin(), v, s0[3])
            })
            .collect()
    }

    fn cost(reference: Vec<State>) -> TrackingCost {
        TrackingCost {
            q: Vector4::new(1.0, 1.0, 1.0, 16.0),
            r: Vector2::new(0.1, 1.0),
            lower: Input::new(-1.0, -1.0),
            upper: Input::new(1.0, 1.0),
            reference,
        }
    }

    #[test]
    fn fixed_point_needs_no_action() {
        let s0 = State::new(3.0, -2.0, 12.5, 0.4);
        let c = cost(straight_reference(s0, 12.5, 6));
        let sol = ilqr_solve(&model(), &s0, &c, &IlqrOptions::default(), None).unwrap();
        assert!(sol.cost < 1e-6);
        assert!(sol.actions.iter().all(|a| a.norm() < 1e-6));
        assert!(sol.converged);
    }

    #[test]
    fn steers_right_when_left_of_line() {
        let s0 = State::new(0.0, 1.0, 12.5, 0.0);
        let c = cost(straight_reference(State::new(0.0, 0.0, 12.5, 0.0), 12.5, 6));
        let zero = vec![Input::zeros(); 6];
        let j0 = c.total(&rollout(&model(), &s0, &zero).unwrap(), &zero);
        let sol = ilqr_solve(&model(), &s0, &c, &IlqrOptions::default(), None).unwrap();
        assert!(sol.actions[0][1] < 0.0);
        assert!(sol.cost < j0);
    }

    #[test]
    fn singularity_is_reported() {
        let m = BikeModel { steer_gain: 6.0, ..model() };
        let r = m.jacobians(&State::new(0.0, 0.0, 1.0, 0.0), &Input::new(0.0, 0.3));
        assert!(matches!(r, Err(ControlError::SteeringSingularity(_))));
    }

    #[test]
    fn solution_is_self_consistent() {
        let s0 = State::new(0.0, 2.0, 5.0, 0.3);
        let c = cost(straight_reference(State::new(0.0, 0.0, 12.5, 0.0), 12.5, 6));
        let sol = ilqr_solve(&model(), &s0, &c, &IlqrOptions::default(), None).unwrap();
        let again = rollout(&model(), &s0, &sol.actions).unwrap();
        for (a, b) in again.iter().zip(&sol.states) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.actions.iter().all(|a| a.iter().all(|u| u.abs() <= 1.0)));
    }
}

//! Discrete-time kinematic bicycle model and joint-system rollout.

use serde::{Deserialize, Serialize};

use crate::real::{lit, Real};

/// Kinematic state of one vehicle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState<T = f64> {
    /// Longitudinal position [m].
    pub x: T,
    /// Lateral position [m].
    pub y: T,
    /// Heading [rad], kept in (-pi, pi].
    pub heading: T,
    /// Speed [m/s], kept in [0, v_max].
    pub speed: T,
}

impl<T: Real> AgentState<T> {
    pub fn new(x: T, y: T, heading: T, speed: T) -> Self {
        Self { x, y, heading, speed }
    }

    pub fn position(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn cast<U: Real>(&self) -> AgentState<U> {
        AgentState {
            x: lit(self.x.as_f64()),
            y: lit(self.y.as_f64()),
            heading: lit(self.heading.as_f64()),
            speed: lit(self.speed.as_f64()),
        }
    }
}

/// Actuation of one vehicle for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control<T = f64> {
    /// Longitudinal acceleration [m/s^2].
    pub accel: T,
    /// Front-wheel steering angle [rad].
    pub steer: T,
}

impl<T: Real> Control<T> {
    pub fn new(accel: T, steer: T) -> Self {
        Self { accel, steer }
    }

    pub fn zero() -> Self {
        Self { accel: T::zero(), steer: T::zero() }
    }

    pub fn cast<U: Real>(&self) -> Control<U> {
        Control { accel: lit(self.accel.as_f64()), steer: lit(self.steer.as_f64()) }
    }
}

/// Actuator and speed limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits<T = f64> {
    pub accel_min: T,
    pub accel_max: T,
    pub steer_max: T,
    pub speed_max: T,
}

impl<T: Real> Default for ControlLimits<T> {
    /// The 1/10-scale world: a in [-1.0, 0.5] m/s^2, |steer| <= 0.6 rad, v <= 1.0 m/s.
    fn default() -> Self {
        Self {
            accel_min: lit(-1.0),
            accel_max: lit(0.5),
            steer_max: lit(0.6),
            speed_max: lit(1.0),
        }
    }
}

impl<T: Real> ControlLimits<T> {
    /// Clamps a control into the box; the flag reports whether anything moved.
    pub fn clamp(&self, u: Control<T>) -> (Control<T>, bool) {
        let accel = u.accel.max(self.accel_min).min(self.accel_max);
        let steer = u.steer.max(-self.steer_max).min(self.steer_max);
        let saturated = accel != u.accel || steer != u.steer;
        (Control { accel, steer }, saturated)
    }

    pub fn contains(&self, u: &Control<T>) -> bool {
        u.accel >= self.accel_min
            && u.accel <= self.accel_max
            && u.steer.abs() <= self.steer_max
    }

    pub fn cast<U: Real>(&self) -> ControlLimits<U> {
        ControlLimits {
            accel_min: lit(self.accel_min.as_f64()),
            accel_max: lit(self.accel_max.as_f64()),
            steer_max: lit(self.steer_max.as_f64()),
            speed_max: lit(self.speed_max.as_f64()),
        }
    }
}

/// Body dimensions of a vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams<T = f64> {
    pub length: T,
    pub width: T,
    pub wheelbase: T,
}

impl<T: Real> Default for VehicleParams<T> {
    /// 1/10-scale passenger car.
    fn default() -> Self {
        Self { length: lit(0.45), width: lit(0.20), wheelbase: lit(0.26) }
    }
}

impl<T: Real> VehicleParams<T> {
    pub fn cast<U: Real>(&self) -> VehicleParams<U> {
        VehicleParams {
            length: lit(self.length.as_f64()),
            width: lit(self.width.as_f64()),
            wheelbase: lit(self.wheelbase.as_f64()),
        }
    }
}

/// Result of a single integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T = f64> {
    pub state: AgentState<T>,
    /// The control was outside its limits and got clamped.
    pub saturated: bool,
}

/// Vehicle geometry plus limits; everything `step` needs besides the timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel<T = f64> {
    pub params: VehicleParams<T>,
    pub limits: ControlLimits<T>,
}

impl<T: Real> Default for VehicleModel<T> {
    fn default() -> Self {
        Self { params: VehicleParams::default(), limits: ControlLimits::default() }
    }
}

impl<T: Real> VehicleModel<T> {
    pub fn new(params: VehicleParams<T>, limits: ControlLimits<T>) -> Self {
        Self { params, limits }
    }

    /// Forward-Euler kinematic bicycle update. Controls outside the limits are
    /// clamped and reported through `saturated`.
    pub fn step(&self, state: &AgentState<T>, control: Control<T>, dt: T) -> StepOutcome<T> {
        let (u, saturated) = self.limits.clamp(control);
        let (sin_h, cos_h) = state.heading.sin_cos();
        let v = state.speed;
        let yaw_rate = v / self.params.wheelbase * u.steer.tan();
        let next = AgentState {
            x: state.x + v * cos_h * dt,
            y: state.y + v * sin_h * dt,
            heading: normalize_angle(state.heading + yaw_rate * dt),
            speed: (v + u.accel * dt).max(T::zero()).min(self.limits.speed_max),
        };
        StepOutcome { state: next, saturated }
    }

    /// Rolls one agent forward; returns `controls.len() + 1` states.
    pub fn rollout_agent(&self, x0: &AgentState<T>, controls: &[Control<T>], dt: T) -> Vec<AgentState<T>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(*x0);
        let mut s = *x0;
        for u in controls {
            s = self.step(&s, *u, dt).state;
            states.push(s);
        }
        states
    }

    pub fn cast<U: Real>(&self) -> VehicleModel<U> {
        VehicleModel { params: self.params.cast(), limits: self.limits.cast() }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r += two_pi;
    } else if r > T::PI() {
        r -= two_pi;
    }
    r
}

/// States of every vehicle at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointState<T = f64> {
    pub robot: AgentState<T>,
    pub human: AgentState<T>,
    /// Third-party agents and static obstacles.
    #[serde(default)]
    pub others: Vec<AgentState<T>>,
}

impl<T: Real> JointState<T> {
    pub fn new(robot: AgentState<T>, human: AgentState<T>) -> Self {
        Self { robot, human, others: Vec::new() }
    }

    pub fn cast<U: Real>(&self) -> JointState<U> {
        JointState {
            robot: self.robot.cast(),
            human: self.human.cast(),
            others: self.others.iter().map(|s| s.cast()).collect(),
        }
    }
}

/// Rolls the joint system forward. `others[i]` holds the control sequence of
/// third-party agent `i`; missing entries mean zero control.
pub fn rollout<T: Real>(
    model: &VehicleModel<T>,
    x0: &JointState<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    others: &[Vec<Control<T>>],
    dt: T,
) -> Vec<JointState<T>> {
    assert_eq!(u_robot.len(), u_human.len(), "robot and human sequences must share a horizon");
    let mut out = Vec::with_capacity(u_robot.len() + 1);
    out.push(x0.clone());
    let mut cur = x0.clone();
    for k in 0..u_robot.len() {
        let others_next = cur
            .others
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let u = others.get(i).and_then(|seq| seq.get(k)).copied().unwrap_or_else(Control::zero);
                model.step(s, u, dt).state
            })
            .collect();
        cur = JointState {
            robot: model.step(&cur.robot, u_robot[k], dt).state,
            human: model.step(&cur.human, u_human[k], dt).state,
            others: others_next,
        };
        out.push(cur.clone());
    }
    out
}

/// Fixed-horizon control sequence together with its rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T = f64> {
    pub controls: Vec<Control<T>>,
    /// `controls.len() + 1` states, starting with the initial one.
    pub states: Vec<AgentState<T>>,
    pub dt: T,
}

impl<T: Real> Trajectory<T> {
    pub fn rollout(model: &VehicleModel<T>, x0: &AgentState<T>, controls: Vec<Control<T>>, dt: T) -> Self {
        let states = model.rollout_agent(x0, &controls, dt);
        Self { controls, states, dt }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Recomputes every state from the controls and checks for exact agreement.
    pub fn is_consistent(&self, model: &VehicleModel<T>) -> bool {
        if self.states.len() != self.controls.len() + 1 {
            return false;
        }
        self.controls
            .iter()
            .enumerate()
            .all(|(k, u)| model.step(&self.states[k], *u, self.dt).state == self.states[k + 1])
    }

    pub fn positions(&self) -> Vec<[T; 2]> {
        self.states.iter().map(|s| s.position()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> VehicleModel<f64> {
        VehicleModel::default()
    }

    #[test]
    fn zero_input_moves_straight() {
        let s = AgentState::new(0.0, 0.0, 0.0, 1.0);
        let out = model().step(&s, Control::zero(), 0.1);
        assert!(!out.saturated);
        assert!((out.state.x - 0.1).abs() < 1e-15);
        assert_eq!(out.state.y, 0.0);
        assert_eq!(out.state.heading, 0.0);
        assert_eq!(out.state.speed, 1.0);
    }

    #[test]
    fn accel_clamped_then_speed_capped() {
        let s = AgentState::new(0.0, 0.0, 0.0, 1.0);
        let out = model().step(&s, Control::new(0.9, 0.0), 0.1);
        assert!(out.saturated);
        assert_eq!(out.state.speed, 1.0);
        let s = AgentState::new(0.0, 0.0, 0.0, 0.5);
        let out = model().step(&s, Control::new(0.9, 0.0), 0.1);
        assert!((out.state.speed - 0.55).abs() < 1e-12);
    }

    #[test]
    fn matches_fine_grained_integration() {
        // Same right-hand side, integrated with 100 substeps.
        let s0 = AgentState::new(0.0, 0.0, 0.0, 0.8);
        let (a, d, l, dt) = (0.5, 0.3, 0.26, 0.1);
        let (mut x, mut y, mut h, mut v) = (0.0f64, 0.0f64, 0.0f64, 0.8f64);
        let sub = dt / 100.0;
        for _ in 0..100 {
            let (nx, ny, nh, nv) =
                (x + v * h.cos() * sub, y + v * h.sin() * sub, h + v / l * f64::tan(d) * sub, v + a * sub);
            x = nx;
            y = ny;
            h = nh;
            v = nv;
        }
        let out = model().step(&s0, Control::new(a, d), dt).state;
        assert!((out.speed - v).abs() < 1e-3);
        // A single Euler step misses the within-step speed gain and turn, so
        // x, y and heading lag the fine solution by the leading truncation term.
        let lag_y = 0.8 * 0.8 * d.tan() / l * dt * dt / 2.0;
        assert!((y - out.y - lag_y).abs() < 2e-4, "{} vs {}", y - out.y, lag_y);
        let lag_x = a * dt * dt / 2.0;
        let lag_h = a * d.tan() * dt * dt / (2.0 * l);
        assert!((x - out.x - lag_x).abs() < 2e-4, "{} vs {}", x - out.x, lag_x);
        assert!((h - out.heading - lag_h).abs() < 2e-4, "{} vs {}", h - out.heading, lag_h);
    }

    #[test]
    fn speed_never_negative() {
        let s = AgentState::new(0.0, 0.0, 0.0, 0.05);
        let out = model().step(&s, Control::new(-1.0, 0.0), 0.1);
        assert_eq!(out.state.speed, 0.0);
    }

    #[test]
    fn angle_normalization() {
        use std::f64::consts::PI;
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5f64) - 0.5).abs() < 1e-15);
        assert!((normalize_angle(-3.5 * PI) - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn empty_rollout_returns_initial_state() {
        let x0 = JointState::new(AgentState::new(0.0, 0.0, 0.0, 1.0), AgentState::new(1.0, 0.0, 0.0, 1.0));
        let out = rollout(&model(), &x0, &[], &[], &[], 0.1);
        assert_eq!(out, vec![x0]);
    }

    #[test]
    fn constant_velocity_rollout() {
        let x0 = JointState::new(AgentState::new(0.0, 0.37, 0.0, 0.85), AgentState::new(0.0, 0.0, 0.0, 0.85));
        let u = vec![Control::zero(); 10];
        let out = rollout(&model(), &x0, &u, &u, &[], 0.1);
        assert_eq!(out.len(), 11);
        for k in 1..out.len() {
            assert!((out[k].robot.x - out[k - 1].robot.x - 0.085).abs() < 1e-12);
            assert!((out[k].human.x - out[k - 1].human.x - 0.085).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_rollout_is_consistent() {
        let m = model();
        let ctrl = (0..10).map(|k| Control::new(0.1 * k as f64 - 0.4, 0.05)).collect();
        let t = Trajectory::rollout(&m, &AgentState::new(0.0, 0.0, 0.0, 0.5), ctrl, 0.1);
        assert!(t.is_consistent(&m));
    }

    #[test]
    fn generic_over_f32() {
        let m: VehicleModel<f32> = VehicleModel::default();
        let out = m.step(&AgentState::new(0.0f32, 0.0, 0.0, 1.0), Control::zero(), 0.1);
        assert!((out.state.x - 0.1).abs() < 1e-6);
    }
}

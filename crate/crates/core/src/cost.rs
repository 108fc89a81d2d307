//! Feature functions and linear costs for both agents.
//!
//! Every agent is scored with the same five features: goal-lane proximity,
//! speed deviation, jerk, steering rate and a proximity (safety) penalty.
//! State features of stage `k` are evaluated on the state reached after
//! applying control `k`, so every control in the horizon influences the cost.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, Control, JointState, VehicleModel, VehicleParams};
use crate::geometry::Polyline;
use crate::real::{lit, Real};

/// Per-stage (or summed) feature values. All components are nonnegative,
/// except that `goal` is bounded below by 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T = f64> {
    /// `exp(d_g / w_l)`, distance to the target-lane centerline over lane width.
    pub goal: T,
    /// `(v - v_d)^2`.
    pub speed: T,
    /// Squared jerk `((a_k - a_{k-1}) / dt)^2`.
    pub accel: T,
    /// Squared steering rate.
    pub steer: T,
    /// `sum_i exp(-d_i)` over surrounding vehicles, `d_i` the scaled ellipse distance.
    pub safety: T,
}

impl<T: Real> FeatureVector<T> {
    pub const LEN: usize = 5;

    /// Components in weight order: goal, speed, accel, steer, safety.
    pub fn to_array(&self) -> [T; 5] {
        [self.goal, self.speed, self.accel, self.steer, self.safety]
    }

    pub fn from_array(a: [T; 5]) -> Self {
        Self { goal: a[0], speed: a[1], accel: a[2], steer: a[3], safety: a[4] }
    }
}

impl<T: Real> std::ops::Add for FeatureVector<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            goal: self.goal + o.goal,
            speed: self.speed + o.speed,
            accel: self.accel + o.accel,
            steer: self.steer + o.steer,
            safety: self.safety + o.safety,
        }
    }
}

impl<T: Real> std::ops::AddAssign for FeatureVector<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Linear feature weights. `courtesy` (lambda_c) only matters for an agent that
/// plans courteously; it is ignored by [`CostWeights::dot`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostWeights<T = f64> {
    #[serde(rename = "theta_g")]
    pub goal: T,
    #[serde(rename = "theta_d")]
    pub speed: T,
    #[serde(rename = "theta_acc")]
    pub accel: T,
    #[serde(rename = "theta_steer")]
    pub steer: T,
    #[serde(rename = "theta_s")]
    pub safety: T,
    #[serde(rename = "lambda_c", default)]
    pub courtesy: T,
}

impl<T: Real> CostWeights<T> {
    pub fn new(goal: T, speed: T, accel: T, steer: T, safety: T) -> Self {
        Self { goal, speed, accel, steer, safety, courtesy: T::zero() }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_courtesy(mut self, lambda: T) -> Self {
        self.courtesy = lambda;
        self
    }

    pub fn dot(&self, f: &FeatureVector<T>) -> T {
        self.goal * f.goal
            + self.speed * f.speed
            + self.accel * f.accel
            + self.steer * f.steer
            + self.safety * f.safety
    }

    /// The five feature weights in [`FeatureVector::to_array`] order.
    pub fn feature_array(&self) -> [T; 5] {
        [self.goal, self.speed, self.accel, self.steer, self.safety]
    }

    pub fn from_feature_array(a: [T; 5], courtesy: T) -> Self {
        Self { goal: a[0], speed: a[1], accel: a[2], steer: a[3], safety: a[4], courtesy }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            goal: self.goal * alpha,
            speed: self.speed * alpha,
            accel: self.accel * alpha,
            steer: self.steer * alpha,
            safety: self.safety * alpha,
            courtesy: self.courtesy * alpha,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.feature_array().iter().chain(std::iter::once(&self.courtesy)).all(|w| w.is_finite() && *w >= T::zero())
    }

    pub fn cast<U: Real>(&self) -> CostWeights<U> {
        CostWeights::from_feature_array(self.feature_array().map(|w| lit(w.as_f64())), lit(self.courtesy.as_f64()))
    }
}

impl<T: Real> std::ops::Add for CostWeights<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (self.feature_array(), o.feature_array());
        Self::from_feature_array(std::array::from_fn(|i| a[i] + b[i]), self.courtesy + o.courtesy)
    }
}

/// Where an agent wants to be: a lane to follow and a cruising speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentGoal<T = f64> {
    pub lane: Polyline<T>,
    pub lane_width: T,
    pub desired_speed: T,
}

impl<T: Real> AgentGoal<T> {
    pub fn cast<U: Real>(&self) -> AgentGoal<U> {
        AgentGoal {
            lane: self.lane.cast(),
            lane_width: lit(self.lane_width.as_f64()),
            desired_speed: lit(self.desired_speed.as_f64()),
        }
    }
}

/// Whose cost is being evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    Robot,
    Human,
}

/// Everything fixed during one planning cycle: the initial joint state, the
/// agents' goals, the previously executed controls and the predicted motion
/// of third-party agents.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene<T = f64> {
    pub model: VehicleModel<T>,
    pub dt: T,
    pub x0: JointState<T>,
    pub robot_goal: AgentGoal<T>,
    pub human_goal: AgentGoal<T>,
    /// Control each agent executed on the previous step (zero at t = 0).
    pub robot_prev: Control<T>,
    pub human_prev: Control<T>,
    /// Predicted states of third-party agents, `others[i][k]` for `k = 0..=N`.
    /// Shorter sequences hold their last state.
    pub others: Vec<Vec<AgentState<T>>>,
    /// `false` removes the robot from the world (it then contributes nothing
    /// to anyone's safety feature).
    pub robot_present: bool,
}

impl<T: Real> Scene<T> {
    pub fn new(model: VehicleModel<T>, dt: T, x0: JointState<T>, robot_goal: AgentGoal<T>, human_goal: AgentGoal<T>) -> Self {
        let others = x0.others.iter().map(|s| vec![*s]).collect();
        Self {
            model,
            dt,
            x0,
            robot_goal,
            human_goal,
            robot_prev: Control::zero(),
            human_prev: Control::zero(),
            others,
            robot_present: true,
        }
    }

    pub fn without_robot(&self) -> Self {
        Self { robot_present: false, ..self.clone() }
    }

    fn other_at(&self, i: usize, k: usize) -> AgentState<T> {
        let seq = &self.others[i];
        seq.get(k).or_else(|| seq.last()).copied().unwrap_or(self.x0.others[i])
    }

    fn goal(&self, p: Perspective) -> &AgentGoal<T> {
        match p {
            Perspective::Robot => &self.robot_goal,
            Perspective::Human => &self.human_goal,
        }
    }

    fn prev(&self, p: Perspective) -> Control<T> {
        match p {
            Perspective::Robot => self.robot_prev,
            Perspective::Human => self.human_prev,
        }
    }

    pub fn cast<U: Real>(&self) -> Scene<U> {
        Scene {
            model: self.model.cast(),
            dt: lit(self.dt.as_f64()),
            x0: self.x0.cast(),
            robot_goal: self.robot_goal.cast(),
            human_goal: self.human_goal.cast(),
            robot_prev: self.robot_prev.cast(),
            human_prev: self.human_prev.cast(),
            others: self.others.iter().map(|seq| seq.iter().map(|s| s.cast()).collect()).collect(),
            robot_present: self.robot_present,
        }
    }
}

/// Scaled ellipse distance between two vehicle centers, measured in the
/// frame of `me`: longitudinal offset over car length, lateral over width.
pub fn ellipse_distance<T: Real>(me: &AgentState<T>, other: &AgentState<T>, vehicle: &VehicleParams<T>) -> T {
    let (sn, cs) = me.heading.sin_cos();
    let (dx, dy) = (other.x - me.x, other.y - me.y);
    let lon = (cs * dx + sn * dy) / vehicle.length;
    let lat = (-sn * dx + cs * dy) / vehicle.width;
    lon.hypot(lat)
}

/// Squared distance between the velocity vector and the desired velocity
/// `vd` along the lane, where `along` is the cosine of the heading relative
/// to the lane direction. Equals `(v - vd)^2` when aligned with the lane.
fn speed_deviation<T: Real>(v: T, vd: T, along: T) -> T {
    (v * v - lit::<T>(2.0) * v * vd * along + vd * vd).max(T::zero())
}

/// Features of one stage for the agent in `state`, which applied `control`
/// after `prev`. `surrounding` lists every other vehicle at the same instant.
pub fn stage_features<T: Real>(
    vehicle: &VehicleParams<T>,
    goal: &AgentGoal<T>,
    dt: T,
    state: &AgentState<T>,
    control: Control<T>,
    prev: Control<T>,
    surrounding: &[AgentState<T>],
) -> FeatureVector<T> {
    let proj = goal.lane.project(state.position());
    let (sn, cs) = state.heading.sin_cos();
    let along = cs * proj.tangent[0] + sn * proj.tangent[1];
    let jerk = (control.accel - prev.accel) / dt;
    let steer_rate = (control.steer - prev.steer) / dt;
    FeatureVector {
        goal: (proj.distance / goal.lane_width).exp(),
        speed: speed_deviation(state.speed, goal.desired_speed, along),
        accel: jerk * jerk,
        steer: steer_rate * steer_rate,
        safety: surrounding.iter().map(|o| (-ellipse_distance(state, o, vehicle)).exp()).sum(),
    }
}

/// Rolled-out motion of one decision agent, with clamping bookkeeping for
/// the adjoint pass.
#[derive(Clone, Debug)]
struct AgentRollout<T> {
    states: Vec<AgentState<T>>,
    controls: Vec<Control<T>>,
    accel_free: Vec<bool>,
    steer_free: Vec<bool>,
    speed_free: Vec<bool>,
}

impl<T: Real> AgentRollout<T> {
    fn new(model: &VehicleModel<T>, x0: &AgentState<T>, controls: &[Control<T>], dt: T) -> Self {
        let n = controls.len();
        let lim = &model.limits;
        let mut r = Self {
            states: Vec::with_capacity(n + 1),
            controls: Vec::with_capacity(n),
            accel_free: Vec::with_capacity(n),
            steer_free: Vec::with_capacity(n),
            speed_free: Vec::with_capacity(n),
        };
        r.states.push(*x0);
        let mut s = *x0;
        for u in controls {
            let (c, _) = lim.clamp(*u);
            r.accel_free.push(u.accel >= lim.accel_min && u.accel <= lim.accel_max);
            r.steer_free.push(u.steer.abs() <= lim.steer_max);
            let raw_v = s.speed + c.accel * dt;
            r.speed_free.push(raw_v >= T::zero() && raw_v <= lim.speed_max);
            s = model.step(&s, c, dt).state;
            r.controls.push(c);
            r.states.push(s);
        }
        r
    }

    /// Backpropagates state and (clamped) control sensitivities to the raw
    /// controls. `gs[k]` is dJ/ds_k (k = 0..=N; index 0 ignored), `gu[k]`
    /// is dJ/d(clamped u_k).
    fn backprop(&self, model: &VehicleModel<T>, dt: T, gs: &[[T; 4]], gu: &[[T; 2]]) -> Vec<Control<T>> {
        let n = self.controls.len();
        let mut out = vec![Control::zero(); n];
        if n == 0 {
            return out;
        }
        let wb = model.params.wheelbase;
        let mut lam = gs[n];
        for k in (0..n).rev() {
            let s = &self.states[k];
            let u = &self.controls[k];
            let (sn, cs) = s.heading.sin_cos();
            let sc = if self.speed_free[k] { T::one() } else { T::zero() };
            let tan_d = u.steer.tan();
            let sec2 = T::one() + tan_d * tan_d;
            let da = gu[k][0] + lam[3] * dt * sc;
            let dd = gu[k][1] + lam[2] * s.speed / wb * sec2 * dt;
            out[k] = Control {
                accel: if self.accel_free[k] { da } else { T::zero() },
                steer: if self.steer_free[k] { dd } else { T::zero() },
            };
            let prev = lam;
            lam = [
                gs[k][0] + prev[0],
                gs[k][1] + prev[1],
                gs[k][2] + prev[0] * (-s.speed * sn * dt) + prev[1] * (s.speed * cs * dt) + prev[2],
                gs[k][3] + prev[0] * cs * dt + prev[1] * sn * dt + prev[2] * tan_d * dt / wb + prev[3] * sc,
            ];
        }
        out
    }
}

/// Cost value together with its gradient with respect to both agents' raw
/// control sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CostGradient<T = f64> {
    pub value: T,
    pub robot: Vec<Control<T>>,
    pub human: Vec<Control<T>>,
}

struct Evaluation<T> {
    features: FeatureVector<T>,
    value: T,
    grad: Option<(Vec<Control<T>>, Vec<Control<T>>)>,
}

fn evaluate<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    weights: &CostWeights<T>,
    who: Perspective,
    want_grad: bool,
) -> Evaluation<T> {
    assert_eq!(u_robot.len(), u_human.len(), "robot and human sequences must share a horizon");
    let n = u_robot.len();
    let model = &scene.model;
    let veh = &model.params;
    let dt = scene.dt;
    let robot = AgentRollout::new(model, &scene.x0.robot, u_robot, dt);
    let human = AgentRollout::new(model, &scene.x0.human, u_human, dt);
    let (me, them) = match who {
        Perspective::Robot => (&robot, &human),
        Perspective::Human => (&human, &robot),
    };
    // The partner is always visible, except the robot when it is removed.
    let partner_visible = scene.robot_present;
    let goal = scene.goal(who);
    let prev = scene.prev(who);

    let mut features = FeatureVector::default();
    let mut gs_me = vec![[T::zero(); 4]; n + 1];
    let mut gs_them = vec![[T::zero(); 4]; n + 1];
    let mut gu_me = vec![[T::zero(); 2]; n];
    let two = lit::<T>(2.0);
    let dt2 = dt * dt;

    for k in 0..n {
        let s = &me.states[k + 1];
        let u = me.controls[k];
        let up = if k == 0 { prev } else { me.controls[k - 1] };

        let proj = goal.lane.project(s.position());
        let fg = (proj.distance / goal.lane_width).exp();
        let (sn, cs) = s.heading.sin_cos();
        let along = cs * proj.tangent[0] + sn * proj.tangent[1];
        let across = sn * proj.tangent[0] - cs * proj.tangent[1];
        let vd = goal.desired_speed;
        let ja = u.accel - up.accel;
        let js = u.steer - up.steer;
        features.goal += fg;
        features.speed += speed_deviation(s.speed, vd, along);
        features.accel += ja * ja / dt2;
        features.steer += js * js / dt2;

        if want_grad {
            if proj.distance > T::epsilon() {
                let c = weights.goal * fg / goal.lane_width / proj.distance;
                gs_me[k + 1][0] += c * (s.x - proj.point[0]);
                gs_me[k + 1][1] += c * (s.y - proj.point[1]);
            }
            gs_me[k + 1][2] += weights.speed * two * s.speed * vd * across;
            gs_me[k + 1][3] += weights.speed * two * (s.speed - vd * along);
            gu_me[k][0] += weights.accel * two * ja / dt2;
            gu_me[k][1] += weights.steer * two * js / dt2;
            if k > 0 {
                gu_me[k - 1][0] -= weights.accel * two * ja / dt2;
                gu_me[k - 1][1] -= weights.steer * two * js / dt2;
            }
        }

        let mut add_neighbor = |o: &AgentState<T>, partner: bool| {
            let (dx, dy) = (o.x - s.x, o.y - s.y);
            let lon = (cs * dx + sn * dy) / veh.length;
            let lat = (-sn * dx + cs * dy) / veh.width;
            let d = lon.hypot(lat);
            let e = (-d).exp();
            features.safety += e;
            if want_grad && d > T::epsilon() {
                let c = -weights.safety * e / d;
                let dlon = c * lon / veh.length;
                let dlat = c * lat / veh.width;
                let gdx = dlon * cs - dlat * sn;
                let gdy = dlon * sn + dlat * cs;
                gs_me[k + 1][0] -= gdx;
                gs_me[k + 1][1] -= gdy;
                gs_me[k + 1][2] += c * lon * lat * (veh.width / veh.length - veh.length / veh.width);
                if partner {
                    gs_them[k + 1][0] += gdx;
                    gs_them[k + 1][1] += gdy;
                }
            }
        };
        if partner_visible {
            add_neighbor(&them.states[k + 1], true);
        }
        for i in 0..scene.others.len() {
            add_neighbor(&scene.other_at(i, k + 1), false);
        }
    }

    let value = weights.dot(&features);
    let grad = want_grad.then(|| {
        let g_me = me.backprop(model, dt, &gs_me, &gu_me);
        let g_them = if partner_visible {
            them.backprop(model, dt, &gs_them, &vec![[T::zero(); 2]; n])
        } else {
            vec![Control::zero(); n]
        };
        match who {
            Perspective::Robot => (g_me, g_them),
            Perspective::Human => (g_them, g_me),
        }
    });
    Evaluation { features, value, grad }
}

/// Feature sums over the horizon for the given perspective.
pub fn cumulative_features<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    who: Perspective,
) -> FeatureVector<T> {
    evaluate(scene, u_robot, u_human, &CostWeights::zero(), who, false).features
}

/// `theta^T Phi` over the horizon.
pub fn cumulative_cost<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    weights: &CostWeights<T>,
    who: Perspective,
) -> T {
    weights.dot(&cumulative_features(scene, u_robot, u_human, who))
}

/// Cost plus its analytic gradient (adjoint pass through the rollout).
pub fn cost_gradient<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    weights: &CostWeights<T>,
    who: Perspective,
) -> CostGradient<T> {
    let ev = evaluate(scene, u_robot, u_human, weights, who, true);
    let (robot, human) = ev.grad.expect("gradient requested");
    CostGradient { value: ev.value, robot, human }
}

/// Stage-by-stage rollout of both decision agents (third parties excluded).
pub fn rollout_pair<T: Real>(scene: &Scene<T>, u_robot: &[Control<T>], u_human: &[Control<T>]) -> (Vec<AgentState<T>>, Vec<AgentState<T>>) {
    (
        scene.model.rollout_agent(&scene.x0.robot, u_robot, scene.dt),
        scene.model.rollout_agent(&scene.x0.human, u_human, scene.dt),
    )
}

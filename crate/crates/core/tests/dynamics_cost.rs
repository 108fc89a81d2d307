use courtesy::cost::{cumulative_cost, cumulative_features, ellipse_distance, stage_features};
use courtesy::dynamics::rollout;
use courtesy::geometry::Polyline;
use courtesy::scenario::Scenario;
use courtesy::{AgentGoal, AgentState, Control, ControlLimits, CostWeights, JointState, Perspective, Scene, VehicleModel, VehicleParams};
use proptest::prelude::*;

fn model() -> VehicleModel {
    VehicleModel::new(VehicleParams::default(), ControlLimits::default())
}

fn goal(y: f64, vd: f64) -> AgentGoal {
    AgentGoal { lane: Polyline::segment([-100.0, y], [100.0, y]), lane_width: 0.37, desired_speed: vd }
}

fn control() -> impl Strategy<Value = Control> {
    (-3.0..3.0f64, -2.0..2.0f64).prop_map(|(a, d)| Control::new(a, d))
}

fn state() -> impl Strategy<Value = AgentState> {
    (-5.0..5.0f64, -1.0..1.0f64, -3.0..3.0f64, 0.0..1.0f64).prop_map(|(x, y, h, v)| AgentState::new(x, y, h, v))
}

#[test]
fn accel_is_clamped_before_speed_cap() {
    let out = model().step(&AgentState::new(0.0, 0.0, 0.0, 1.0), Control::new(0.9, 0.0), 0.1);
    assert!(out.saturated);
    assert_eq!(out.state.speed, 1.0);
    assert!((out.state.x - 0.1).abs() < 1e-12);
}

#[test]
fn lane_change_replay_is_bit_identical() {
    let sc = Scenario::builtin("lane_change_slow").unwrap();
    let ur: Vec<Control> = (0..30).map(|k| Control::new(0.3 * ((k as f64) * 0.3).sin(), 0.2 * ((k as f64) * 0.2).cos())).collect();
    let uh: Vec<Control> = (0..30).map(|k| Control::new(-0.1 * (k as f64 * 0.1), 0.0)).collect();
    let m = sc.model::<f64>();
    let a = rollout(&m, &sc.initial_state(), &ur, &uh, &[], sc.dt);
    let b = rollout(&m, &sc.initial_state(), &ur, &uh, &[], sc.dt);
    assert_eq!(a, b);
    assert_eq!(a.len(), 31);
}

#[test]
fn f32_and_f64_agree() {
    let m = model();
    let s = AgentState::new(0.0, 0.1, 0.2, 0.7);
    let u: Vec<Control> = (0..10).map(|k| Control::new(0.05 * k as f64 - 0.3, 0.1)).collect();
    let a = m.rollout_agent(&s, &u, 0.1);
    let u32: Vec<Control<f32>> = u.iter().map(|c| c.cast()).collect();
    let b = m.cast::<f32>().rollout_agent(&s.cast(), &u32, 0.1);
    for (x, y) in a.iter().zip(&b) {
        assert!((x.x - y.x as f64).abs() < 1e-5 && (x.y - y.y as f64).abs() < 1e-5);
    }
}

#[test]
fn speed_deviation_example() {
    let f = stage_features(&VehicleParams::default(), &goal(0.0, 1.0), 0.1, &AgentState::new(0.0, 0.0, 0.0, 0.85), Control::zero(), Control::zero(), &[]);
    assert!((f.speed - 0.0225).abs() < 1e-12);
    assert!((f.goal - 1.0).abs() < 1e-12);
    assert_eq!((f.accel, f.steer, f.safety), (0.0, 0.0, 0.0));
}

#[test]
fn safety_sums_over_surrounding_cars() {
    let v = VehicleParams::<f64>::default();
    let me = AgentState::new(0.0, 0.0, 0.0, 1.0);
    let ahead = AgentState::new(v.length, 0.0, 0.0, 1.0);
    let beside = AgentState::new(0.0, 2.0 * v.width, 0.0, 1.0);
    assert!((ellipse_distance(&me, &ahead, &v) - 1.0).abs() < 1e-12);
    let f = stage_features(&v, &goal(0.0, 1.0), 0.1, &me, Control::zero(), Control::zero(), &[ahead, beside]);
    assert!((f.safety - ((-1.0f64).exp() + (-2.0f64).exp())).abs() < 1e-9);
    assert!((f.safety - 0.5032).abs() < 1e-4);
}

#[test]
fn safety_falls_as_cars_separate() {
    let v = VehicleParams::<f64>::default();
    let me = AgentState::new(0.0, 0.0, 0.0, 1.0);
    let mut last = f64::INFINITY;
    for k in 0..20 {
        let other = AgentState::new(0.1 + 0.1 * k as f64, 0.05, 0.0, 1.0);
        let f = stage_features(&v, &goal(0.0, 1.0), 0.1, &me, Control::zero(), Control::zero(), &[other]);
        assert!(f.safety < last);
        last = f.safety;
    }
}

fn lone_scene() -> Scene {
    let x0 = JointState::new(AgentState::new(-50.0, 5.0, 0.0, 1.0), AgentState::new(0.0, 0.0, 0.0, 1.0));
    Scene::new(model(), 0.1, x0, goal(5.0, 1.0), goal(0.0, 1.0))
}

#[test]
fn goal_weight_on_centerline_sums_to_horizon() {
    let scene = lone_scene();
    let u = vec![Control::zero(); 10];
    let c = cumulative_cost(&scene, &u, &u, &CostWeights::new(1.0, 0.0, 0.0, 0.0, 0.0), Perspective::Human);
    assert!((c - 10.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn clamping_is_idempotent(s in state(), u in control()) {
        let m = model();
        let (c, _) = m.limits.clamp(u);
        prop_assert_eq!(m.step(&s, u, 0.1).state, m.step(&s, c, 0.1).state);
    }

    #[test]
    fn speed_stays_in_range(s in state(), us in prop::collection::vec(control(), 1..30)) {
        let m = model();
        for st in m.rollout_agent(&s, &us, 0.1) {
            prop_assert!(st.speed >= 0.0 && st.speed <= m.limits.speed_max);
        }
    }

    #[test]
    fn zero_steer_keeps_lane(v in 0.0..1.0f64, accels in prop::collection::vec(-2.0..2.0f64, 1..30)) {
        let us: Vec<Control> = accels.iter().map(|a| Control::new(*a, 0.0)).collect();
        for st in model().rollout_agent(&AgentState::new(0.0, 0.3, 0.0, v), &us, 0.1) {
            prop_assert_eq!(st.y, 0.3);
            prop_assert_eq!(st.heading, 0.0);
        }
    }

    #[test]
    fn features_are_nonnegative(ur in prop::collection::vec(control(), 10), uh in prop::collection::vec(control(), 10)) {
        let sc = Scenario::builtin("lane_change_slow").unwrap();
        let scene = sc.scene::<f64>();
        for who in [Perspective::Robot, Perspective::Human] {
            let f = cumulative_features(&scene, &ur, &uh, who).to_array();
            prop_assert!(f.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn cost_is_linear_and_monotone(
        ur in prop::collection::vec(control(), 10),
        uh in prop::collection::vec(control(), 10),
        a in prop::array::uniform5(0.0..5.0f64),
        b in prop::array::uniform5(0.0..5.0f64),
        alpha in 0.0..10.0f64,
    ) {
        let scene = Scenario::builtin("lane_change_slow").unwrap().scene::<f64>();
        let wa = CostWeights::from_feature_array(a, 0.0);
        let wb = CostWeights::from_feature_array(b, 0.0);
        let sum = CostWeights::from_feature_array(std::array::from_fn(|i| a[i] + b[i]), 0.0);
        let c = |w: &CostWeights| cumulative_cost(&scene, &ur, &uh, w, Perspective::Robot);
        let (ca, cb, cs) = (c(&wa), c(&wb), c(&sum));
        prop_assert!((cs - ca - cb).abs() <= 1e-9 * cs.abs().max(1.0));
        prop_assert!((c(&wa.scaled(alpha)) - alpha * ca).abs() <= 1e-9 * (alpha * ca).abs().max(1.0));
        prop_assert!(cs >= ca - 1e-9 * ca.abs().max(1.0));
    }
}

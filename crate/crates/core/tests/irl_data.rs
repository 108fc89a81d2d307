use std::f64::consts::PI;

use courtesy::cost::cumulative_cost;
use courtesy::courtesy::courtesy_value;
use courtesy::data::{self, generate_synthetic_demos, med, reconstruct, split, SyntheticSpec};
use courtesy::irl::{self, CostLevel, DemoTerms, Demonstration, IrlConfig, N_PARAMS};
use courtesy::scenario::{default_robot_weights, Scenario};
use courtesy::{AgentState, Control, CostWeights, CourtesyMode, Perspective, VehicleModel, VehicleParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const LAMBDA: f64 = 1000.0;

fn spec(lambda: f64, length: usize) -> SyntheticSpec {
    let mut s = SyntheticSpec::new(Scenario::builtin("lane_change_slow").unwrap(), default_robot_weights(), lambda, length);
    s.mode = CourtesyMode::NotThere;
    s
}

fn config(s: &SyntheticSpec, courtesy: bool) -> IrlConfig {
    IrlConfig { use_courtesy_feature: courtesy, courtesy_mode: s.mode, other_weights: s.other_weights, ..IrlConfig::default() }
}

fn demos(lambda: f64, count: usize, seed: u64) -> (SyntheticSpec, Vec<Demonstration>) {
    let s = spec(lambda, 12);
    let (d, skipped) = generate_synthetic_demos(&s, count, seed).unwrap();
    assert_eq!(skipped, 0);
    (s, d)
}

fn truth(lambda: f64) -> CostWeights {
    default_robot_weights().with_courtesy(lambda)
}

#[test]
fn zero_weights_give_the_jitter_gaussian() {
    let (s, d) = demos(LAMBDA, 1, 1);
    for level in [CostLevel::Excess, CostLevel::Total] {
        let cfg = IrlConfig { cost_level: level, ..config(&s, true) };
        let t = irl::demo_terms(&d[0], &cfg).unwrap();
        let dim = t.dim() as f64;
        let got = irl::log_likelihood(&[0.0; N_PARAMS], &t, &cfg).unwrap();
        let want = 0.5 * dim * cfg.hessian_jitter.ln() - 0.5 * dim * (2.0 * PI).ln();
        assert!((got - want).abs() < 1e-9, "{level:?}: {got} vs {want}");
    }
}

/// One quadratic feature `1/2 u^T A u + b^T u + c` evaluated at `u = 0`.
fn quadratic_terms(a: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> DemoTerms {
    let n = b.len();
    let mut features = [0.0; N_PARAMS];
    features[1] = c;
    let mut gradients = vec![DVector::zeros(n); N_PARAMS];
    let mut hessians = vec![DMatrix::zeros(n, n); N_PARAMS];
    gradients[1] = b.clone();
    hessians[1] = a.clone();
    DemoTerms { features, gradients, hessians, alt_cost: 0.0 }
}

#[test]
fn quadratic_feature_matches_the_gaussian_density() {
    let a = DMatrix::from_row_slice(4, 4, &[3.0, 0.5, 0.0, 0.2, 0.5, 2.0, 0.3, 0.0, 0.0, 0.3, 1.5, 0.1, 0.2, 0.0, 0.1, 4.0]);
    let b = DVector::from_vec(vec![0.4, -0.2, 0.1, 0.3]);
    let c = 2.5;
    let t = quadratic_terms(&a, &b, c);
    for w in [0.5, 1.0, 3.0] {
        let mut theta = [0.0; N_PARAMS];
        theta[1] = w;
        // Demo at u = 0 under p(u) ~ exp(-w q(u)): a Gaussian with precision
        // wA and mean -A^-1 b.
        let precision = &a * w;
        let mean = -a.clone().lu().solve(&b).unwrap();
        let quad = (mean.transpose() * &precision * &mean)[(0, 0)];
        let gaussian = -0.5 * quad + 0.5 * precision.clone().lu().determinant().ln() - 2.0 * (2.0 * PI).ln();
        let excess = irl::log_likelihood(&theta, &t, &IrlConfig::default()).unwrap();
        assert!((excess - gaussian).abs() < 1e-4, "excess {excess} vs {gaussian}");

        let total_cfg = IrlConfig { cost_level: CostLevel::Total, ..IrlConfig::default() };
        let total = irl::log_likelihood(&theta, &t, &total_cfg).unwrap();
        let want = -w * c + 0.5 * precision.lu().determinant().ln() - 2.0 * (2.0 * PI).ln();
        assert!((total - want).abs() < 1e-4, "total {total} vs {want}");
    }
}

#[test]
fn generating_weights_leave_no_excess_cost() {
    let (s, d) = demos(LAMBDA, 4, 2);
    let cfg = config(&s, true);
    let theta = irl::weights_to_params(&truth(LAMBDA));
    for demo in &d {
        let t = irl::demo_terms(demo, &cfg).unwrap();
        let g = t.gradient(&theta);
        let scale: f64 = (0..N_PARAMS).map(|j| theta[j] * t.gradients[j].norm()).sum();
        assert!(g.norm() < 1e-2 * scale, "{}: |g| {} of {scale}", demo.id, g.norm());
    }
}

#[test]
fn generating_weights_reproduce_their_demos() {
    let (s, d) = demos(LAMBDA, 4, 3);
    let report = irl::evaluate(&truth(LAMBDA), &d, &config(&s, true)).unwrap();
    assert_eq!(report.failed, 0);
    assert!(report.mean_med < 1e-3, "{}", report.mean_med);
    for row in &report.rows {
        for (p, q) in row.planned_gaps.iter().zip(&row.demo_gaps) {
            assert!((p - q).abs() < 1e-2);
        }
    }
}

#[test]
fn generator_wins_the_ab_comparison() {
    let (s, d) = demos(LAMBDA, 4, 4);
    let cfg = config(&s, true);
    let other = CostWeights { speed: 40.0, safety: 5.0, ..truth(LAMBDA) };
    let a = irl::evaluate(&truth(LAMBDA), &d, &cfg).unwrap();
    let b = irl::evaluate(&other, &d, &cfg).unwrap();
    assert!(a.mean_med < b.mean_med, "generator {} other {}", a.mean_med, b.mean_med);
}

#[test]
fn rescaled_weights_plan_the_same_trajectory() {
    let (s, d) = demos(LAMBDA, 2, 5);
    let cfg = config(&s, true);
    let w = truth(LAMBDA);
    for demo in &d {
        let a = irl::plan_demo(&w, demo, &cfg).unwrap();
        let b = irl::plan_demo(&w.scaled(0.1), demo, &cfg).unwrap();
        let pa: Vec<[f64; 2]> = demo.rollout(&a).iter().map(|s| s.position()).collect();
        let pb: Vec<[f64; 2]> = demo.rollout(&b).iter().map(|s| s.position()).collect();
        assert!(med(&pa, &pb).unwrap() < 1e-3);
    }
}

#[test]
fn synthetic_generation_is_deterministic() {
    let s = spec(LAMBDA, 10);
    let (a, _) = generate_synthetic_demos(&s, 1, 9).unwrap();
    let (b, _) = generate_synthetic_demos(&s, 1, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn courteous_demos_leave_larger_gaps() {
    let merge_gap = |lambda: f64| {
        let s = spec(lambda, 40);
        let (d, _) = generate_synthetic_demos(&s, 4, 6).unwrap();
        // Bumper clearance, whichever car is in front, on entering the
        // target lane.
        let clearance = |demo: &Demonstration| {
            let len = demo.vehicle.length;
            let pos = demo.demonstrated_positions();
            let goal = &demo.human_goal;
            let k = pos.iter().position(|p| goal.lane.project(*p).distance < 0.5 * goal.lane_width).expect("demo never merges");
            (irl::following_gaps(demo, &pos)[k] + len).abs() - len
        };
        let gaps: Vec<f64> = d.iter().map(clearance).collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let selfish = merge_gap(0.0);
    let courteous = merge_gap(LAMBDA);
    assert!(courteous > selfish, "courteous {courteous} selfish {selfish}");
}

#[test]
fn demos_are_local_optima_of_the_generating_cost() {
    let (s, d) = demos(LAMBDA, 2, 7);
    let cfg = config(&s, true);
    let own = default_robot_weights();
    let lim = d[0].limits;
    for demo in &d {
        let scene = demo.scene();
        let alt = irl::demo_alt_cost(demo, &cfg).unwrap();
        let cost = |u: &[Control]| {
            cumulative_cost(&scene, u, &demo.robot_controls, &own, Perspective::Robot)
                + LAMBDA * courtesy_value(&scene, u, &demo.robot_controls, &s.other_weights, alt)
        };
        let base = cost(&demo.human_controls);
        let tol = 1e-6 * (1.0 + base.abs());
        for k in 0..demo.len() {
            for dir in [-1e-4, 1e-4] {
                for steer in [false, true] {
                    let mut u = demo.human_controls.clone();
                    if steer {
                        u[k].steer = (u[k].steer + dir).clamp(-lim.steer_max, lim.steer_max);
                    } else {
                        u[k].accel = (u[k].accel + dir).clamp(lim.accel_min, lim.accel_max);
                    }
                    assert!(cost(&u) >= base - tol, "{} step {k}: {} < {base}", demo.id, cost(&u));
                }
            }
        }
    }
}

#[test]
fn demo_file_round_trip() {
    let (_, d) = demos(LAMBDA, 2, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demos.json");
    data::save_demos(&path, &d).unwrap();
    assert_eq!(data::load_demos(&path).unwrap(), d);
}

fn positions() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| [x, y]), 1..40)
}

proptest! {
    #[test]
    fn med_is_a_symmetric_nonnegative_distance(a in positions(), dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
        let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let ab = med(&a, &b).unwrap();
        prop_assert_eq!(ab, med(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - dx.hypot(dy)).abs() < 1e-9);
        prop_assert_eq!(med(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn split_is_a_reproducible_partition(n in 1usize..200, frac in 0.0..1.0f64, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let n_train = (frac * n as f64) as usize;
        let (train, test) = split(&items, n_train, seed).unwrap();
        prop_assert_eq!(train.len(), n_train);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        prop_assert_eq!(all, items.clone());
        prop_assert_eq!(split(&items, n_train, seed).unwrap(), (train, test));
    }

    #[test]
    fn reconstructed_controls_replay_smooth_paths(
        v in 0.2..1.0f64,
        curve in -0.3..0.3f64,
        wobble in -0.05..0.05f64,
        len in 5usize..40,
    ) {
        let dt = 0.1;
        let pos: Vec<[f64; 2]> = (0..len + 2)
            .map(|k| {
                let t = k as f64 * dt;
                [v * t, curve * t * t + wobble * (3.0 * t).sin()]
            })
            .collect();
        let vehicle = VehicleParams::default();
        let (states, controls) = reconstruct(&pos, dt, vehicle.wheelbase);
        let limits = courtesy::ControlLimits { accel_min: -1e3, accel_max: 1e3, steer_max: 1.5, speed_max: 1e3 };
        let model = VehicleModel::new(vehicle, limits);
        let replay: Vec<AgentState> = model.rollout_agent(&states[0], &controls, dt);
        for (s, p) in replay.iter().zip(&pos) {
            prop_assert!((s.x - p[0]).hypot(s.y - p[1]) < 1e-9);
        }
    }
}

//! Closed-loop receding-horizon simulation: plan, execute the first control
//! of every agent, replan.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::best_response::{human_best_response, respond};
use crate::cost::{cumulative_cost, CostWeights, Perspective, Scene};
use crate::courtesy::{alternative_costs, plan_courteous, CourtesyMode, PlannerResult, WarmStart};
use crate::dynamics::{AgentState, Control, JointState, VehicleModel};
use crate::error::{Error, Result};
use crate::geometry::footprint_gap;
use crate::optimizer::{flatten, minimize_multistart, unflatten, Bounds, GradObjective};
use crate::scenario::{Agent, Scenario, ThirdPartyPolicy};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Evaluate all three alternative costs at every step and count ordering
    /// violations (slow; for diagnostics).
    pub check_alternative_order: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeOrder {
    Ahead,
    Behind,
    None,
}

impl MergeOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            MergeOrder::Ahead => "ahead",
            MergeOrder::Behind => "behind",
            MergeOrder::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// State at the start of the step.
    pub state: JointState,
    pub robot_control: Control,
    pub human_control: Control,
    pub other_controls: Vec<Control>,
    pub planner: PlannerResult,
    /// The footprints of robot and human overlap.
    pub overlap: bool,
    /// `[not_there, collaborative, maintain]`, when checked.
    pub alternatives: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Bumper gap to the human while sharing its lane; zero on collision.
    pub min_gap: f64,
    pub human_min_accel: f64,
    /// Mean of the planner's courtesy value over the run.
    pub inconvenience: f64,
    pub merge_order: MergeOrder,
    pub human_avg_speed: f64,
    pub collision: bool,
    /// Realized cost of the executed trajectories under each agent's weights.
    pub human_cost: f64,
    pub robot_cost: f64,
    /// First-passage time of each configured event line, `None` if never crossed.
    pub events: BTreeMap<String, Option<f64>>,
    pub order_violations: usize,
}

impl Metrics {
    /// Which of two events happened first; `None` when neither happened.
    pub fn first_of<'a>(&self, a: &'a str, b: &'a str) -> Option<&'a str> {
        let ta = self.events.get(a).copied().flatten();
        let tb = self.events.get(b).copied().flatten();
        match (ta, tb) {
            (Some(x), Some(y)) => Some(if x <= y { a } else { b }),
            (Some(_), None) => Some(a),
            (None, Some(_)) => Some(b),
            (None, None) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub scenario: String,
    pub mode: CourtesyMode,
    pub lambda: f64,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub final_state: JointState,
    pub metrics: Metrics,
}

impl SimLog {
    /// States at `t = 0..=duration`.
    pub fn states(&self) -> Vec<JointState> {
        let mut s: Vec<JointState> = self.records.iter().map(|r| r.state.clone()).collect();
        s.push(self.final_state.clone());
        s
    }
}

#[derive(Debug, thiserror::Error)]
#[error("planner failed at step {step}: {source}")]
pub struct SimFailure {
    pub step: usize,
    #[source]
    pub source: Error,
    pub log: Box<SimLog>,
}

fn shifted(plan: &[Control], n: usize) -> Vec<Control> {
    let mut v: Vec<Control> = plan.iter().skip(1).copied().collect();
    let last = plan.last().copied().unwrap_or_default();
    v.resize(n, last);
    v
}

/// Decision state carried between steps.
struct Runner<'a> {
    sc: &'a Scenario,
    model: VehicleModel,
    state: JointState,
    robot_prev: Control,
    human_prev: Control,
    other_prev: Vec<Control>,
    robot_plan: Option<Vec<Control>>,
    human_plan: Option<Vec<Control>>,
    other_plans: Vec<Option<Vec<Control>>>,
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario) -> Self {
        Self {
            sc,
            model: sc.model(),
            state: sc.initial_state(),
            robot_prev: Control::zero(),
            human_prev: Control::zero(),
            other_prev: vec![Control::zero(); sc.others.len()],
            robot_plan: None,
            human_plan: None,
            other_plans: vec![None; sc.others.len()],
        }
    }

    fn other_prediction(&self, i: usize, t: usize) -> Vec<AgentState> {
        let n = self.sc.horizon;
        let controls: Vec<Control> = match (&self.sc.others[i].policy, &self.other_plans[i]) {
            (ThirdPartyPolicy::Scripted { controls }, _) => {
                (0..n).map(|k| controls.get(t + k).copied().unwrap_or_default()).collect()
            }
            (ThirdPartyPolicy::Responsive { .. }, Some(plan)) => shifted(plan, n),
            (ThirdPartyPolicy::Responsive { .. }, None) => vec![Control::zero(); n],
        };
        self.model.rollout_agent(&self.state.others[i], &controls, self.sc.dt)
    }

    fn scene(&self, t: usize) -> Scene {
        let mut scene = Scene::new(self.model, self.sc.dt, self.state.clone(), self.sc.robot_goal(), self.sc.human_goal());
        scene.robot_prev = self.robot_prev;
        scene.human_prev = self.human_prev;
        scene.others = (0..self.sc.others.len()).map(|i| self.other_prediction(i, t)).collect();
        scene
    }

    fn warm(&self) -> WarmStart {
        let n = self.sc.horizon;
        WarmStart {
            robot: self.robot_plan.as_ref().map(|p| shifted(p, n)),
            human: self.human_plan.as_ref().map(|p| shifted(p, n)),
        }
    }

    /// The responsive third party `i` best-responds to the robot plan, with
    /// the human (and remaining third parties) as predicted context.
    fn third_party_plan(&self, i: usize, t: usize, weights: &CostWeights, u_robot: &[Control], u_human: &[Control]) -> Result<Vec<Control>> {
        let sc = self.sc;
        let spec = &sc.others[i];
        let lane = spec.target_lane.as_deref().unwrap_or(&sc.human.target_lane);
        let mut x0 = JointState::new(self.state.robot, self.state.others[i]);
        let mut others = vec![self.model.rollout_agent(&self.state.human, u_human, sc.dt)];
        x0.others.push(self.state.human);
        for j in 0..sc.others.len() {
            if j != i {
                x0.others.push(self.state.others[j]);
                others.push(self.other_prediction(j, t));
            }
        }
        let mut scene = Scene::new(self.model, sc.dt, x0, sc.robot_goal(), sc.goal(lane, spec.desired_speed));
        scene.robot_prev = self.robot_prev;
        scene.human_prev = self.other_prev[i];
        scene.others = others;
        let warm = self.other_plans[i].as_ref().map(|p| shifted(p, sc.horizon));
        human_best_response(&scene, u_robot, weights, &sc.planner.optimizer, warm.as_deref())
    }

    fn advance(&mut self, u_robot: Control, u_human: Control, u_others: &[Control]) -> (Control, Control, Vec<Control>) {
        let dt = self.sc.dt;
        let lim = &self.model.limits;
        let (ur, _) = lim.clamp(u_robot);
        let (uh, _) = lim.clamp(u_human);
        let uo: Vec<Control> = u_others.iter().map(|u| lim.clamp(*u).0).collect();
        self.state.robot = self.model.step(&self.state.robot, ur, dt).state;
        self.state.human = self.model.step(&self.state.human, uh, dt).state;
        for (s, u) in self.state.others.iter_mut().zip(&uo) {
            *s = self.model.step(s, *u, dt).state;
        }
        self.robot_prev = ur;
        self.human_prev = uh;
        self.other_prev = uo.clone();
        (ur, uh, uo)
    }
}

/// Runs the closed loop for `scenario.duration` steps.
pub fn simulate(scenario: &Scenario, settings: &SimSettings) -> std::result::Result<SimLog, SimFailure> {
    let sc = scenario;
    let theta_r = sc.robot_weights::<f64>();
    let theta_h = sc.human_weights::<f64>();
    let mut run = Runner::new(sc);
    let mut records = Vec::with_capacity(sc.duration);
    let mut planner = sc.planner.clone();
    planner.optimizer.seed = sc.seed ^ planner.optimizer.seed;

    let fail = |step: usize, source: Error, records: Vec<StepRecord>, final_state: JointState| SimFailure {
        step,
        source,
        log: Box::new(finish(sc, records, final_state)),
    };

    for t in 0..sc.duration {
        let scene = run.scene(t);
        let prev_seq = (t > 0).then(|| vec![run.robot_prev; sc.horizon]);
        let plan = match plan_courteous(
            &scene,
            sc.horizon,
            &theta_r,
            &theta_h,
            sc.courtesy.lambda,
            sc.courtesy.mode,
            prev_seq.as_deref(),
            &planner,
            &run.warm(),
        ) {
            Ok(p) => p,
            Err(e) => return Err(fail(t, e, records, run.state.clone())),
        };
        let human_warm = run.warm().human;
        let u_human = match human_best_response(&scene, &plan.u_robot, &theta_h, &planner.optimizer, human_warm.as_deref()) {
            Ok(u) => u,
            Err(e) => return Err(fail(t, e, records, run.state.clone())),
        };
        let alternatives = if settings.check_alternative_order {
            match alternative_costs(&scene, sc.horizon, &theta_h, prev_seq.as_deref(), &planner.optimizer) {
                Ok(a) => Some([a[0].cost, a[1].cost, a[2].cost]),
                Err(e) => return Err(fail(t, e, records, run.state.clone())),
            }
        } else {
            None
        };

        let mut other_controls = Vec::with_capacity(sc.others.len());
        for i in 0..sc.others.len() {
            let u = match &sc.others[i].policy {
                ThirdPartyPolicy::Scripted { controls } => controls.get(t).copied().unwrap_or_default(),
                ThirdPartyPolicy::Responsive { weights } => {
                    match run.third_party_plan(i, t, weights, &plan.u_robot, &u_human) {
                        Ok(p) => {
                            let first = p[0];
                            run.other_plans[i] = Some(p);
                            first
                        }
                        Err(e) => return Err(fail(t, e, records, run.state.clone())),
                    }
                }
            };
            other_controls.push(u);
        }

        let state = run.state.clone();
        let overlap = footprint_gap(&state.robot, &state.human, sc.vehicle.length, sc.vehicle.width) == 0.0;
        let (ur, uh, uo) = run.advance(plan.u_robot[0], u_human[0], &other_controls);
        run.robot_plan = Some(plan.u_robot.clone());
        run.human_plan = Some(u_human);
        records.push(StepRecord {
            step: t,
            time: t as f64 * sc.dt,
            state,
            robot_control: ur,
            human_control: uh,
            other_controls: uo,
            planner: plan,
            overlap,
            alternatives,
        });
    }
    Ok(finish(sc, records, run.state))
}

fn crossing_fraction(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [b[0] - a[0], b[1] - a[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = [a[0] - p[0], a[1] - p[1]];
    let t = (w[0] * s[1] - w[1] * s[0]) / denom;
    let u = (w[0] * r[1] - w[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

fn finish(sc: &Scenario, records: Vec<StepRecord>, final_state: JointState) -> SimLog {
    let mut states: Vec<&JointState> = records.iter().map(|r| &r.state).collect();
    states.push(&final_state);
    let (len, wid) = (sc.vehicle.length, sc.vehicle.width);

    let gaps: Vec<f64> = states.iter().map(|s| footprint_gap(&s.robot, &s.human, len, wid)).collect();
    let collision = gaps.iter().any(|g| *g == 0.0);
    // Bumper gap: clearance on the steps where the robot sits in the human's
    // lane footprint. A run that never shares the lane falls back to clearance.
    let shared = |s: &JointState| {
        let (sn, cs) = s.human.heading.sin_cos();
        let (dx, dy) = (s.robot.x - s.human.x, s.robot.y - s.human.y);
        (dx * sn - dy * cs).abs() < wid
    };
    let bumper = states
        .iter()
        .zip(&gaps)
        .filter(|(s, _)| shared(s))
        .map(|(_, g)| *g)
        .fold(f64::INFINITY, f64::min);
    let min_gap = if collision {
        0.0
    } else if bumper.is_finite() {
        bumper
    } else {
        gaps.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let human_min_accel = records.iter().map(|r| r.human_control.accel).fold(0.0, f64::min);
    let inconvenience = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.planner.courtesy_value).sum::<f64>() / records.len() as f64
    };
    let human_avg_speed = states.iter().map(|s| s.human.speed).sum::<f64>() / states.len() as f64;

    let merge_order = match &sc.metrics.merge_lane {
        None => MergeOrder::None,
        Some(lane) => {
            let l = &sc.lanes[lane];
            states
                .iter()
                .find(|s| l.centerline.project(s.robot.position()).distance < l.width / 2.0)
                .map(|s| {
                    let r = l.centerline.project(s.robot.position()).station;
                    let h = l.centerline.project(s.human.position()).station;
                    if r >= h {
                        MergeOrder::Ahead
                    } else {
                        MergeOrder::Behind
                    }
                })
                .unwrap_or(MergeOrder::None)
        }
    };

    let mut events = BTreeMap::new();
    for ev in &sc.metrics.events {
        let pos = |s: &JointState| match ev.agent {
            Agent::Robot => s.robot.position(),
            Agent::Human => s.human.position(),
        };
        let hit = states.windows(2).enumerate().find_map(|(k, w)| {
            crossing_fraction(pos(w[0]), pos(w[1]), ev.a, ev.b).map(|f| (k as f64 + f) * sc.dt)
        });
        events.insert(ev.name.clone(), hit);
    }

    let (human_cost, robot_cost) = realized_costs(sc, &records);
    let order_violations = records
        .iter()
        .filter_map(|r| r.alternatives)
        .filter(|a| !ordering_holds(a, ORDER_TOLERANCE))
        .count();
    if order_violations > 0 {
        warn!("{}: alternative-cost ordering violated on {order_violations} steps", sc.name);
    }

    SimLog {
        scenario: sc.name.clone(),
        mode: sc.courtesy.mode,
        lambda: sc.courtesy.lambda,
        dt: sc.dt,
        metrics: Metrics {
            min_gap,
            human_min_accel,
            inconvenience,
            merge_order,
            human_avg_speed,
            collision,
            human_cost,
            robot_cost,
            events,
            order_violations,
        },
        records,
        final_state,
    }
}

/// Absolute slack allowed when comparing alternative costs.
pub const ORDER_TOLERANCE: f64 = 1e-3;

/// `not_there <= collaborative <= maintain` up to `tol`.
pub fn ordering_holds(a: &[f64; 3], tol: f64) -> bool {
    a[0] <= a[1] + tol && a[1] <= a[2] + tol
}

/// Executed trajectories scored from the initial state, with third parties
/// replayed exactly.
fn realized_costs(sc: &Scenario, records: &[StepRecord]) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let model: VehicleModel = sc.model();
    let mut scene = Scene::new(model, sc.dt, records[0].state.clone(), sc.robot_goal(), sc.human_goal());
    scene.others = (0..sc.others.len())
        .map(|i| {
            let mut seq: Vec<AgentState> = records.iter().map(|r| r.state.others[i]).collect();
            let last = records.last().unwrap();
            seq.push(model.step(&last.state.others[i], last.other_controls[i], sc.dt).state);
            seq
        })
        .collect();
    let ur: Vec<Control> = records.iter().map(|r| r.robot_control).collect();
    let uh: Vec<Control> = records.iter().map(|r| r.human_control).collect();
    (
        cumulative_cost(&scene, &ur, &uh, &sc.human_weights(), Perspective::Human),
        cumulative_cost(&scene, &ur, &uh, &sc.robot_weights(), Perspective::Robot),
    )
}

/// The human's realized cost when the whole run takes place in the
/// alternative world of `mode`: the robot is absent, optimizes the human's
/// cost jointly with the human, or holds its initial speed.
pub fn alternative_world_cost(scenario: &Scenario, mode: CourtesyMode) -> Result<f64> {
    let sc = scenario;
    let theta_h = sc.human_weights::<f64>();
    let mut run = Runner::new(sc);
    let mut records = Vec::with_capacity(sc.duration);
    let opt = &sc.planner.optimizer;
    let n = sc.horizon;
    for t in 0..sc.duration {
        let mut scene = run.scene(t);
        let warm = run.warm();
        let (u_robot, u_human) = match mode {
            CourtesyMode::NotThere => {
                scene.robot_present = false;
                let zeros = vec![Control::zero(); n];
                let (uh, _) = respond(&scene, Perspective::Human, &zeros, &theta_h, opt, warm.human.as_deref())?;
                (zeros, uh)
            }
            CourtesyMode::MaintainBehavior => {
                let zeros = vec![Control::zero(); n];
                let (uh, _) = respond(&scene, Perspective::Human, &zeros, &theta_h, opt, warm.human.as_deref())?;
                (zeros, uh)
            }
            CourtesyMode::Collaborative => {
                let ur0 = warm.robot.unwrap_or_else(|| vec![Control::zero(); n]);
                let uh0 = warm.human.unwrap_or_else(|| vec![Control::zero(); n]);
                joint_human_optimum(&scene, &theta_h, &ur0, &uh0, opt)?
            }
        };
        let mut other_controls = Vec::with_capacity(sc.others.len());
        for i in 0..sc.others.len() {
            let u = match &sc.others[i].policy {
                ThirdPartyPolicy::Scripted { controls } => controls.get(t).copied().unwrap_or_default(),
                ThirdPartyPolicy::Responsive { weights } => {
                    let p = run.third_party_plan(i, t, weights, &u_robot, &u_human)?;
                    let first = p[0];
                    run.other_plans[i] = Some(p);
                    first
                }
            };
            other_controls.push(u);
        }
        let state = run.state.clone();
        let (ur, uh, uo) = run.advance(u_robot[0], u_human[0], &other_controls);
        run.robot_plan = Some(u_robot);
        run.human_plan = Some(u_human);
        records.push((state, ur, uh, uo));
    }
    if records.is_empty() {
        return Ok(0.0);
    }
    let model: VehicleModel = sc.model();
    let mut scene = Scene::new(model, sc.dt, records[0].0.clone(), sc.robot_goal(), sc.human_goal());
    scene.robot_present = mode != CourtesyMode::NotThere;
    scene.others = (0..sc.others.len())
        .map(|i| {
            let mut seq: Vec<AgentState> = records.iter().map(|r| r.0.others[i]).collect();
            seq.push(run.state.others[i]);
            seq
        })
        .collect();
    let ur: Vec<Control> = records.iter().map(|r| r.1).collect();
    let uh: Vec<Control> = records.iter().map(|r| r.2).collect();
    Ok(cumulative_cost(&scene, &ur, &uh, &theta_h, Perspective::Human))
}

fn joint_human_optimum(
    scene: &Scene,
    theta_h: &CostWeights,
    ur0: &[Control],
    uh0: &[Control],
    opt: &crate::optimizer::OptimizerSettings,
) -> Result<(Vec<Control>, Vec<Control>)> {
    let n = ur0.len();
    let obj = GradObjective(|z: &[f64], g: Option<&mut [f64]>| {
        let ur = unflatten(&z[..2 * n]);
        let uh = unflatten(&z[2 * n..]);
        match g {
            None => cumulative_cost(scene, &ur, &uh, theta_h, Perspective::Human),
            Some(g) => {
                let cg = crate::cost::cost_gradient(scene, &ur, &uh, theta_h, Perspective::Human);
                g[..2 * n].copy_from_slice(&flatten(&cg.robot));
                g[2 * n..].copy_from_slice(&flatten(&cg.human));
                cg.value
            }
        }
    });
    let b = Bounds::for_controls(&scene.model.limits, n);
    let mut init = flatten(ur0);
    init.extend(flatten(uh0));
    let m = minimize_multistart(&obj, &init, &[], &b.stack(&b), opt)?;
    Ok((unflatten(&m.point[..2 * n]), unflatten(&m.point[2 * n..])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// One simulation per `lambda`, run on `workers` threads; rows come back in
/// input order.
pub fn sweep_lambda(scenario: &Scenario, lambdas: &[f64], settings: &SimSettings, workers: usize) -> Result<Vec<(SweepRow, Option<SimLog>)>> {
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidConfig("lambda values must be nonnegative".into()));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("lambda grid must be ascending".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        lambdas
            .par_iter()
            .map(|&lambda| {
                let mut sc = scenario.clone();
                sc.courtesy.lambda = lambda;
                match simulate(&sc, settings) {
                    Ok(log) => (SweepRow { lambda, metrics: Some(log.metrics.clone()), error: None }, Some(log)),
                    Err(f) => (SweepRow { lambda, metrics: None, error: Some(f.to_string()) }, None),
                }
            })
            .collect()
    });
    Ok(rows)
}

/// `<scenario>_<mode>_<lambda>.csv`
pub fn log_file_name(scenario: &str, mode: CourtesyMode, lambda: f64) -> String {
    format!("{scenario}_{mode}_{lambda}.csv")
}

/// Per-step log. One row per step; the final state is the last row with
/// empty control and planner columns.
pub fn write_log_csv<W: Write>(log: &SimLog, out: W) -> Result<()> {
    let n_others = log.final_state.others.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["step", "time"].iter().map(|s| s.to_string()).collect();
    let agent_cols = |p: &str| vec![format!("{p}_x"), format!("{p}_y"), format!("{p}_heading"), format!("{p}_speed")];
    header.extend(agent_cols("robot"));
    header.extend(agent_cols("human"));
    for i in 0..n_others {
        header.extend(agent_cols(&format!("other{i}")));
    }
    header.extend(["robot_accel", "robot_steer", "human_accel", "human_steer"].iter().map(|s| s.to_string()));
    for i in 0..n_others {
        header.push(format!("other{i}_accel"));
        header.push(format!("other{i}_steer"));
    }
    header.extend(
        ["selfish_cost", "courtesy_value", "alt_cost", "compound_cost", "iterations", "converged", "overlap"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;

    let state_cells = |s: &JointState| {
        let mut c = Vec::new();
        for a in std::iter::once(&s.robot).chain(std::iter::once(&s.human)).chain(s.others.iter()) {
            c.extend([a.x, a.y, a.heading, a.speed].iter().map(|v| v.to_string()));
        }
        c
    };
    for r in &log.records {
        let mut row = vec![r.step.to_string(), r.time.to_string()];
        row.extend(state_cells(&r.state));
        for u in [r.robot_control, r.human_control].iter().chain(r.other_controls.iter()) {
            row.push(u.accel.to_string());
            row.push(u.steer.to_string());
        }
        let p = &r.planner;
        row.extend([
            p.selfish_cost.to_string(),
            p.courtesy_value.to_string(),
            p.alt_cost.to_string(),
            p.compound_cost.to_string(),
            p.iterations.to_string(),
            p.converged.to_string(),
            r.overlap.to_string(),
        ]);
        w.write_record(&row)?;
    }
    let k = log.records.len();
    let mut row = vec![k.to_string(), (k as f64 * log.dt).to_string()];
    row.extend(state_cells(&log.final_state));
    row.resize(header.len(), String::new());
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "lambda",
    "min_gap",
    "human_min_accel",
    "inconvenience",
    "merge_order",
    "human_avg_speed",
    "collision",
    "human_cost",
    "robot_cost",
    "events",
    "error",
];

pub fn write_summary_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        let cells = match &r.metrics {
            Some(m) => {
                let events: Vec<String> = m
                    .events
                    .iter()
                    .map(|(k, v)| format!("{k}={}", v.map(|t| t.to_string()).unwrap_or_else(|| "never".into())))
                    .collect();
                vec![
                    r.lambda.to_string(),
                    m.min_gap.to_string(),
                    m.human_min_accel.to_string(),
                    m.inconvenience.to_string(),
                    m.merge_order.as_str().to_string(),
                    m.human_avg_speed.to_string(),
                    m.collision.to_string(),
                    m.human_cost.to_string(),
                    m.robot_cost.to_string(),
                    events.join(";"),
                    String::new(),
                ]
            }
            None => {
                let mut c = vec![r.lambda.to_string()];
                c.resize(SUMMARY_COLUMNS.len() - 1, String::new());
                c.push(r.error.clone().unwrap_or_default());
                c
            }
        };
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_file(log: &SimLog, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(log_file_name(&log.scenario, log.mode, log.lambda));
    write_log_csv(log, std::fs::File::create(&path)?)?;
    Ok(path)
}

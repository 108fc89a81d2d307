//! Road geometry, agent configuration and the built-in interaction scenarios.
//!
//! Scenarios are plain JSON. Any field can be overridden from a dotted path,
//! e.g. `courtesy.lambda=1000` or `human.initial.speed=0.9`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::{AgentGoal, CostWeights, Scene};
use crate::courtesy::{CourtesyMode, PlannerSettings};
use crate::dynamics::{AgentState, Control, ControlLimits, JointState, VehicleModel, VehicleParams};
use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::real::{lit, Real};

pub const BUILTIN_NAMES: [&str; 6] = [
    "lane_change_slow",
    "lane_change_fast",
    "left_turn",
    "right_turn_human",
    "blocked_overtake",
    "blocked_overtake_3agent",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub centerline: Polyline,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub initial: AgentState,
    pub target_lane: String,
    /// Defaults to the scenario speed limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_speed: Option<f64>,
    pub weights: CostWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThirdPartyPolicy {
    /// Fixed controls, one per simulation step; zero once exhausted.
    Scripted {
        #[serde(default)]
        controls: Vec<Control>,
    },
    /// Best response to the robot's plan with its own weights, predicting the
    /// human from the human's current plan.
    Responsive { weights: CostWeights },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtherSpec {
    pub initial: AgentState,
    pub policy: ThirdPartyPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_lane: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CourtesyConfig {
    pub mode: CourtesyMode,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Robot,
    Human,
}

/// A line segment whose first crossing by `agent` is recorded as event `name`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLine {
    pub name: String,
    pub agent: Agent,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSpec {
    /// Lane whose entry by the robot decides the merge order.
    pub merge_lane: Option<String>,
    pub events: Vec<EventLine>,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { merge_lane: None, events: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub lanes: BTreeMap<String, Lane>,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub limits: ControlLimits,
    pub dt: f64,
    pub horizon: usize,
    /// Number of simulation steps.
    pub duration: usize,
    pub robot: AgentSpec,
    pub human: AgentSpec,
    #[serde(default)]
    pub others: Vec<OtherSpec>,
    pub courtesy: CourtesyConfig,
    #[serde(default)]
    pub metrics: MetricSpec,
    #[serde(default)]
    pub planner: PlannerSettings,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn builtin(name: &str) -> Result<Self> {
        let s = match name {
            "lane_change_slow" => lane_change(name, 0.85, 0.1, 150),
            "lane_change_fast" => lane_change(name, 0.9, 0.0, 100),
            "left_turn" => left_turn(),
            "right_turn_human" => right_turn_human(),
            "blocked_overtake" => blocked_overtake(name, false),
            "blocked_overtake_3agent" => blocked_overtake(name, true),
            other => return Err(Error::UnknownScenario(other.to_string())),
        };
        Ok(s)
    }

    /// A built-in name or a path to a JSON scenario file.
    pub fn resolve(reference: &str) -> Result<Self> {
        if BUILTIN_NAMES.contains(&reference) {
            return Self::builtin(reference);
        }
        let path = Path::new(reference);
        if path.exists() {
            return Self::from_json(&std::fs::read_to_string(path)?);
        }
        Err(Error::UnknownScenario(reference.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `key=value` overrides. Values are parsed as JSON when possible
    /// and taken as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut root, key.trim(), value)?;
        }
        let s: Scenario =
            serde_json::from_value(root).map_err(|e| Error::InvalidConfig(format!("override produced invalid scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.courtesy.lambda >= 0.0) {
            return bad(format!("courtesy.lambda must be nonnegative, got {}", self.courtesy.lambda));
        }
        self.planner.optimizer.validate()?;
        for (name, lane) in &self.lanes {
            if !(lane.width > self.vehicle.width) {
                return bad(format!("lane `{name}` is narrower than a car"));
            }
            if lane.centerline.points.len() < 2 {
                return bad(format!("lane `{name}` needs at least two points"));
            }
        }
        let mut lanes_needed = vec![&self.robot.target_lane, &self.human.target_lane];
        lanes_needed.extend(self.others.iter().filter_map(|o| o.target_lane.as_ref()));
        if let Some(m) = &self.metrics.merge_lane {
            lanes_needed.push(m);
        }
        for l in lanes_needed {
            if !self.lanes.contains_key(l) {
                return bad(format!("unknown lane `{l}`"));
            }
        }
        for w in [&self.robot.weights, &self.human.weights] {
            if !w.is_valid() {
                return bad("weights must be finite and nonnegative".into());
            }
        }
        let mut states = vec![("robot", &self.robot.initial), ("human", &self.human.initial)];
        states.extend(self.others.iter().map(|o| ("other", &o.initial)));
        for (who, s) in states {
            if !(s.speed >= 0.0 && s.speed <= self.limits.speed_max) {
                return bad(format!("{who} initial speed {} outside [0, {}]", s.speed, self.limits.speed_max));
            }
            if !self.on_road(s) {
                return bad(format!("{who} starts off the road at ({}, {})", s.x, s.y));
            }
        }
        for o in &self.others {
            if let ThirdPartyPolicy::Responsive { weights } = &o.policy {
                if o.target_lane.is_none() {
                    return bad("responsive agents need a target lane".into());
                }
                if !weights.is_valid() {
                    return bad("weights must be finite and nonnegative".into());
                }
            }
        }
        Ok(())
    }

    pub fn on_road(&self, s: &AgentState) -> bool {
        self.lanes.values().any(|l| l.centerline.project(s.position()).distance <= l.width / 2.0 + 1e-9)
    }

    pub fn model<T: Real>(&self) -> VehicleModel<T> {
        VehicleModel::new(self.vehicle, self.limits).cast()
    }

    pub fn initial_state(&self) -> JointState {
        JointState {
            robot: self.robot.initial,
            human: self.human.initial,
            others: self.others.iter().map(|o| o.initial).collect(),
        }
    }

    pub fn goal<T: Real>(&self, lane: &str, desired_speed: Option<f64>) -> AgentGoal<T> {
        let l = &self.lanes[lane];
        AgentGoal {
            lane: l.centerline.cast(),
            lane_width: lit(l.width),
            desired_speed: lit(desired_speed.unwrap_or(self.limits.speed_max)),
        }
    }

    pub fn robot_goal<T: Real>(&self) -> AgentGoal<T> {
        self.goal(&self.robot.target_lane, self.robot.desired_speed)
    }

    pub fn human_goal<T: Real>(&self) -> AgentGoal<T> {
        self.goal(&self.human.target_lane, self.human.desired_speed)
    }

    /// Scene at the initial state with third parties predicted from their
    /// scripts (responsive agents hold speed).
    pub fn scene<T: Real>(&self) -> Scene<T> {
        let model = self.model::<f64>();
        let mut scene = Scene::new(model, self.dt, self.initial_state(), self.robot_goal(), self.human_goal());
        scene.others = self
            .others
            .iter()
            .map(|o| {
                let controls: Vec<Control> = match &o.policy {
                    ThirdPartyPolicy::Scripted { controls } => {
                        (0..self.horizon).map(|k| controls.get(k).copied().unwrap_or_default()).collect()
                    }
                    ThirdPartyPolicy::Responsive { .. } => vec![Control::zero(); self.horizon],
                };
                model.rollout_agent(&o.initial, &controls, self.dt)
            })
            .collect();
        scene.cast()
    }

    pub fn robot_weights<T: Real>(&self) -> CostWeights<T> {
        self.robot.weights.cast()
    }

    pub fn human_weights<T: Real>(&self) -> CostWeights<T> {
        self.human.weights.cast()
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| Error::InvalidConfig(format!("`{part}` in `{key}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidConfig(format!("index {idx} out of range ({len}) in `{key}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::InvalidConfig(format!("cannot descend into `{part}` of `{key}`"))),
        };
    }
    Err(Error::InvalidConfig("empty override key".into()))
}

const LANE_WIDTH: f64 = 0.37;

fn straight(a: [f64; 2], b: [f64; 2]) -> Lane {
    Lane { centerline: Polyline::segment(a, b), width: LANE_WIDTH }
}

fn lanes<const K: usize>(items: [(&str, Lane); K]) -> BTreeMap<String, Lane> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn default_robot_weights() -> CostWeights {
    CostWeights::new(10.0, 10.0, 0.05, 3.0, 30.0)
}

/// Human weights sit two orders of magnitude below the robot's, which puts
/// the courtesy switch-over inside the usual `0..=1e4` lambda grid.
pub fn default_human_weights() -> CostWeights {
    CostWeights::new(0.1, 0.1, 5e-5, 0.02, 0.1)
}

/// A human who holds its speed unless a conflict is close.
fn speed_keeping_human() -> CostWeights {
    CostWeights { speed: 1.0, ..default_human_weights() }
}

fn planner_defaults() -> PlannerSettings {
    PlannerSettings::default()
}

/// Two-lane road along +x. The robot starts in the left lane level with or a
/// little ahead of the human and merges right into the human's lane.
fn lane_change(name: &str, speed: f64, lead: f64, duration: usize) -> Scenario {
    Scenario {
        name: name.to_string(),
        lanes: lanes([("right", straight([-5.0, 0.0], [60.0, 0.0])), ("left", straight([-5.0, LANE_WIDTH], [60.0, LANE_WIDTH]))]),
        vehicle: VehicleParams::default(),
        limits: ControlLimits::default(),
        dt: 0.1,
        horizon: 10,
        duration,
        robot: AgentSpec {
            initial: AgentState::new(lead, LANE_WIDTH, 0.0, speed),
            target_lane: "right".into(),
            desired_speed: Some(0.9),
            weights: default_robot_weights(),
        },
        human: AgentSpec {
            initial: AgentState::new(0.0, 0.0, 0.0, speed),
            target_lane: "right".into(),
            desired_speed: Some(speed),
            weights: default_human_weights(),
        },
        others: Vec::new(),
        courtesy: CourtesyConfig { mode: CourtesyMode::NotThere, lambda: 0.0 },
        metrics: MetricSpec { merge_lane: Some("right".into()), events: Vec::new() },
        planner: planner_defaults(),
        seed: 0,
    }
}

/// Four-way crossing centered at the origin. The human drives east in the
/// lane `y = -w/2`; the robot drives west in `y = +w/2` and turns left into
/// the southbound lane `x = -w/2`, crossing the human's path.
fn left_turn() -> Scenario {
    let h = LANE_WIDTH / 2.0;
    let turn = Polyline::new(vec![[6.0, h], [0.3, h], [-0.05, 0.05], [-h, -0.3], [-h, -6.0]]);
    Scenario {
        name: "left_turn".into(),
        lanes: lanes([
            ("east", straight([-6.0, -h], [6.0, -h])),
            ("west_to_south", Lane { centerline: turn, width: LANE_WIDTH }),
            ("south", straight([-h, 6.0], [-h, -6.0])),
        ]),
        vehicle: VehicleParams::default(),
        limits: ControlLimits::default(),
        dt: 0.1,
        horizon: 10,
        duration: 50,
        robot: AgentSpec {
            initial: AgentState::new(0.55, h, std::f64::consts::PI, 0.6),
            target_lane: "west_to_south".into(),
            desired_speed: None,
            weights: default_robot_weights(),
        },
        human: AgentSpec {
            initial: AgentState::new(-1.8, -h, 0.0, 0.8),
            target_lane: "east".into(),
            desired_speed: Some(0.8),
            weights: speed_keeping_human(),
        },
        others: Vec::new(),
        courtesy: CourtesyConfig { mode: CourtesyMode::NotThere, lambda: 0.0 },
        metrics: MetricSpec {
            merge_lane: None,
            events: vec![
                EventLine { name: "robot_clear".into(), agent: Agent::Robot, a: [-1.0, -h - 0.25], b: [1.0, -h - 0.25] },
                EventLine { name: "human_clear".into(), agent: Agent::Human, a: [0.0, -1.0], b: [0.0, 1.0] },
            ],
        },
        planner: planner_defaults(),
        seed: 0,
    }
}

/// The human drives north in `x = +w/2` and turns right into the eastbound
/// lane `y = -w/2`; the robot drives east in that same lane from the west and
/// crosses the human's merge point.
fn right_turn_human() -> Scenario {
    let h = LANE_WIDTH / 2.0;
    let turn = Polyline::new(vec![[h, -6.0], [h, -0.5], [0.45, -0.25], [0.7, -h], [6.0, -h]]);
    Scenario {
        name: "right_turn_human".into(),
        lanes: lanes([
            ("east", straight([-6.0, -h], [6.0, -h])),
            ("north_to_east", Lane { centerline: turn, width: LANE_WIDTH }),
        ]),
        vehicle: VehicleParams::default(),
        limits: ControlLimits::default(),
        dt: 0.1,
        horizon: 10,
        duration: 50,
        robot: AgentSpec {
            initial: AgentState::new(-0.3, -h, 0.0, 0.6),
            target_lane: "east".into(),
            desired_speed: None,
            weights: default_robot_weights(),
        },
        human: AgentSpec {
            initial: AgentState::new(h, -0.9, std::f64::consts::FRAC_PI_2, 0.6),
            target_lane: "north_to_east".into(),
            desired_speed: Some(0.6),
            weights: default_human_weights(),
        },
        others: Vec::new(),
        courtesy: CourtesyConfig { mode: CourtesyMode::MaintainBehavior, lambda: 1e3 },
        metrics: MetricSpec {
            merge_lane: None,
            events: vec![
                EventLine { name: "robot_clear".into(), agent: Agent::Robot, a: [1.0, -1.0], b: [1.0, 1.0] },
                EventLine { name: "human_clear".into(), agent: Agent::Human, a: [1.0, -1.0], b: [1.0, 1.0] },
            ],
        },
        planner: planner_defaults(),
        seed: 0,
    }
}

/// Two-way road. The robot drives east in `y = -w/2` towards a stopped car
/// blocking its lane and must borrow the westbound lane, where the human is
/// oncoming.
fn blocked_overtake(name: &str, follower: bool) -> Scenario {
    let h = LANE_WIDTH / 2.0;
    let block_x = 1.2;
    let detour = Polyline::new(vec![
        [-6.0, -h],
        [block_x - 0.9, -h],
        [block_x - 0.45, h],
        [block_x + 0.45, h],
        [block_x + 0.9, -h],
        [8.0, -h],
    ]);
    let mut others = vec![OtherSpec {
        initial: AgentState::new(block_x, -h, 0.0, 0.0),
        policy: ThirdPartyPolicy::Scripted { controls: Vec::new() },
        target_lane: None,
        desired_speed: None,
    }];
    if follower {
        others.push(OtherSpec {
            initial: AgentState::new(3.05, h, std::f64::consts::PI, 0.7),
            policy: ThirdPartyPolicy::Responsive { weights: default_human_weights() },
            target_lane: Some("westbound".into()),
            desired_speed: Some(0.7),
        });
    }
    Scenario {
        name: name.to_string(),
        lanes: lanes([
            ("eastbound", straight([-6.0, -h], [8.0, -h])),
            ("westbound", straight([8.0, h], [-6.0, h])),
            ("detour", Lane { centerline: detour, width: LANE_WIDTH }),
        ]),
        vehicle: VehicleParams::default(),
        limits: ControlLimits::default(),
        dt: 0.1,
        horizon: 10,
        duration: 50,
        robot: AgentSpec {
            initial: AgentState::new(0.0, -h, 0.0, 0.6),
            target_lane: "detour".into(),
            desired_speed: None,
            weights: default_robot_weights(),
        },
        human: AgentSpec {
            initial: AgentState::new(2.3, h, std::f64::consts::PI, 0.7),
            target_lane: "westbound".into(),
            desired_speed: Some(0.7),
            weights: default_human_weights(),
        },
        others,
        courtesy: CourtesyConfig { mode: CourtesyMode::Collaborative, lambda: 0.0 },
        metrics: MetricSpec {
            merge_lane: None,
            events: vec![
                EventLine { name: "human_past_block".into(), agent: Agent::Human, a: [block_x - 0.45, -1.0], b: [block_x - 0.45, 1.0] },
                EventLine { name: "robot_enter_opposing".into(), agent: Agent::Robot, a: [-6.0, 0.0], b: [8.0, 0.0] },
            ],
        },
        planner: planner_defaults(),
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            s.validate().unwrap();
            let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
            assert_eq!(back, s, "{name}");
        }
    }

    #[test]
    fn lane_change_speeds() {
        let slow = Scenario::builtin("lane_change_slow").unwrap();
        assert_eq!(slow.robot.initial.speed, 0.85);
        assert_eq!(slow.human.initial.speed, 0.85);
        let fast = Scenario::builtin("lane_change_fast").unwrap();
        assert_eq!(fast.robot.initial.speed, 0.9);
        assert_eq!(fast.human.initial.speed, 0.9);
    }

    #[test]
    fn three_agent_variant_has_responsive_follower() {
        let s = Scenario::builtin("blocked_overtake_3agent").unwrap();
        assert_eq!(s.others.len(), 2);
        assert_eq!(s.others[0].initial.speed, 0.0);
        assert!(matches!(s.others[1].policy, ThirdPartyPolicy::Responsive { .. }));
        assert!(s.others[1].initial.x > s.human.initial.x);
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(Scenario::builtin("roundabout"), Err(Error::UnknownScenario(_))));
        assert!(matches!(Scenario::resolve("no/such/file.json"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn dotted_overrides() {
        let s = Scenario::builtin("lane_change_slow").unwrap();
        let o = s.with_overrides(&["courtesy.lambda=1000", "courtesy.mode=maintain", "human.initial.speed=0.9"]).unwrap();
        assert_eq!(o.courtesy.lambda, 1000.0);
        assert_eq!(o.courtesy.mode, CourtesyMode::MaintainBehavior);
        assert_eq!(o.human.initial.speed, 0.9);
        assert!(s.with_overrides(&["courtesy.lambda=-1"]).is_err());
        assert!(s.with_overrides(&["horizon=0"]).is_err());
        assert!(s.with_overrides(&["nonsense"]).is_err());
        let b = Scenario::builtin("blocked_overtake").unwrap();
        let o = b.with_overrides(&["others.0.initial.x=1.5"]).unwrap();
        assert_eq!(o.others[0].initial.x, 1.5);
    }

    #[test]
    fn off_road_start_rejected() {
        let s = Scenario::builtin("lane_change_slow").unwrap();
        assert!(s.with_overrides(&["human.initial.y=3.0"]).is_err());
        assert!(s.with_overrides(&["human.initial.speed=1.5"]).is_err());
    }

    #[test]
    fn scene_predicts_static_obstacle() {
        let s = Scenario::builtin("blocked_overtake").unwrap();
        let scene: Scene = s.scene();
        assert_eq!(scene.others.len(), 1);
        assert_eq!(scene.others[0].len(), s.horizon + 1);
        assert!(scene.others[0].iter().all(|st| *st == s.others[0].initial));
    }
}

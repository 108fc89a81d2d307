//! Demonstration data: NGSIM-style trajectory loading, splitting, synthetic
//! generation and the MED metric.
//!
//! Loaded positions are mapped into the simulator's world frame: `x` runs
//! along the road (`Local_Y`) and `y` to the left (`-Local_X`), both scaled by
//! `unit_scale * world_scale`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{AgentGoal, CostWeights, Scene};
use crate::courtesy::{alternative_cost, plan_against, plan_courteous, CourtesyMode, PlannerSettings, WarmStart};
use crate::dynamics::{AgentState, Control, ControlLimits, JointState, VehicleModel, VehicleParams};
use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::irl::Demonstration;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: i64,
    pub frame_id: i64,
    pub local_x: f64,
    pub local_y: f64,
    pub speed: f64,
    pub lane_id: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnNames {
    pub vehicle_id: String,
    pub frame_id: String,
    pub local_x: String,
    pub local_y: String,
    pub speed: String,
    pub lane_id: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            vehicle_id: "Vehicle_ID".into(),
            frame_id: "Frame_ID".into(),
            local_x: "Local_X".into(),
            local_y: "Local_Y".into(),
            speed: "v_Vel".into(),
            lane_id: "Lane_ID".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeDirection {
    /// Lane ids shrink toward the left (the public NGSIM numbering).
    Decreasing,
    Increasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub columns: ColumnNames,
    /// File units to meters.
    pub unit_scale: f64,
    /// Meters to simulator units (a 4.5 m car becomes 0.45).
    pub world_scale: f64,
    /// Time between consecutive frames in the file.
    pub frame_dt: f64,
    /// Step of the extracted demonstrations; a whole multiple of `frame_dt`.
    pub dt: f64,
    /// Steps kept before and after the lane change.
    pub window_before: usize,
    pub window_after: usize,
    pub direction: LaneChangeDirection,
    pub lane_width: f64,
    /// Longitudinal reach (world units) within which other cars become context.
    pub context_range: f64,
    pub vehicle: VehicleParams,
    pub limits: ControlLimits,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            columns: ColumnNames::default(),
            unit_scale: 0.3048,
            world_scale: 0.1,
            frame_dt: 0.1,
            dt: 0.1,
            window_before: 25,
            window_after: 25,
            direction: LaneChangeDirection::Decreasing,
            lane_width: 0.37,
            context_range: 3.0,
            vehicle: VehicleParams::default(),
            limits: ControlLimits { speed_max: 10.0, ..ControlLimits::default() },
        }
    }
}

impl SchemaConfig {
    pub fn stride(&self) -> Result<usize> {
        let r = self.dt / self.frame_dt;
        let s = r.round();
        if !(s >= 1.0) || (r - s).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!("dt {} is not a whole multiple of frame_dt {}", self.dt, self.frame_dt)));
        }
        Ok(s as usize)
    }

    pub fn horizon(&self) -> usize {
        self.window_before + self.window_after
    }

    fn validate(&self) -> Result<()> {
        self.stride()?;
        if self.horizon() < 2 {
            return Err(Error::InvalidConfig("window must span at least 2 steps".into()));
        }
        if !(self.unit_scale > 0.0 && self.world_scale > 0.0 && self.lane_width > 0.0) {
            return Err(Error::InvalidConfig("scales and lane width must be positive".into()));
        }
        Ok(())
    }
}

/// Reads trajectory rows, checking that every configured column is present.
pub fn read_records<R: Read>(input: R, columns: &ColumnNames) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let idx = [
        col(&columns.vehicle_id)?,
        col(&columns.frame_id)?,
        col(&columns.local_x)?,
        col(&columns.local_y)?,
        col(&columns.speed)?,
        col(&columns.lane_id)?,
    ];
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |i: usize| -> Result<f64> {
            let raw = row.get(idx[i]).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("row {}: cannot parse `{raw}`", line + 2)))
        };
        let rec = TrajectoryRecord {
            vehicle_id: field(0)? as i64,
            frame_id: field(1)? as i64,
            local_x: field(2)?,
            local_y: field(3)?,
            speed: field(4)?,
            lane_id: field(5)? as i64,
        };
        if !(rec.local_x.is_finite() && rec.local_y.is_finite()) {
            return Err(Error::InvalidConfig(format!("row {}: non-finite position", line + 2)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Per-file bookkeeping of what the loader kept and dropped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub vehicles: usize,
    pub lane_changes: usize,
    pub skipped_gaps: usize,
    pub skipped_window: usize,
    pub skipped_no_partner: usize,
    /// Largest position error after replaying reconstructed controls, per demo.
    pub residuals: Vec<(String, f64)>,
}

struct Track {
    id: i64,
    frames: Vec<i64>,
    pos: Vec<[f64; 2]>,
    lanes: Vec<i64>,
}

impl Track {
    fn at(&self, frame: i64) -> Option<usize> {
        self.frames.binary_search(&frame).ok()
    }

    fn window(&self, frames: &[i64]) -> Option<Vec<[f64; 2]>> {
        frames.iter().map(|f| self.at(*f).map(|i| self.pos[i])).collect()
    }
}

/// States and controls that replay `pos` exactly under forward Euler: speed
/// and heading come from successive displacements, acceleration and
/// steering from their differences. Needs `L + 2` positions for `L` controls.
pub fn reconstruct(pos: &[[f64; 2]], dt: f64, wheelbase: f64) -> (Vec<AgentState>, Vec<Control>) {
    let n = pos.len() - 1;
    let states: Vec<AgentState> = (0..n)
        .map(|k| {
            let (dx, dy) = (pos[k + 1][0] - pos[k][0], pos[k + 1][1] - pos[k][1]);
            AgentState::new(pos[k][0], pos[k][1], dy.atan2(dx), dx.hypot(dy) / dt)
        })
        .collect();
    let controls = states
        .windows(2)
        .map(|w| {
            let accel = (w[1].speed - w[0].speed) / dt;
            let dpsi = crate::dynamics::normalize_angle(w[1].heading - w[0].heading);
            let steer = if w[0].speed > 1e-9 { (wheelbase * dpsi / (w[0].speed * dt)).atan() } else { 0.0 };
            Control::new(accel, steer)
        })
        .collect();
    (states, controls)
}

fn replay_residual(model: &VehicleModel, x0: &AgentState, u: &[Control], dt: f64, recorded: &[[f64; 2]]) -> f64 {
    model
        .rollout_agent(x0, u, dt)
        .iter()
        .zip(recorded)
        .map(|(s, p)| (s.x - p[0]).hypot(s.y - p[1]))
        .fold(0.0, f64::max)
}

fn straight_lane(y: f64, x_lo: f64, x_hi: f64, width: f64, speed: f64) -> AgentGoal {
    AgentGoal { lane: Polyline::segment([x_lo - 10.0, y], [x_hi + 10.0, y]), lane_width: width, desired_speed: speed }
}

/// Extracts one demonstration per lane change found in the records.
pub fn extract_demos(records: &[TrajectoryRecord], schema: &SchemaConfig) -> Result<(Vec<Demonstration>, LoadReport)> {
    schema.validate()?;
    let stride = schema.stride()? as i64;
    let scale = schema.unit_scale * schema.world_scale;
    let mut by_vehicle: BTreeMap<i64, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        by_vehicle.entry(r.vehicle_id).or_default().push(r);
    }
    let mut report = LoadReport { vehicles: by_vehicle.len(), ..LoadReport::default() };
    let mut tracks = Vec::new();
    for (id, mut rows) in by_vehicle {
        rows.sort_by_key(|r| r.frame_id);
        if rows.windows(2).any(|w| w[1].frame_id != w[0].frame_id + 1) {
            report.skipped_gaps += 1;
            continue;
        }
        tracks.push(Track {
            id,
            frames: rows.iter().map(|r| r.frame_id).collect(),
            pos: rows.iter().map(|r| [r.local_y * scale, -r.local_x * scale]).collect(),
            lanes: rows.iter().map(|r| r.lane_id).collect(),
        });
    }
    let index: HashMap<i64, usize> = tracks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    let model = VehicleModel::new(schema.vehicle, schema.limits);
    let l = schema.horizon();
    let mut demos = Vec::new();

    for track in &tracks {
        let first = track.frames[0];
        for i in 1..track.lanes.len() {
            let (from, to) = (track.lanes[i - 1], track.lanes[i]);
            let changed = match schema.direction {
                LaneChangeDirection::Decreasing => to < from,
                LaneChangeDirection::Increasing => to > from,
            };
            if !changed {
                continue;
            }
            report.lane_changes += 1;
            // Snap the change to the resampled grid of this vehicle.
            let change = first + ((track.frames[i] - first) / stride) * stride;
            let start = change - schema.window_before as i64 * stride;
            let frames: Vec<i64> = (0..=l as i64 + 1).map(|k| start + k * stride).collect();
            let Some(own) = track.window(&frames) else {
                report.skipped_window += 1;
                continue;
            };
            let here = track.at(change).expect("change frame lies inside the track");
            let me = track.pos[here];
            let partner = tracks
                .iter()
                .filter(|t| t.id != track.id)
                .filter_map(|t| t.at(change).map(|j| (t, j)))
                .filter(|(t, j)| t.lanes[*j] == to && t.pos[*j][0] < me[0])
                .filter_map(|(t, j)| t.window(&frames).map(|w| (me[0] - t.pos[j][0], w)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((_, other)) = partner else {
                report.skipped_no_partner += 1;
                continue;
            };
            let context: Vec<Vec<[f64; 2]>> = tracks
                .iter()
                .filter(|t| t.id != track.id)
                .filter(|t| t.at(change).is_some_and(|j| (t.pos[j][0] - me[0]).abs() <= schema.context_range))
                .filter_map(|t| t.window(&frames))
                .filter(|w| *w != other)
                .collect();

            let (own_states, own_u) = reconstruct(&own, schema.dt, schema.vehicle.wheelbase);
            let (other_states, other_u) = reconstruct(&other, schema.dt, schema.vehicle.wheelbase);
            let surrounding: Vec<Vec<AgentState>> =
                context.iter().map(|w| reconstruct(w, schema.dt, schema.vehicle.wheelbase).0).collect();
            let recorded = own[..=l].to_vec();
            let id = format!("v{}_f{}", track.id, track.frames[i]);
            report.residuals.push((id.clone(), replay_residual(&model, &own_states[0], &own_u, schema.dt, &recorded)));

            let (x_lo, x_hi) = recorded.iter().chain(&other[..=l]).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
            let target_y = own[l][1];
            let mean_speed = |s: &[AgentState]| s.iter().map(|s| s.speed).sum::<f64>() / s.len() as f64;
            let _ = index.get(&track.id);
            demos.push(Demonstration {
                id,
                dt: schema.dt,
                vehicle: schema.vehicle,
                limits: schema.limits,
                x0: JointState {
                    robot: other_states[0],
                    human: own_states[0],
                    others: surrounding.iter().map(|s| s[0]).collect(),
                },
                human_controls: own_u,
                robot_controls: other_u,
                surrounding,
                human_goal: straight_lane(target_y, x_lo, x_hi, schema.lane_width, mean_speed(&own_states)),
                robot_goal: straight_lane(target_y, x_lo, x_hi, schema.lane_width, mean_speed(&other_states)),
                recorded: Some(recorded),
            });
        }
    }
    Ok((demos, report))
}

pub fn load_dataset(path: &Path, schema: &SchemaConfig) -> Result<(Vec<Demonstration>, LoadReport)> {
    let records = read_records(BufReader::new(File::open(path)?), &schema.columns)?;
    let (demos, report) = extract_demos(&records, schema)?;
    if report.skipped_gaps + report.skipped_window + report.skipped_no_partner > 0 {
        warn!(
            "{}: skipped {} vehicles with frame gaps, {} windows past the data, {} without a trailing car",
            path.display(),
            report.skipped_gaps,
            report.skipped_window,
            report.skipped_no_partner
        );
    }
    Ok((demos, report))
}

/// Seeded shuffle, then the first `n_train` go to training.
pub fn split<T: Clone>(items: &[T], n_train: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if n_train > items.len() {
        return Err(Error::InvalidConfig(format!("cannot take {n_train} training items from {}", items.len())));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Mean Euclidean distance between corresponding positions.
pub fn med(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidConfig("MED of empty sequences".into()));
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).sum::<f64>() / a.len() as f64)
}

pub fn save_demos(path: &Path, demos: &[Demonstration]) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), demos)?;
    Ok(())
}

pub fn load_demos(path: &Path) -> Result<Vec<Demonstration>> {
    let demos: Vec<Demonstration> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    for d in &demos {
        d.validate()?;
    }
    Ok(demos)
}

/// How synthetic demonstrations are produced from a scenario family.
///
/// The scenario's robot becomes the demonstrator and its human the
/// interacting car. Each demo plans once over `length` steps from a jittered
/// initial state; the interacting car's controls are its predicted best
/// response, and the demonstrator's plan is then re-optimized against them
/// so that it is a local optimum of the generating cost with that context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub theta: CostWeights,
    pub lambda: f64,
    pub mode: CourtesyMode,
    /// Cost of the interacting car.
    pub other_weights: CostWeights,
    pub length: usize,
    /// Uniform half-widths on `(x, y, heading, speed)` for both cars.
    pub jitter: [f64; 4],
    pub planner: PlannerSettings,
}

impl SyntheticSpec {
    pub fn new(scenario: Scenario, theta: CostWeights, lambda: f64, length: usize) -> Self {
        let other_weights = scenario.human.weights;
        let mode = scenario.courtesy.mode;
        let planner = scenario.planner.clone();
        Self { scenario, theta, lambda, mode, other_weights, length, jitter: [0.15, 0.02, 0.02, 0.08], planner }
    }
}

fn jitter(rng: &mut ChaCha8Rng, s: &AgentState, j: &[f64; 4], vmax: f64) -> AgentState {
    let mut d = |w: f64| if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
    AgentState::new(s.x + d(j[0]), s.y + d(j[1]), s.heading + d(j[2]), (s.speed + d(j[3])).clamp(0.0, vmax))
}

fn synthetic_one(spec: &SyntheticSpec, x0: JointState, id: String) -> Result<Demonstration> {
    let sc = &spec.scenario;
    let model: VehicleModel = sc.model();
    let l = spec.length;
    let robot_goal = sc.robot_goal::<f64>();
    let human_goal = sc.human_goal::<f64>();
    let scene = Scene::new(model, sc.dt, x0.clone(), robot_goal.clone(), human_goal.clone());
    let own = CostWeights { courtesy: 0.0, ..spec.theta };
    let res = plan_courteous(&scene, l, &own, &spec.other_weights, spec.lambda, spec.mode, None, &spec.planner, &WarmStart::default())?;
    let alt = alternative_cost(spec.mode, &scene, l, &spec.other_weights, Some(&res.u_robot[..1]), &spec.planner.optimizer)?;
    let courtesy = (spec.lambda > 0.0).then_some((&spec.other_weights, spec.lambda, alt.cost));
    let u = plan_against(&scene, &own, courtesy, &res.u_human, &res.u_robot, &spec.planner)?;
    // Stored controls are exactly what the dynamics executed.
    let u: Vec<Control> = u.iter().map(|c| sc.limits.clamp(*c).0).collect();
    Ok(Demonstration {
        id,
        dt: sc.dt,
        vehicle: sc.vehicle,
        limits: sc.limits,
        x0: JointState { robot: x0.human, human: x0.robot, others: Vec::new() },
        human_controls: u,
        robot_controls: res.u_human,
        surrounding: Vec::new(),
        human_goal: robot_goal,
        robot_goal: human_goal,
        recorded: None,
    })
}

/// Randomized initial conditions for `count` demos, deterministic in `seed`.
pub fn synthetic_initial_states(spec: &SyntheticSpec, count: usize, seed: u64) -> Vec<JointState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = spec.scenario.initial_state();
    let vmax = spec.scenario.limits.speed_max;
    (0..count)
        .map(|_| {
            let robot = jitter(&mut rng, &base.robot, &spec.jitter, vmax);
            let human = jitter(&mut rng, &base.human, &spec.jitter, vmax);
            JointState { robot, human, others: Vec::new() }
        })
        .collect()
}

/// Generates `count` demonstrations; failed plans are skipped and counted.
pub fn generate_synthetic_demos(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<(Vec<Demonstration>, usize)> {
    if count == 0 {
        return Err(Error::InvalidConfig("count must be at least 1".into()));
    }
    if !spec.scenario.others.is_empty() {
        return Err(Error::InvalidConfig("synthetic demos support two-car scenarios only".into()));
    }
    let mut demos = Vec::with_capacity(count);
    let mut skipped = 0;
    for (i, x0) in synthetic_initial_states(spec, count, seed).into_iter().enumerate() {
        match synthetic_one(spec, x0, format!("{}_{seed}_{i}", spec.scenario.name)) {
            Ok(d) => demos.push(d),
            Err(e) => {
                warn!("synthetic demo {i} failed: {e}");
                skipped += 1;
            }
        }
    }
    Ok((demos, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_for(rows: &[TrajectoryRecord]) -> String {
        let mut s = String::from("Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID\n");
        for r in rows {
            s += &format!("{},{},{},{},{},{}\n", r.vehicle_id, r.frame_id, r.local_x, r.local_y, r.speed, r.lane_id);
        }
        s
    }

    /// Vehicle 1 drifts left from lane 3 to lane 2, crossing at frame 50;
    /// vehicle 2 trails it in lane 2.
    fn lane_change_rows() -> Vec<TrajectoryRecord> {
        let mut rows = Vec::new();
        for f in 0..100 {
            let t = f as f64 * 0.1;
            let lateral = 18.0 - 12.0 / (1.0 + (-(f as f64 - 50.0) / 6.0).exp());
            rows.push(TrajectoryRecord {
                vehicle_id: 1,
                frame_id: f,
                local_x: lateral,
                local_y: 40.0 + 30.0 * t,
                speed: 30.0,
                lane_id: if f < 50 { 3 } else { 2 },
            });
            rows.push(TrajectoryRecord { vehicle_id: 2, frame_id: f, local_x: 6.0, local_y: 20.0 + 29.0 * t, speed: 29.0, lane_id: 2 });
        }
        rows
    }

    fn schema20() -> SchemaConfig {
        SchemaConfig { window_before: 20, window_after: 20, ..SchemaConfig::default() }
    }

    #[test]
    fn empty_file_gives_no_demos() {
        let recs = read_records("".as_bytes(), &ColumnNames::default()).unwrap();
        assert!(extract_demos(&recs, &schema20()).unwrap().0.is_empty());
        let recs = read_records("Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Vel,Lane_ID\n".as_bytes(), &ColumnNames::default()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn missing_column_is_reported() {
        let err = read_records("Vehicle_ID,Frame_ID,Local_X\n1,2,3\n".as_bytes(), &ColumnNames::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "Local_Y"));
    }

    #[test]
    fn one_change_one_demo_of_forty_steps() {
        let text = csv_for(&lane_change_rows());
        let recs = read_records(text.as_bytes(), &ColumnNames::default()).unwrap();
        let (demos, report) = extract_demos(&recs, &schema20()).unwrap();
        assert_eq!(demos.len(), 1);
        assert_eq!(demos[0].len(), 40);
        assert_eq!(demos[0].recorded.as_ref().unwrap().len(), 41);
        assert_eq!(report.lane_changes, 1);
        demos[0].validate().unwrap();
        // The trailing car is the interacting one.
        assert!(demos[0].x0.robot.x < demos[0].x0.human.x);
    }

    #[test]
    fn replay_reproduces_recorded_positions() {
        let recs = lane_change_rows();
        let (demos, report) = extract_demos(&recs, &schema20()).unwrap();
        assert!(report.residuals[0].1 < 1e-9, "{:?}", report.residuals);
        let replay = demos[0].rollout(&demos[0].human_controls);
        let rec = demos[0].recorded.as_ref().unwrap();
        assert!(replay.iter().zip(rec).all(|(s, p)| (s.x - p[0]).hypot(s.y - p[1]) < 1e-9));
    }

    #[test]
    fn gaps_and_short_windows_are_skipped() {
        let mut rows = lane_change_rows();
        rows.retain(|r| !(r.vehicle_id == 2 && r.frame_id == 70));
        let (demos, report) = extract_demos(&rows, &schema20()).unwrap();
        assert!(demos.is_empty());
        assert_eq!(report.skipped_gaps, 1);
        assert_eq!(report.skipped_no_partner, 1);

        let wide = SchemaConfig { window_before: 60, ..schema20() };
        let (demos, report) = extract_demos(&lane_change_rows(), &wide).unwrap();
        assert!(demos.is_empty());
        assert_eq!(report.skipped_window, 1);
    }

    #[test]
    fn resampling_halves_the_steps() {
        let s = SchemaConfig { dt: 0.2, window_before: 10, window_after: 10, ..SchemaConfig::default() };
        let (demos, _) = extract_demos(&lane_change_rows(), &s).unwrap();
        assert_eq!(demos[0].len(), 20);
        assert_eq!(demos[0].dt, 0.2);
        let bad = SchemaConfig { dt: 0.15, ..SchemaConfig::default() };
        assert!(extract_demos(&lane_change_rows(), &bad).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..153).collect();
        let (a, b) = split(&items, 100, 7).unwrap();
        assert_eq!((a.len(), b.len()), (100, 53));
        assert_eq!(split(&items, 100, 7).unwrap(), (a.clone(), b.clone()));
        assert!(a.iter().all(|x| !b.contains(x)));
        assert!(split(&items, 154, 7).is_err());
    }

    #[test]
    fn med_examples() {
        let a = vec![[0.0, 0.0], [1.0, 1.0]];
        let b = vec![[3.0, 4.0], [4.0, 5.0]];
        assert_eq!(med(&a, &a).unwrap(), 0.0);
        assert!((med(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(med(&a, &b[..1]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn demos_round_trip_through_json() {
        let (demos, _) = extract_demos(&lane_change_rows(), &schema20()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("demos.json");
        save_demos(&p, &demos).unwrap();
        assert_eq!(load_demos(&p).unwrap(), demos);
    }
}

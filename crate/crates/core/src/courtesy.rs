//! Courteous planning.
//!
//! The robot's compound objective is `C_self_R + lambda_c * C_court`, where
//! `C_court = max(0, C_H(u_R, u_H) - C_alt_H)` measures how much worse off the
//! human is than in an alternative world. The alternative world is one of:
//!
//! * [`CourtesyMode::NotThere`]: the robot is removed from the road;
//! * [`CourtesyMode::Collaborative`]: the robot jointly optimizes the human's cost;
//! * [`CourtesyMode::MaintainBehavior`]: the robot repeats its last executed control.
//!
//! The robot plan is found by alternating minimization: with the human plan
//! frozen, minimize the compound cost over the robot plan, then replace the
//! human plan by its best response, and repeat while the compound cost drops.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::best_response::{human_best_response, respond};
use crate::cost::{cost_gradient, cumulative_cost, CostWeights, Perspective, Scene};
use crate::dynamics::Control;
use crate::error::{Error, Result};
use crate::optimizer::{flatten, minimize_multistart, unflatten, Bounds, GradObjective, OptimizerSettings};
use crate::real::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CourtesyMode {
    #[serde(rename = "not_there")]
    NotThere,
    #[serde(rename = "collaborative")]
    Collaborative,
    #[serde(rename = "maintain")]
    MaintainBehavior,
}

impl CourtesyMode {
    pub const ALL: [CourtesyMode; 3] = [CourtesyMode::NotThere, CourtesyMode::Collaborative, CourtesyMode::MaintainBehavior];

    pub fn as_str(&self) -> &'static str {
        match self {
            CourtesyMode::NotThere => "not_there",
            CourtesyMode::Collaborative => "collaborative",
            CourtesyMode::MaintainBehavior => "maintain",
        }
    }
}

impl fmt::Display for CourtesyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CourtesyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "not_there" => Ok(CourtesyMode::NotThere),
            "collaborative" => Ok(CourtesyMode::Collaborative),
            "maintain" | "maintain_behavior" => Ok(CourtesyMode::MaintainBehavior),
            other => Err(Error::InvalidConfig(format!("unknown courtesy mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    pub optimizer: OptimizerSettings,
    pub max_alt_iters: usize,
    /// Stop alternating once the compound cost improves by less than
    /// `alt_tol * (1 + |cost|)`.
    pub alt_tol: f64,
    /// Replace the courtesy hinge by a softplus of this temperature inside the
    /// robot's optimization. Reported courtesy values always use the hinge.
    pub softplus_temperature: Option<f64>,
    /// Also start the robot optimization from full braking and full throttle.
    pub boundary_starts: bool,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSettings::default(),
            max_alt_iters: 10,
            alt_tol: 1e-4,
            softplus_temperature: None,
            boundary_starts: true,
        }
    }
}

/// Human welfare in one alternative world.
#[derive(Clone, Debug, PartialEq)]
pub struct Alternative<T = f64> {
    pub mode: CourtesyMode,
    /// `C_alt_H`.
    pub cost: T,
    pub human: Vec<Control<T>>,
    /// The robot's sequence in that world; `None` when the robot is absent.
    pub robot: Option<Vec<Control<T>>>,
}

/// The robot's last executed control repeated over the horizon.
pub fn maintained_sequence<T: Real>(last: Control<T>, horizon: usize) -> Vec<Control<T>> {
    vec![last; horizon]
}

fn frozen_robot<T: Real>(prev_robot: Option<&[Control<T>]>, horizon: usize) -> Vec<Control<T>> {
    match prev_robot {
        Some(p) if p.len() == horizon => p.to_vec(),
        Some(p) if !p.is_empty() => maintained_sequence(p[0], horizon),
        _ => vec![Control::zero(); horizon],
    }
}

/// Minimizes the human's cost jointly over both sequences, starting from
/// `(robot_init, human_init)`.
fn collaborative<T: Real>(
    scene: &Scene<T>,
    theta_h: &CostWeights<T>,
    robot_init: &[Control<T>],
    human_init: &[Control<T>],
    settings: &OptimizerSettings,
) -> Result<(Vec<Control<T>>, Vec<Control<T>>, T)> {
    let n = robot_init.len();
    let obj = GradObjective(|z: &[T], g: Option<&mut [T]>| {
        let ur = unflatten(&z[..2 * n]);
        let uh = unflatten(&z[2 * n..]);
        match g {
            None => cumulative_cost(scene, &ur, &uh, theta_h, Perspective::Human),
            Some(g) => {
                let cg = cost_gradient(scene, &ur, &uh, theta_h, Perspective::Human);
                g[..2 * n].copy_from_slice(&flatten(&cg.robot));
                g[2 * n..].copy_from_slice(&flatten(&cg.human));
                cg.value
            }
        }
    });
    let box_ = Bounds::for_controls(&scene.model.limits, n);
    let bounds = box_.stack(&box_);
    let mut init = flatten(robot_init);
    init.extend(flatten(human_init));
    let m = minimize_multistart(&obj, &init, &[], &bounds, settings)?;
    Ok((unflatten(&m.point[..2 * n]), unflatten(&m.point[2 * n..]), m.value))
}

/// `C_alt_H` for one alternative world. `prev_robot` is the robot's previously
/// executed control sequence; only its first control is used (repeated) and
/// it defaults to zero controls when absent.
pub fn alternative_cost<T: Real>(
    mode: CourtesyMode,
    scene: &Scene<T>,
    horizon: usize,
    theta_h: &CostWeights<T>,
    prev_robot: Option<&[Control<T>]>,
    settings: &OptimizerSettings,
) -> Result<Alternative<T>> {
    let frozen = frozen_robot(prev_robot, horizon);
    match mode {
        CourtesyMode::NotThere => {
            let (human, cost) = respond(&scene.without_robot(), Perspective::Human, &frozen, theta_h, settings, None)?;
            Ok(Alternative { mode, cost, human, robot: None })
        }
        CourtesyMode::MaintainBehavior => {
            let (human, cost) = respond(scene, Perspective::Human, &frozen, theta_h, settings, None)?;
            Ok(Alternative { mode, cost, human, robot: Some(frozen) })
        }
        CourtesyMode::Collaborative => {
            let (h0, _) = respond(scene, Perspective::Human, &frozen, theta_h, settings, None)?;
            let (robot, human, cost) = collaborative(scene, theta_h, &frozen, &h0, settings)?;
            Ok(Alternative { mode, cost, human, robot: Some(robot) })
        }
    }
}

/// All three alternative costs, `[not_there, collaborative, maintain]`.
///
/// Each world is warm-started from the next more restrictive one (the frozen
/// robot sequence is a candidate of the collaborative search, and removing the
/// robot only removes a nonnegative cost term), so the returned values satisfy
/// `not_there <= collaborative <= maintain`.
pub fn alternative_costs<T: Real>(
    scene: &Scene<T>,
    horizon: usize,
    theta_h: &CostWeights<T>,
    prev_robot: Option<&[Control<T>]>,
    settings: &OptimizerSettings,
) -> Result<[Alternative<T>; 3]> {
    let frozen = frozen_robot(prev_robot, horizon);
    let (h_m, c_m) = respond(scene, Perspective::Human, &frozen, theta_h, settings, None)?;
    let (r_c, h_c, c_c) = collaborative(scene, theta_h, &frozen, &h_m, settings)?;
    let (h_n, c_n) = respond(&scene.without_robot(), Perspective::Human, &frozen, theta_h, settings, Some(&h_c))?;
    Ok([
        Alternative { mode: CourtesyMode::NotThere, cost: c_n, human: h_n, robot: None },
        Alternative { mode: CourtesyMode::Collaborative, cost: c_c, human: h_c, robot: Some(r_c) },
        Alternative { mode: CourtesyMode::MaintainBehavior, cost: c_m, human: h_m, robot: Some(frozen) },
    ])
}

/// Definition of courtesy: `max(0, C_H - C_alt_H)`. The robot gets no bonus
/// for leaving the human better off than the alternative.
pub fn courtesy_term<T: Real>(human_cost: T, alt_cost: T) -> T {
    (human_cost - alt_cost).max(T::zero())
}

/// Courtesy of a concrete pair of plans.
pub fn courtesy_value<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    u_human: &[Control<T>],
    theta_h: &CostWeights<T>,
    alt_cost: T,
) -> T {
    courtesy_term(cumulative_cost(scene, u_robot, u_human, theta_h, Perspective::Human), alt_cost)
}

/// Compound cost split into its parts, evaluated at the human's best response.
#[derive(Clone, Debug, PartialEq)]
pub struct CompoundCost<T = f64> {
    pub value: T,
    pub selfish: T,
    pub courtesy: T,
    pub human: Vec<Control<T>>,
}

/// Compound cost of `u_robot` for a precomputed alternative cost. The human's
/// response is recomputed for the candidate.
pub fn compound_cost_with_alt<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    theta_r: &CostWeights<T>,
    theta_h: &CostWeights<T>,
    lambda: T,
    alt_cost: T,
    settings: &OptimizerSettings,
    warm_human: Option<&[Control<T>]>,
) -> Result<CompoundCost<T>> {
    let human = human_best_response(scene, u_robot, theta_h, settings, warm_human)?;
    let selfish = cumulative_cost(scene, u_robot, &human, theta_r, Perspective::Robot);
    let courtesy = courtesy_value(scene, u_robot, &human, theta_h, alt_cost);
    Ok(CompoundCost { value: selfish + lambda * courtesy, selfish, courtesy, human })
}

/// `C_self_R(u_R, g(u_R)) + lambda_c * C_court(u_R, g(u_R))`.
#[allow(clippy::too_many_arguments)]
pub fn compound_cost<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    theta_r: &CostWeights<T>,
    theta_h: &CostWeights<T>,
    lambda: T,
    mode: CourtesyMode,
    prev_robot: Option<&[Control<T>]>,
    settings: &OptimizerSettings,
) -> Result<CompoundCost<T>> {
    let alt = alternative_cost(mode, scene, u_robot.len(), theta_h, prev_robot, settings)?;
    compound_cost_with_alt(scene, u_robot, theta_r, theta_h, lambda, alt.cost, settings, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerResult<T = f64> {
    pub u_robot: Vec<Control<T>>,
    /// The human's predicted best response to `u_robot`.
    pub u_human: Vec<Control<T>>,
    pub selfish_cost: T,
    /// `max(0, C_H(u_robot, u_human) - alt_cost)`.
    pub courtesy_value: T,
    pub alt_cost: T,
    pub compound_cost: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Warm start for the planner, usually the previous plans shifted by one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarmStart<T = f64> {
    pub robot: Option<Vec<Control<T>>>,
    pub human: Option<Vec<Control<T>>>,
}

fn softplus<T: Real>(x: T, temp: T) -> (T, T) {
    let z = x / temp;
    if z > lit(30.0) {
        (x, T::one())
    } else {
        let e = z.exp();
        (temp * e.ln_1p(), e / (T::one() + e))
    }
}

/// Robot step of the alternation: minimize over `u_R` with the human frozen.
/// `courtesy` carries `(theta_h, lambda_c, alt_cost)`; `None` gives the
/// selfish objective.
pub fn plan_against<T: Real>(
    scene: &Scene<T>,
    theta_r: &CostWeights<T>,
    courtesy: Option<(&CostWeights<T>, T, T)>,
    u_human: &[Control<T>],
    init: &[Control<T>],
    settings: &PlannerSettings,
) -> Result<Vec<Control<T>>> {
    let n = u_human.len();
    let temp = settings.softplus_temperature.map(lit::<T>);
    let obj = GradObjective(|z: &[T], g: Option<&mut [T]>| {
        let ur = unflatten(z);
        match g {
            None => {
                let mut v = cumulative_cost(scene, &ur, u_human, theta_r, Perspective::Robot);
                if let Some((th, lambda, alt)) = courtesy {
                    let excess = cumulative_cost(scene, &ur, u_human, th, Perspective::Human) - alt;
                    let c = match temp {
                        Some(t) => softplus(excess, t).0,
                        None => excess.max(T::zero()),
                    };
                    v += lambda * c;
                }
                v
            }
            Some(g) => {
                let own = cost_gradient(scene, &ur, u_human, theta_r, Perspective::Robot);
                g.copy_from_slice(&flatten(&own.robot));
                let mut v = own.value;
                if let Some((th, lambda, alt)) = courtesy {
                    let hg = cost_gradient(scene, &ur, u_human, th, Perspective::Human);
                    let excess = hg.value - alt;
                    let (c, slope) = match temp {
                        Some(t) => softplus(excess, t),
                        None if excess > T::zero() => (excess, T::one()),
                        None => (T::zero(), T::zero()),
                    };
                    v += lambda * c;
                    for (gi, hi) in g.iter_mut().zip(flatten(&hg.robot)) {
                        *gi += lambda * slope * hi;
                    }
                }
                v
            }
        }
    });
    let lim = &scene.model.limits;
    let extra = if settings.boundary_starts {
        vec![
            flatten(&vec![Control::new(lim.accel_min, T::zero()); n]),
            flatten(&vec![Control::new(lim.accel_max, T::zero()); n]),
        ]
    } else {
        Vec::new()
    };
    let bounds = Bounds::for_controls(lim, n);
    let m = minimize_multistart(&obj, &flatten(init), &extra, &bounds, &settings.optimizer)?;
    Ok(unflatten(&m.point))
}

struct Iterate<T> {
    robot: Vec<Control<T>>,
    human: Vec<Control<T>>,
    value: T,
}

fn alternate<T: Real>(
    scene: &Scene<T>,
    horizon: usize,
    theta_r: &CostWeights<T>,
    courtesy: Option<(&CostWeights<T>, T, T)>,
    theta_h: &CostWeights<T>,
    settings: &PlannerSettings,
    warm: &WarmStart<T>,
) -> Result<(Iterate<T>, usize, bool)> {
    let eval = |ur: &[Control<T>], uh: &[Control<T>]| {
        let mut v = cumulative_cost(scene, ur, uh, theta_r, Perspective::Robot);
        if let Some((th, lambda, alt)) = courtesy {
            v += lambda * courtesy_value(scene, ur, uh, th, alt);
        }
        v
    };
    let opt = &settings.optimizer;
    let robot0 = match &warm.robot {
        Some(r) if r.len() == horizon => r.clone(),
        _ => vec![Control::zero(); horizon],
    };
    let human0 = human_best_response(scene, &robot0, theta_h, opt, warm.human.as_deref())?;
    let mut best = Iterate { value: eval(&robot0, &human0), robot: robot0, human: human0 };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_alt_iters {
        iterations += 1;
        let robot = plan_against(scene, theta_r, courtesy, &best.human, &best.robot, settings)?;
        let human = human_best_response(scene, &robot, theta_h, opt, Some(&best.human))?;
        let value = eval(&robot, &human);
        if value < best.value {
            let gain = best.value - value;
            best = Iterate { robot, human, value };
            if gain < lit::<T>(settings.alt_tol) * (T::one() + best.value.abs()) {
                converged = true;
                break;
            }
        } else {
            converged = true;
            break;
        }
    }
    Ok((best, iterations, converged))
}

/// Courteous plan for the current cycle. `prev_robot` feeds the
/// maintain-behavior alternative; `warm` seeds the alternation.
#[allow(clippy::too_many_arguments)]
pub fn plan_courteous<T: Real>(
    scene: &Scene<T>,
    horizon: usize,
    theta_r: &CostWeights<T>,
    theta_h: &CostWeights<T>,
    lambda: T,
    mode: CourtesyMode,
    prev_robot: Option<&[Control<T>]>,
    settings: &PlannerSettings,
    warm: &WarmStart<T>,
) -> Result<PlannerResult<T>> {
    if !(lambda >= T::zero()) {
        return Err(Error::InvalidConfig(format!("lambda_c must be nonnegative, got {lambda}")));
    }
    let alt = alternative_cost(mode, scene, horizon, theta_h, prev_robot, &settings.optimizer)?;
    let (best, iterations, converged) =
        alternate(scene, horizon, theta_r, Some((theta_h, lambda, alt.cost)), theta_h, settings, warm)?;
    Ok(finish(scene, theta_r, theta_h, lambda, alt.cost, best, iterations, converged))
}

/// Plan that ignores the human's welfare (`lambda_c = 0`, no alternative world
/// is evaluated). The reported courtesy fields are computed against `alt_cost`
/// when one is given and are zero otherwise.
#[allow(clippy::too_many_arguments)]
pub fn plan_selfish<T: Real>(
    scene: &Scene<T>,
    horizon: usize,
    theta_r: &CostWeights<T>,
    theta_h: &CostWeights<T>,
    settings: &PlannerSettings,
    warm: &WarmStart<T>,
    alt_cost: Option<T>,
) -> Result<PlannerResult<T>> {
    let (best, iterations, converged) = alternate(scene, horizon, theta_r, None, theta_h, settings, warm)?;
    let alt = alt_cost.unwrap_or_else(|| cumulative_cost(scene, &best.robot, &best.human, theta_h, Perspective::Human));
    Ok(finish(scene, theta_r, theta_h, T::zero(), alt, best, iterations, converged))
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    scene: &Scene<T>,
    theta_r: &CostWeights<T>,
    theta_h: &CostWeights<T>,
    lambda: T,
    alt: T,
    best: Iterate<T>,
    iterations: usize,
    converged: bool,
) -> PlannerResult<T> {
    let selfish_cost = cumulative_cost(scene, &best.robot, &best.human, theta_r, Perspective::Robot);
    let courtesy_value = courtesy_value(scene, &best.robot, &best.human, theta_h, alt);
    PlannerResult {
        compound_cost: selfish_cost + lambda * courtesy_value,
        u_robot: best.robot,
        u_human: best.human,
        selfish_cost,
        courtesy_value,
        alt_cost: alt,
        iterations,
        converged,
    }
}

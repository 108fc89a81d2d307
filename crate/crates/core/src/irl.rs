//! Maximum-entropy IRL with a Laplace approximation of the partition term.
//!
//! A demonstration is scored in the planning frame: the demonstrating driver
//! takes the robot slot of a [`Scene`] and the interacting car the human slot.
//! The optional courtesy feature is therefore the demonstrator's courtesy
//! toward the interacting car, measured with `IrlConfig::other_weights`.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cumulative_cost, cumulative_features, AgentGoal, CostWeights, Perspective, Scene};
use crate::courtesy::{alternative_cost, plan_against, CourtesyMode, PlannerSettings};
use crate::dynamics::{AgentState, Control, ControlLimits, JointState, VehicleModel, VehicleParams};
use crate::data::med;
use crate::error::{Error, Result};
use crate::optimizer::{flatten, unflatten, OptimizerSettings};

/// Five features plus the courtesy feature.
pub const N_PARAMS: usize = 6;

/// Names of the learned weights, in parameter order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["theta_g", "theta_d", "theta_acc", "theta_steer", "theta_s", "lambda_c"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub dt: f64,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub limits: ControlLimits,
    /// `human` is the demonstrating driver and `robot` the interacting car.
    pub x0: JointState,
    pub human_controls: Vec<Control>,
    /// Controls of the interacting car, replayed as fixed context.
    pub robot_controls: Vec<Control>,
    /// Scripted states of other cars, `L + 1` per car.
    #[serde(default)]
    pub surrounding: Vec<Vec<AgentState>>,
    pub human_goal: AgentGoal,
    pub robot_goal: AgentGoal,
    /// Logged demonstrator positions (`L + 1`) when the demo came from data.
    #[serde(default)]
    pub recorded: Option<Vec<[f64; 2]>>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.human_controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human_controls.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.len();
        if l < 2 {
            return Err(Error::InvalidConfig(format!("demo `{}` has length {l}, need at least 2", self.id)));
        }
        if self.robot_controls.len() != l {
            return Err(Error::LengthMismatch { expected: l, got: self.robot_controls.len() });
        }
        if self.surrounding.len() != self.x0.others.len() {
            return Err(Error::LengthMismatch { expected: self.x0.others.len(), got: self.surrounding.len() });
        }
        if let Some(r) = &self.recorded {
            if r.len() != l + 1 {
                return Err(Error::LengthMismatch { expected: l + 1, got: r.len() });
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("demo `{}` has dt {}", self.id, self.dt)));
        }
        Ok(())
    }

    pub fn model(&self) -> VehicleModel {
        VehicleModel::new(self.vehicle, self.limits)
    }

    /// Scene in the planning frame (demonstrator in the robot slot).
    pub fn scene(&self) -> Scene {
        let x0 = JointState { robot: self.x0.human, human: self.x0.robot, others: self.x0.others.clone() };
        let mut scene = Scene::new(self.model(), self.dt, x0, self.human_goal.clone(), self.robot_goal.clone());
        scene.others = self.surrounding.clone();
        scene
    }

    /// Demonstrator states obtained by replaying its controls.
    pub fn rollout(&self, controls: &[Control]) -> Vec<AgentState> {
        self.model().rollout_agent(&self.x0.human, controls, self.dt)
    }

    /// Demonstrated positions: the log when present, else the replayed controls.
    pub fn demonstrated_positions(&self) -> Vec<[f64; 2]> {
        match &self.recorded {
            Some(r) => r.clone(),
            None => self.rollout(&self.human_controls).iter().map(|s| s.position()).collect(),
        }
    }

    /// Interacting-car states under the replayed context.
    pub fn context_states(&self) -> Vec<AgentState> {
        self.model().rollout_agent(&self.x0.robot, &self.robot_controls, self.dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Goal,
    Speed,
    Accel,
    Steer,
    Safety,
}

impl Anchor {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlConfig {
    pub use_courtesy_feature: bool,
    pub courtesy_mode: CourtesyMode,
    /// Cost of the interacting car, used by the courtesy feature.
    pub other_weights: CostWeights,
    pub cost_level: CostLevel,
    /// Relative jitter: `eps = hessian_jitter * (1 + |tr H| / dim)`.
    pub hessian_jitter: f64,
    /// Step of the finite-difference Hessian over controls.
    pub hessian_step: f64,
    /// Fraction of the Newton step tried first each epoch.
    pub learn_rate: f64,
    /// Multiplicative decay of `learn_rate` per epoch.
    pub lr_decay: f64,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping early.
    pub patience: usize,
    pub anchor: Anchor,
    /// Starting weights; `lambda_c` is used only with the courtesy feature.
    pub init: CostWeights,
    /// Optimizer for alternative costs and for planning during evaluation.
    pub optimizer: OptimizerSettings,
    pub workers: usize,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            use_courtesy_feature: false,
            courtesy_mode: CourtesyMode::MaintainBehavior,
            other_weights: crate::scenario::default_human_weights(),
            cost_level: CostLevel::Excess,
            hessian_jitter: 1e-6,
            hessian_step: 1e-3,
            learn_rate: 1.0,
            lr_decay: 1.0,
            max_epochs: 300,
            patience: 20,
            anchor: Anchor::Goal,
            init: CostWeights::new(1.0, 1.0, 1.0, 1.0, 1.0).with_courtesy(1.0),
            optimizer: OptimizerSettings::default(),
            workers: 1,
        }
    }
}

impl IrlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hessian_jitter > 0.0) {
            return Err(Error::InvalidConfig(format!("hessian_jitter must be positive, got {}", self.hessian_jitter)));
        }
        if !(self.hessian_step > 0.0 && self.learn_rate > 0.0) {
            return Err(Error::InvalidConfig("IRL step sizes must be positive".into()));
        }
        if !self.other_weights.is_valid() || !self.init.is_valid() {
            return Err(Error::InvalidConfig("IRL weights must be finite and nonnegative".into()));
        }
        self.optimizer.validate()
    }

    fn active(&self) -> usize {
        if self.use_courtesy_feature {
            N_PARAMS
        } else {
            N_PARAMS - 1
        }
    }
}

pub fn weights_to_params(w: &CostWeights) -> [f64; N_PARAMS] {
    let f = w.feature_array();
    [f[0], f[1], f[2], f[3], f[4], w.courtesy]
}

pub fn params_to_weights(p: &[f64; N_PARAMS]) -> CostWeights {
    CostWeights::from_feature_array([p[0], p[1], p[2], p[3], p[4]], p[5])
}

/// Everything the likelihood needs from one demo, precomputed once: the
/// cost is linear in the weights, so `H(theta) = sum_j theta_j H_j`.
#[derive(Clone, Debug)]
pub struct DemoTerms {
    pub features: [f64; N_PARAMS],
    /// Per-feature gradients over the demonstrator's controls.
    pub gradients: Vec<DVector<f64>>,
    pub hessians: Vec<DMatrix<f64>>,
    pub alt_cost: f64,
}

impl DemoTerms {
    pub fn dim(&self) -> usize {
        self.hessians[0].nrows()
    }

    pub fn hessian(&self, theta: &[f64; N_PARAMS]) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for (t, hj) in theta.iter().zip(&self.hessians) {
            if *t != 0.0 {
                h += hj * *t;
            }
        }
        h
    }

    pub fn gradient(&self, theta: &[f64; N_PARAMS]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for (t, gj) in theta.iter().zip(&self.gradients) {
            if *t != 0.0 {
                g += gj * *t;
            }
        }
        g
    }
}

/// `C_alt` of the interacting car with the demonstrator in its alternative
/// world. Maintaining means repeating the demonstrator's first control.
pub fn demo_alt_cost(demo: &Demonstration, config: &IrlConfig) -> Result<f64> {
    let scene = demo.scene();
    let alt = alternative_cost(
        config.courtesy_mode,
        &scene,
        demo.len(),
        &config.other_weights,
        Some(&demo.human_controls[..1]),
        &config.optimizer,
    )?;
    Ok(alt.cost)
}

fn feature_fn<'a>(scene: &'a Scene, context: &'a [Control], config: &IrlConfig, alt: f64) -> impl Fn(&[f64]) -> [f64; N_PARAMS] + 'a {
    let other = config.other_weights;
    let courtesy = config.use_courtesy_feature;
    move |z: &[f64]| {
        let u = unflatten(z);
        let f = cumulative_features(scene, &u, context, Perspective::Robot).to_array();
        let c = if courtesy { (cumulative_cost(scene, &u, context, &other, Perspective::Human) - alt).max(0.0) } else { 0.0 };
        [f[0], f[1], f[2], f[3], f[4], c]
    }
}

/// Feature sums and per-feature Hessians over the demonstrator's controls,
/// by central differences. Each Hessian is symmetric by construction.
pub fn demo_terms(demo: &Demonstration, config: &IrlConfig) -> Result<DemoTerms> {
    demo.validate()?;
    let scene = demo.scene();
    let alt = if config.use_courtesy_feature { demo_alt_cost(demo, config)? } else { 0.0 };
    let f = feature_fn(&scene, &demo.robot_controls, config, alt);
    let z0 = flatten(&demo.human_controls);
    let n = z0.len();
    let h = config.hessian_step;
    let mut hess = vec![DMatrix::<f64>::zeros(n, n); N_PARAMS];
    let mut grads = vec![DVector::<f64>::zeros(n); N_PARAMS];
    let mut z = z0.clone();
    for a in 0..n {
        z[a] = z0[a] + h;
        let p = f(&z);
        z[a] = z0[a] - h;
        let m = f(&z);
        z[a] = z0[a];
        for j in 0..N_PARAMS {
            grads[j][a] = (p[j] - m[j]) / (2.0 * h);
        }
    }
    for a in 0..n {
        for b in a..n {
            let mut eval = |da: f64, db: f64| {
                z[a] += da;
                z[b] += db;
                let v = f(&z);
                z[a] = z0[a];
                z[b] = z0[b];
                v
            };
            let pp = eval(h, h);
            let pm = eval(h, -h);
            let mp = eval(-h, h);
            let mm = eval(-h, -h);
            for j in 0..N_PARAMS {
                let v = (pp[j] - pm[j] - mp[j] + mm[j]) / (4.0 * h * h);
                hess[j][(a, b)] = v;
                hess[j][(b, a)] = v;
            }
        }
    }
    for m in &mut hess {
        let t = m.transpose();
        *m = (&*m + t) * 0.5;
    }
    Ok(DemoTerms { features: f(&z0), gradients: grads, hessians: hess, alt_cost: alt })
}

/// Which cost level enters the log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostLevel {
    /// Cost above the minimum of its local quadratic model,
    /// `1/2 g^T (H + eps I)^-1 g`; zero at an exact local optimum.
    Excess,
    /// The demo's total cost `theta . Phi`.
    Total,
}

/// `log P = -C + 1/2 log det(H + eps I) - dim/2 log(2 pi)`, with `C` chosen
/// by `config.cost_level`. The jitter grows tenfold up to three times before
/// giving up.
pub fn log_likelihood(theta: &[f64; N_PARAMS], terms: &DemoTerms, config: &IrlConfig) -> Result<f64> {
    laplace(theta, terms, config, false).map(|(v, _)| v)
}

/// Log-likelihood with its gradient and Hessian in `theta`.
pub fn log_likelihood_derivatives(
    theta: &[f64; N_PARAMS],
    terms: &DemoTerms,
    config: &IrlConfig,
) -> Result<(f64, [f64; N_PARAMS], [[f64; N_PARAMS]; N_PARAMS])> {
    let (v, d) = laplace(theta, terms, config, true)?;
    let (g, h) = d.expect("derivatives requested");
    Ok((v, g, h))
}

type Derivatives = ([f64; N_PARAMS], [[f64; N_PARAMS]; N_PARAMS]);

// With M = H + eps I, M_j its slope in theta_j, g = sum theta_j G_j and
// y = M^-1 g:
//   d/dtheta_j 1/2 log det M = 1/2 tr(M^-1 M_j)
//   d2 ... = -1/2 tr(M^-1 M_i M^-1 M_j)
//   d/dtheta_j (-1/2 g^T y) = -G_j^T y + 1/2 y^T M_j y
//   d2 ... = -R_i^T M^-1 R_j,  R_j = G_j - M_j y
fn laplace(theta: &[f64; N_PARAMS], terms: &DemoTerms, config: &IrlConfig, derivs: bool) -> Result<(f64, Option<Derivatives>)> {
    let n = terms.dim();
    let h = terms.hessian(theta);
    let tr = h.trace();
    let base = config.hessian_jitter * (1.0 + tr.abs() / n as f64);
    let mut scale = 1.0;
    for _ in 0..4 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += base * scale;
        }
        let Some(ch) = m.cholesky() else {
            scale *= 10.0;
            continue;
        };
        let logdet: f64 = 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let g = terms.gradient(theta);
        let y = ch.solve(&g);
        let cost = match config.cost_level {
            CostLevel::Excess => 0.5 * g.dot(&y),
            CostLevel::Total => theta.iter().zip(&terms.features).map(|(t, f)| t * f).sum(),
        };
        let value = -cost + 0.5 * logdet - 0.5 * n as f64 * (2.0 * PI).ln();
        if !derivs {
            return Ok((value, None));
        }
        let slopes: Vec<DMatrix<f64>> = terms
            .hessians
            .iter()
            .map(|hj| {
                let s = scale * config.hessian_jitter * tr.signum() * hj.trace() / n as f64;
                let mut mj = hj.clone();
                for i in 0..n {
                    mj[(i, i)] += s;
                }
                mj
            })
            .collect();
        let x: Vec<DMatrix<f64>> = slopes.iter().map(|mj| ch.solve(mj)).collect();
        let r: Vec<DVector<f64>> = terms.gradients.iter().zip(&slopes).map(|(gj, mj)| gj - mj * &y).collect();
        let mr: Vec<DVector<f64>> = r.iter().map(|rj| ch.solve(rj)).collect();
        let mut grad = [0.0; N_PARAMS];
        let mut hess = [[0.0; N_PARAMS]; N_PARAMS];
        for i in 0..N_PARAMS {
            grad[i] = 0.5 * x[i].trace()
                + match config.cost_level {
                    CostLevel::Excess => -terms.gradients[i].dot(&y) + 0.5 * y.dot(&(&slopes[i] * &y)),
                    CostLevel::Total => -terms.features[i],
                };
            for j in 0..=i {
                let mut t = -0.5 * x[i].component_mul(&x[j].transpose()).sum();
                if config.cost_level == CostLevel::Excess {
                    t -= r[i].dot(&mr[j]);
                }
                hess[i][j] = t;
                hess[j][i] = t;
            }
        }
        return Ok((value, Some((grad, hess))));
    }
    Err(Error::NotPositiveDefinite)
}

pub fn demo_log_likelihood(theta: &CostWeights, demo: &Demonstration, config: &IrlConfig) -> Result<f64> {
    config.validate()?;
    let mut p = weights_to_params(theta);
    if !config.use_courtesy_feature {
        p[5] = 0.0;
    }
    log_likelihood(&p, &demo_terms(demo, config)?, config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted weights, rescaled so the anchor weight is 1.
    pub weights: CostWeights,
    /// The same weights at the scale the likelihood prefers.
    pub unscaled: CostWeights,
    /// Mean negative log-likelihood per demo, one entry per epoch.
    pub curve: Vec<f64>,
    pub early_stopped: bool,
    pub skipped: usize,
    pub used: usize,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        self.curve.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Mean negative log-likelihood; `None` if any demo fails.
fn mean_nll(theta: &[f64; N_PARAMS], terms: &[DemoTerms], config: &IrlConfig) -> Option<f64> {
    let mut total = 0.0;
    for t in terms {
        total -= log_likelihood(theta, t, config).ok()?;
    }
    Some(total / terms.len() as f64)
}

/// Mean negative log-likelihood of `demos` under `theta`.
pub fn training_loss(theta: &CostWeights, demos: &[Demonstration], config: &IrlConfig) -> Result<f64> {
    config.validate()?;
    let mut p = weights_to_params(theta);
    if !config.use_courtesy_feature {
        p[5] = 0.0;
    }
    let terms = demos.iter().map(|d| demo_terms(d, config)).collect::<Result<Vec<_>>>()?;
    mean_nll(&p, &terms, config).ok_or(Error::NotPositiveDefinite)
}

/// Projected ascent on the mean log-likelihood, which is concave in the
/// weights. Each epoch takes a damped Newton step over the weights not held
/// at zero, scaled by the learn rate and halved until it improves.
pub fn fit(demos: &[Demonstration], config: &IrlConfig) -> Result<FitResult> {
    config.validate()?;
    let active = config.active();
    let mut theta = weights_to_params(&config.init);
    if !config.use_courtesy_feature {
        theta[5] = 0.0;
    }

    let computed: Vec<Result<DemoTerms>> = pool(config.workers)?.install(|| demos.par_iter().map(|d| demo_terms(d, config)).collect());
    let mut terms = Vec::with_capacity(demos.len());
    let mut skipped = 0;
    for (d, t) in demos.iter().zip(computed) {
        match t.and_then(|t| log_likelihood(&theta, &t, config).map(|_| t)) {
            Ok(t) => terms.push(t),
            Err(e) => {
                warn!("skipping demo `{}`: {e}", d.id);
                skipped += 1;
            }
        }
    }
    if terms.is_empty() {
        return Err(Error::NoUsableDemos { skipped });
    }

    let derivs = |theta: &[f64; N_PARAMS]| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mut g = DVector::zeros(active);
        let mut h = DMatrix::zeros(active, active);
        for t in &terms {
            let (_, dg, dh) = log_likelihood_derivatives(theta, t, config).ok()?;
            for i in 0..active {
                g[i] -= dg[i];
                for j in 0..active {
                    h[(i, j)] -= dh[i][j];
                }
            }
        }
        let k = terms.len() as f64;
        Some((g / k, h / k))
    };

    let mut cur = mean_nll(&theta, &terms, config).ok_or(Error::NotPositiveDefinite)?;
    let mut best = (theta, cur);
    let mut lr = config.learn_rate;
    let mut curve = Vec::with_capacity(config.max_epochs);
    let mut stale = 0;
    let mut early_stopped = false;

    for _ in 0..config.max_epochs {
        let Some((g, h)) = derivs(&theta) else {
            early_stopped = true;
            break;
        };
        // Weights at the bound that the gradient pushes further down stay put.
        let free: Vec<usize> = (0..active).filter(|&i| theta[i] > 0.0 || g[i] < 0.0).collect();
        let mut next = None;
        if !free.is_empty() {
            let k = free.len();
            let gf = DVector::from_iterator(k, free.iter().map(|&i| g[i]));
            let mut hf = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
            let shift = 1e-10 * (1.0 + (0..k).map(|a| hf[(a, a)].abs()).fold(0.0, f64::max));
            for a in 0..k {
                hf[(a, a)] += shift;
            }
            let diag = DVector::from_iterator(k, (0..k).map(|a| hf[(a, a)].abs().max(shift)));
            let scaled = -gf.component_div(&diag);
            let dirs = match hf.cholesky() {
                Some(ch) => vec![-ch.solve(&gf), scaled],
                None => vec![scaled],
            };
            'search: for dir in dirs {
                let mut step = lr;
                for _ in 0..30 {
                    let mut t = theta;
                    for (a, &i) in free.iter().enumerate() {
                        t[i] = (theta[i] + step * dir[a]).max(0.0);
                    }
                    if let Some(v) = mean_nll(&t, &terms, config) {
                        if v < cur {
                            next = Some((t, v));
                            break 'search;
                        }
                    }
                    step *= 0.5;
                }
            }
        }
        if let Some((t, v)) = next {
            theta = t;
            cur = v;
        }
        curve.push(cur);
        if cur < best.1 - 1e-10 * (1.0 + best.1.abs()) {
            best = (theta, cur);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                early_stopped = true;
                break;
            }
        }
        lr *= config.lr_decay;
    }

    let mut theta = best.0;
    let unscaled = params_to_weights(&theta);
    let anchor = theta[config.anchor.index()];
    if anchor > 0.0 {
        for t in &mut theta {
            *t /= anchor;
        }
    }
    Ok(FitResult { weights: params_to_weights(&theta), unscaled, curve, early_stopped, skipped, used: terms.len() })
}

/// Fits without the courtesy feature, then with it, warm-starting the second
/// fit from the first (the nested model starts where the smaller one ended).
pub fn fit_pair(demos: &[Demonstration], config: &IrlConfig) -> Result<(FitResult, FitResult)> {
    let plain_cfg = IrlConfig { use_courtesy_feature: false, ..config.clone() };
    let plain = fit(demos, &plain_cfg)?;
    let init = CostWeights { courtesy: config.init.courtesy, ..plain.unscaled };
    let court_cfg = IrlConfig { use_courtesy_feature: true, init, ..config.clone() };
    let court = fit(demos, &court_cfg)?;
    Ok((plain, court))
}

/// Planned demonstrator controls under `theta` with the context replayed.
pub fn plan_demo(theta: &CostWeights, demo: &Demonstration, config: &IrlConfig) -> Result<Vec<Control>> {
    demo.validate()?;
    let scene = demo.scene();
    let own = CostWeights { courtesy: 0.0, ..*theta };
    let alt;
    let courtesy = if config.use_courtesy_feature && theta.courtesy > 0.0 {
        alt = demo_alt_cost(demo, config)?;
        Some((&config.other_weights, theta.courtesy, alt))
    } else {
        None
    };
    let settings = PlannerSettings { optimizer: config.optimizer.clone(), ..PlannerSettings::default() };
    let init = vec![Control::zero(); demo.len()];
    plan_against(&scene, &own, courtesy, &demo.robot_controls, &init, &settings)
}

/// Bumper gap from the interacting (trailing) car to the demonstrator,
/// measured along the interacting car's lane.
pub fn following_gaps(demo: &Demonstration, demonstrator: &[[f64; 2]]) -> Vec<f64> {
    let lane = &demo.robot_goal.lane;
    demonstrator
        .iter()
        .zip(demo.context_states())
        .map(|(p, s)| lane.project(*p).station - lane.project(s.position()).station - demo.vehicle.length)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    /// `None` when planning failed; such rows are left out of the summary.
    pub med: Option<f64>,
    pub planned_gaps: Vec<f64>,
    pub demo_gaps: Vec<f64>,
}

impl EvalRow {
    pub fn flagged(&self) -> bool {
        self.med.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_med: f64,
    pub mean_gap_error: f64,
    pub failed: usize,
}

/// Plans every test demo from its initial state and compares with the demo.
pub fn evaluate(theta: &CostWeights, demos: &[Demonstration], config: &IrlConfig) -> Result<EvalReport> {
    config.validate()?;
    let rows: Vec<EvalRow> = pool(config.workers)?.install(|| {
        demos
            .par_iter()
            .map(|d| {
                let demo_pos = d.demonstrated_positions();
                let demo_gaps = following_gaps(d, &demo_pos);
                match plan_demo(theta, d, config) {
                    Ok(u) => {
                        let planned: Vec<[f64; 2]> = d.rollout(&u).iter().map(|s| s.position()).collect();
                        EvalRow {
                            id: d.id.clone(),
                            med: med(&planned, &demo_pos).ok(),
                            planned_gaps: following_gaps(d, &planned),
                            demo_gaps,
                        }
                    }
                    Err(e) => {
                        warn!("planning failed on demo `{}`: {e}", d.id);
                        EvalRow { id: d.id.clone(), med: None, planned_gaps: Vec::new(), demo_gaps }
                    }
                }
            })
            .collect()
    });
    let ok: Vec<&EvalRow> = rows.iter().filter(|r| !r.flagged()).collect();
    let failed = rows.len() - ok.len();
    let (mean_med, mean_gap_error) = if ok.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let n = ok.len() as f64;
        let gap_err = ok
            .iter()
            .map(|r| r.planned_gaps.iter().zip(&r.demo_gaps).map(|(a, b)| (a - b).abs()).sum::<f64>() / r.demo_gaps.len() as f64)
            .sum::<f64>()
            / n;
        (ok.iter().filter_map(|r| r.med).sum::<f64>() / n, gap_err)
    };
    Ok(EvalReport { rows, mean_med, mean_gap_error, failed })
}

/// Writes weights as `name=value` lines in parameter order.
pub fn write_weights<W: Write>(w: &CostWeights, mut out: W) -> Result<()> {
    for (name, v) in PARAM_NAMES.iter().zip(weights_to_params(w)) {
        writeln!(out, "{name}={v}")?;
    }
    Ok(())
}

/// Parses a `name=value` weights file; missing names default to zero.
pub fn parse_weights(text: &str) -> Result<CostWeights> {
    let mut p = [0.0; N_PARAMS];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("expected name=value, got `{line}`")))?;
        let i = PARAM_NAMES
            .iter()
            .position(|n| *n == k.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown weight `{}`", k.trim())))?;
        p[i] = v.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad value in `{line}`")))?;
    }
    let w = params_to_weights(&p);
    if !w.is_valid() {
        return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
    }
    Ok(w)
}

pub fn write_curve_csv<W: Write>(curve: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "negative_log_likelihood"])?;
    for (i, v) in curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eval_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["demo", "med", "mean_planned_gap", "mean_demo_gap", "failed"])?;
    let mean = |v: &[f64]| if v.is_empty() { String::new() } else { (v.iter().sum::<f64>() / v.len() as f64).to_string() };
    for r in &report.rows {
        w.write_record([
            r.id.clone(),
            r.med.map(|m| m.to_string()).unwrap_or_default(),
            mean(&r.planned_gaps),
            mean(&r.demo_gaps),
            r.flagged().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

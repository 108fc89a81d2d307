//! Box-constrained projected L-BFGS with multistart.
//!
//! Gradients come from the objective when it supplies them, otherwise from
//! central finite differences. Bounds are enforced by projection; objectives
//! may be probed slightly outside the box by the difference stencil.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, ControlLimits};
use crate::error::{Error, Result};
use crate::real::{lit, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Stop once the projected gradient is below `grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    pub fd_step: f64,
    /// Number of starts: the supplied init, zero, then perturbed copies.
    pub restarts: usize,
    pub seed: u64,
    /// L-BFGS memory.
    pub memory: usize,
    /// Perturbation amplitude for random restarts, as a fraction of the box width.
    pub perturbation: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-5, fd_step: 1e-5, restarts: 3, seed: 0, memory: 8, perturbation: 0.1 }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 || !(self.grad_tol > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidConfig(format!("optimizer settings out of range: {self:?}")));
        }
        Ok(())
    }
}

/// A scalar function of a flat decision vector.
pub trait Objective<T: Real> {
    fn value(&self, z: &[T]) -> T;

    /// Analytic fast path: writes the gradient and returns the value. `None`
    /// falls back to finite differences.
    fn value_and_gradient(&self, _z: &[T], _grad: &mut [T]) -> Option<T> {
        None
    }
}

/// Value-only objective backed by a closure.
pub struct FnObjective<F>(pub F);

impl<T: Real, F: Fn(&[T]) -> T> Objective<T> for FnObjective<F> {
    fn value(&self, z: &[T]) -> T {
        (self.0)(z)
    }
}

/// Objective backed by a closure computing value and gradient together.
pub struct GradObjective<F>(pub F);

impl<T: Real, F: Fn(&[T], Option<&mut [T]>) -> T> Objective<T> for GradObjective<F> {
    fn value(&self, z: &[T]) -> T {
        (self.0)(z, None)
    }

    fn value_and_gradient(&self, z: &[T], grad: &mut [T]) -> Option<T> {
        Some((self.0)(z, Some(grad)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![T::neg_infinity(); n], upper: vec![T::infinity(); n] }
    }

    /// Box for `n` controls packed as `[a0, s0, a1, s1, ...]`.
    pub fn for_controls(limits: &ControlLimits<T>, n: usize) -> Self {
        let mut lower = Vec::with_capacity(2 * n);
        let mut upper = Vec::with_capacity(2 * n);
        for _ in 0..n {
            lower.extend([limits.accel_min, -limits.steer_max]);
            upper.extend([limits.accel_max, limits.steer_max]);
        }
        Self { lower, upper }
    }

    /// Concatenation of two boxes.
    pub fn stack(&self, other: &Self) -> Self {
        let mut b = self.clone();
        b.lower.extend_from_slice(&other.lower);
        b.upper.extend_from_slice(&other.upper);
        b
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, z: &mut [T]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.max(self.lower[i]).min(self.upper[i]);
        }
    }

    fn width(&self, i: usize) -> T {
        let w = self.upper[i] - self.lower[i];
        if w.is_finite() {
            w
        } else {
            T::one()
        }
    }
}

/// Packs controls as `[a0, s0, a1, s1, ...]`.
pub fn flatten<T: Real>(u: &[Control<T>]) -> Vec<T> {
    u.iter().flat_map(|c| [c.accel, c.steer]).collect()
}

pub fn unflatten<T: Real>(z: &[T]) -> Vec<Control<T>> {
    z.chunks_exact(2).map(|c| Control::new(c[0], c[1])).collect()
}

/// Outcome of a minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum<T> {
    pub point: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

fn gradient<T: Real, O: Objective<T> + ?Sized>(obj: &O, z: &[T], f: T, h: T, g: &mut [T]) -> T {
    if let Some(v) = obj.value_and_gradient(z, g) {
        return v;
    }
    let mut probe = z.to_vec();
    let two_h = h + h;
    for i in 0..z.len() {
        probe[i] = z[i] + h;
        let fp = obj.value(&probe);
        probe[i] = z[i] - h;
        let fm = obj.value(&probe);
        probe[i] = z[i];
        g[i] = (fp - fm) / two_h;
    }
    f
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn inf_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Gradient with components pushing against an active bound removed.
fn projected_gradient<T: Real>(z: &[T], g: &[T], b: &Bounds<T>) -> Vec<T> {
    z.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (zi, gi))| {
            if (*zi <= b.lower[i] && *gi > T::zero()) || (*zi >= b.upper[i] && *gi < T::zero()) {
                T::zero()
            } else {
                *gi
            }
        })
        .collect()
}

/// Single-start projected L-BFGS.
pub fn minimize<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &[T],
    bounds: &Bounds<T>,
    settings: &OptimizerSettings,
) -> Result<Minimum<T>> {
    assert_eq!(init.len(), bounds.dim(), "init and bounds dimension differ");
    let n = init.len();
    let mut z = init.to_vec();
    bounds.project(&mut z);
    let mut f = obj.value(&z);
    if !f.is_finite() {
        return Err(Error::DegenerateObjective(f.as_f64()));
    }
    if n == 0 {
        return Ok(Minimum { point: z, value: f, iterations: 0, converged: true });
    }
    let h: T = lit(settings.fd_step);
    let tol: T = lit(settings.grad_tol);
    let c1: T = lit(1e-4);
    let mut g = vec![T::zero(); n];
    f = gradient(obj, &z, f, h, &mut g);
    let mut memory: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(settings.memory);
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < settings.max_iters {
        let pg = projected_gradient(&z, &g, bounds);
        if inf_norm(&pg) <= tol * (T::one() + f.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion restricted to the free variables.
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != T::zero() || *gi == T::zero()).collect();
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = *rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (*a - b);
            }
        }
        let mut d: Vec<T> = q.iter().zip(&free).map(|(v, fr)| if *fr { -*v } else { T::zero() }).collect();
        if dot(&d, &pg) >= T::zero() {
            memory.clear();
            d = pg.iter().map(|v| -*v).collect();
        }
        let mut alpha = if memory.is_empty() {
            T::one().min(lit::<T>(0.5) / inf_norm(&d))
        } else {
            T::one()
        };

        let mut accepted = None;
        let mut trial = vec![T::zero(); n];
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = z[i] + alpha * d[i];
            }
            bounds.project(&mut trial);
            let step: Vec<T> = trial.iter().zip(&z).map(|(a, b)| *a - *b).collect();
            if inf_norm(&step) == T::zero() {
                break;
            }
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + c1 * dot(&g, &step) {
                accepted = Some((ft, step));
                break;
            }
            alpha *= lit(0.5);
        }
        let Some((ft, step)) = accepted else {
            // No descent along the projected direction: retry steepest descent once.
            if !memory.is_empty() {
                memory.clear();
                continue;
            }
            break;
        };

        let mut g_new = vec![T::zero(); n];
        let ft = gradient(obj, &trial, ft, h, &mut g_new);
        let y: Vec<T> = g_new.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let sy = dot(&step, &y);
        if sy > T::epsilon() * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == settings.memory {
                memory.pop_front();
            }
            memory.push_back((step, y, T::one() / sy));
        }
        let decrease = f - ft;
        z.copy_from_slice(&trial);
        g = g_new;
        f = ft;
        if decrease <= lit::<T>(1e-14) * (T::one() + f.abs()) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(Minimum { point: z, value: f, iterations, converged })
}

fn norm2<T: Real>(z: &[T]) -> T {
    dot(z, z)
}

/// `a` beats `b`: lower value, ties broken towards the smaller norm.
fn better<T: Real>(a: &Minimum<T>, b: &Minimum<T>) -> bool {
    let tie = lit::<T>(1e-12) * (T::one() + a.value.abs().max(b.value.abs()));
    if (a.value - b.value).abs() <= tie {
        norm2(&a.point) < norm2(&b.point)
    } else {
        a.value < b.value
    }
}

/// Multistart minimization. Starts are `init`, the zero vector (projected),
/// `settings.restarts - 2` seeded perturbations of `init`, then `extra`.
/// Errors only if the objective is non-finite at `init`.
pub fn minimize_multistart<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &[T],
    extra: &[Vec<T>],
    bounds: &Bounds<T>,
    settings: &OptimizerSettings,
) -> Result<Minimum<T>> {
    let mut best = minimize(obj, init, bounds, settings)?;
    let mut starts: Vec<Vec<T>> = Vec::new();
    if settings.restarts >= 2 {
        starts.push(vec![T::zero(); init.len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for _ in 2..settings.restarts {
        let p = init
            .iter()
            .enumerate()
            .map(|(i, v)| *v + bounds.width(i) * lit(settings.perturbation * rng.gen_range(-1.0..1.0)))
            .collect();
        starts.push(p);
    }
    starts.extend(extra.iter().cloned());
    for s in starts {
        if let Ok(m) = minimize(obj, &s, bounds, settings) {
            if better(&m, &best) {
                best = m;
            }
        }
    }
    Ok(best)
}

/// Minimizes a cost over a control sequence inside the control box and
/// returns the best sequence with its value.
pub fn optimize_controls<T: Real, F: Fn(&[Control<T>]) -> T>(
    objective: F,
    init: &[Control<T>],
    limits: &ControlLimits<T>,
    settings: &OptimizerSettings,
) -> Result<(Vec<Control<T>>, T)> {
    let obj = FnObjective(|z: &[T]| objective(&unflatten(z)));
    let bounds = Bounds::for_controls(limits, init.len());
    let m = minimize_multistart(&obj, &flatten(init), &[], &bounds, settings)?;
    Ok((unflatten(&m.point), m.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_goes_to_zero() {
        let limits = ControlLimits::<f64>::default();
        let init: Vec<Control> = (0..10).map(|k| Control::new(0.4 - 0.1 * k as f64, 0.3)).collect();
        let (u, v) = optimize_controls(
            |u: &[Control]| u.iter().map(|c| c.accel * c.accel + c.steer * c.steer).sum(),
            &init,
            &limits,
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(v < 1e-5);
        assert!(u.iter().all(|c| c.accel.abs() < 1e-3 && c.steer.abs() < 1e-3));
    }

    #[test]
    fn bound_is_active() {
        let limits = ControlLimits::<f64>::default();
        let (u, _) = optimize_controls(
            |u: &[Control]| u.iter().map(|c| (c.accel - 0.7).powi(2) + c.steer * c.steer).sum(),
            &vec![Control::zero(); 10],
            &limits,
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(u.iter().all(|c| (c.accel - 0.5).abs() < 1e-9));
    }

    #[test]
    fn non_finite_init_is_rejected() {
        let limits = ControlLimits::<f64>::default();
        let r = optimize_controls(|_: &[Control]| f64::NAN, &vec![Control::zero(); 3], &limits, &OptimizerSettings::default());
        assert!(matches!(r, Err(Error::DegenerateObjective(_))));
    }

    #[test]
    fn rosenbrock_unbounded() {
        let obj = FnObjective(|z: &[f64]| (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2));
        let s = OptimizerSettings { max_iters: 500, ..Default::default() };
        let m = minimize(&obj, &[-1.2, 1.0], &Bounds::unbounded(2), &s).unwrap();
        assert!((m.point[0] - 1.0).abs() < 1e-3 && (m.point[1] - 1.0).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn analytic_gradient_path_is_used() {
        use std::cell::Cell;
        let calls = Cell::new(0);
        let obj = GradObjective(|z: &[f64], g: Option<&mut [f64]>| {
            calls.set(calls.get() + 1);
            if let Some(g) = g {
                for i in 0..z.len() {
                    g[i] = 2.0 * (z[i] - 0.25);
                }
            }
            z.iter().map(|v| (v - 0.25).powi(2)).sum()
        });
        let m = minimize(&obj, &[1.0; 6], &Bounds::unbounded(6), &OptimizerSettings::default()).unwrap();
        assert!(m.point.iter().all(|v| (v - 0.25).abs() < 1e-6));
        // Finite differences would need 12 evaluations per gradient.
        assert!(calls.get() < 30, "{}", calls.get());
    }

    #[test]
    fn never_worse_than_init() {
        let obj = FnObjective(|z: &[f64]| (z[0] * 3.0).sin() + 0.1 * z[0] * z[0]);
        let b = Bounds::new(vec![-2.0], vec![2.0]);
        for x0 in [-2.0, -0.5, 0.0, 0.7, 2.0] {
            let m = minimize_multistart(&obj, &[x0], &[], &b, &OptimizerSettings::default()).unwrap();
            assert!(m.value <= obj.value(&[x0]) + 1e-15);
        }
    }
}

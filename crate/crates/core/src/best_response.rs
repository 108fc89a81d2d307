//! The human model: a best response to a fixed robot plan.

use crate::cost::{cost_gradient, cumulative_cost, CostWeights, Perspective, Scene};
use crate::dynamics::Control;
use crate::error::Result;
use crate::optimizer::{flatten, minimize_multistart, unflatten, Bounds, GradObjective, OptimizerSettings};
use crate::real::Real;

/// Minimizes `who`'s own cost over its controls with the partner's sequence
/// held fixed. Returns the sequence and its cost.
pub fn respond<T: Real>(
    scene: &Scene<T>,
    who: Perspective,
    partner: &[Control<T>],
    weights: &CostWeights<T>,
    settings: &OptimizerSettings,
    warm: Option<&[Control<T>]>,
) -> Result<(Vec<Control<T>>, T)> {
    let n = partner.len();
    let obj = GradObjective(|z: &[T], g: Option<&mut [T]>| {
        let mine = unflatten(z);
        let (ur, uh) = match who {
            Perspective::Robot => (mine.as_slice(), partner),
            Perspective::Human => (partner, mine.as_slice()),
        };
        match g {
            None => cumulative_cost(scene, ur, uh, weights, who),
            Some(g) => {
                let cg = cost_gradient(scene, ur, uh, weights, who);
                let src = match who {
                    Perspective::Robot => &cg.robot,
                    Perspective::Human => &cg.human,
                };
                g.copy_from_slice(&flatten(src));
                cg.value
            }
        }
    });
    let init = match warm {
        Some(w) if w.len() == n => flatten(w),
        _ => vec![T::zero(); 2 * n],
    };
    let bounds = Bounds::for_controls(&scene.model.limits, n);
    let m = minimize_multistart(&obj, &init, &[], &bounds, settings)?;
    Ok((unflatten(&m.point), m.value))
}

/// `g(x0, u_R; theta_H)`: the human's cost-minimizing sequence against the
/// robot plan `u_robot`. `warm` is typically the previous response.
pub fn human_best_response<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    theta_h: &CostWeights<T>,
    settings: &OptimizerSettings,
    warm: Option<&[Control<T>]>,
) -> Result<Vec<Control<T>>> {
    respond(scene, Perspective::Human, u_robot, theta_h, settings, warm).map(|(u, _)| u)
}

/// `C*_H(u_R)`: the human's cost at its best response.
pub fn human_response_cost<T: Real>(
    scene: &Scene<T>,
    u_robot: &[Control<T>],
    theta_h: &CostWeights<T>,
    settings: &OptimizerSettings,
    warm: Option<&[Control<T>]>,
) -> Result<T> {
    let u_h = human_best_response(scene, u_robot, theta_h, settings, warm)?;
    Ok(cumulative_cost(scene, u_robot, &u_h, theta_h, Perspective::Human))
}

//! Planar helpers: lane centerlines and vehicle footprints.

use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::real::{lit, Real};

/// Piecewise-linear curve, e.g. a lane centerline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline<T = f64> {
    pub points: Vec<[T; 2]>,
}

/// Closest point of a polyline to a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    pub point: [T; 2],
    pub distance: T,
    /// Arc length from the first vertex to `point`.
    pub station: T,
    /// Unit direction of travel along the polyline at `point`.
    pub tangent: [T; 2],
}

impl<T: Real> Polyline<T> {
    pub fn new(points: Vec<[T; 2]>) -> Self {
        assert!(!points.is_empty(), "polyline needs at least one point");
        Self { points }
    }

    /// Straight segment.
    pub fn segment(a: [T; 2], b: [T; 2]) -> Self {
        Self { points: vec![a, b] }
    }

    pub fn project(&self, p: [T; 2]) -> Projection<T> {
        if self.points.len() == 1 {
            let q = self.points[0];
            return Projection { point: q, distance: dist(p, q), station: T::zero(), tangent: [T::one(), T::zero()] };
        }
        let mut best =
            Projection { point: self.points[0], distance: T::infinity(), station: T::zero(), tangent: [T::one(), T::zero()] };
        let mut acc = T::zero();
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > T::zero() {
                (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).max(T::zero()).min(T::one())
            } else {
                T::zero()
            };
            let q = [a[0] + t * dx, a[1] + t * dy];
            let d = dist(p, q);
            if d < best.distance {
                let len = len2.sqrt();
                let tangent = if len > T::zero() { [dx / len, dy / len] } else { best.tangent };
                best = Projection { point: q, distance: d, station: acc + t * len, tangent };
            }
            acc += len2.sqrt();
        }
        best
    }

    pub fn length(&self) -> T {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    pub fn cast<U: Real>(&self) -> Polyline<U> {
        Polyline { points: self.points.iter().map(|p| [lit(p[0].as_f64()), lit(p[1].as_f64())]).collect() }
    }
}

pub fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Corners of the oriented rectangle a vehicle occupies.
pub fn footprint<T: Real>(s: &AgentState<T>, length: T, width: T) -> [[T; 2]; 4] {
    let (sn, cs) = s.heading.sin_cos();
    let half = lit::<T>(0.5);
    let (hl, hw) = (length * half, width * half);
    let corner = |l: T, w: T| [s.x + l * cs - w * sn, s.y + l * sn + w * cs];
    [corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)]
}

fn overlap_on_axis<T: Real>(a: &[[T; 2]; 4], b: &[[T; 2]; 4], axis: [T; 2]) -> bool {
    let proj = |poly: &[[T; 2]; 4]| {
        poly.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| {
            let v = p[0] * axis[0] + p[1] * axis[1];
            (lo.min(v), hi.max(v))
        })
    };
    let (a0, a1) = proj(a);
    let (b0, b1) = proj(b);
    a1 > b0 && b1 > a0
}

/// Separating-axis test for two convex quadrilaterals.
pub fn rects_intersect<T: Real>(a: &[[T; 2]; 4], b: &[[T; 2]; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..2 {
            let (p, q) = (poly[i], poly[i + 1]);
            let axis = [-(q[1] - p[1]), q[0] - p[0]];
            if !overlap_on_axis(a, b, axis) {
                return false;
            }
        }
    }
    true
}

fn point_segment_distance<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    Polyline::segment(a, b).project(p).distance
}

/// Clearance between two vehicle footprints; zero when they overlap.
pub fn footprint_gap<T: Real>(a: &AgentState<T>, b: &AgentState<T>, length: T, width: T) -> T {
    let fa = footprint(a, length, width);
    let fb = footprint(b, length, width);
    if rects_intersect(&fa, &fb) {
        return T::zero();
    }
    let mut best = T::infinity();
    for (from, to) in [(&fa, &fb), (&fb, &fa)] {
        for p in from.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(*p, to[i], to[(i + 1) % 4]));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_on_straight_lane() {
        let lane = Polyline::<f64>::segment([0.0, 0.0], [10.0, 0.0]);
        let p = lane.project([3.0, 0.37]);
        assert!((p.distance - 0.37).abs() < 1e-12);
        assert!((p.station - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_picks_nearest_segment() {
        let l = Polyline::<f64>::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let p = l.project([1.2, 0.8]);
        assert!((p.distance - 0.2).abs() < 1e-12);
        assert!((p.station - 1.8).abs() < 1e-12);
        assert!((l.length() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gap_between_aligned_cars() {
        let a = AgentState::<f64>::new(0.0, 0.0, 0.0, 0.0);
        let b = AgentState::new(0.75, 0.0, 0.0, 0.0);
        assert!((footprint_gap(&a, &b, 0.45, 0.2) - 0.30).abs() < 1e-12);
        let c = AgentState::new(0.0, 0.37, 0.0, 0.0);
        assert!((footprint_gap(&a, &c, 0.45, 0.2) - 0.17).abs() < 1e-12);
        let d = AgentState::new(0.3, 0.1, 0.3, 0.0);
        assert_eq!(footprint_gap(&a, &d, 0.45, 0.2), 0.0);
    }

    #[test]
    fn gap_with_rotated_car() {
        // Car b turned 90 degrees, its nearest edge 0.1 m in front of a's bumper.
        let a = AgentState::<f64>::new(0.0, 0.0, 0.0, 0.0);
        let b = AgentState::new(0.225 + 0.1 + 0.1, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        assert!((footprint_gap(&a, &b, 0.45, 0.2) - 0.1).abs() < 1e-12);
    }
}

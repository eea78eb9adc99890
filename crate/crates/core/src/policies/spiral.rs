//! Archimedean spiral `r(θ) = a + bθ` walked at constant arc-length steps.

use crate::geom::Vec2;

/// Arc length from `θ = 0` to `theta`.
pub fn spiral_arc_length(a: f64, b: f64, theta: f64) -> f64 {
    if b == 0.0 {
        return a * theta;
    }
    let f = |r: f64| {
        let h = (r * r + b * b).sqrt();
        (r * h + b * b * (r + h).ln()) / (2.0 * b)
    };
    f(a + b * theta) - f(a)
}

/// Waypoint number `step` on the spiral around `center`; consecutive
/// waypoints are exactly `v_max` apart along the curve, so at most `v_max`
/// apart in a straight line. Step 0 is `center + (a, 0)`.
pub fn spiral_waypoint(center: Vec2, step: usize, a: f64, b: f64, v_max: f64) -> Vec2 {
    let s = step as f64 * v_max;
    let theta = if s == 0.0 {
        0.0
    } else if b == 0.0 {
        s / a.max(f64::MIN_POSITIVE)
    } else {
        // Newton on L(θ) = s. L is convex and increasing, so starting from
        // an upper bound converges monotonically. L(θ) ≥ aθ + bθ²/2 gives
        // the start.
        let mut th = ((a * a + 2.0 * b * s).sqrt() - a) / b;
        for _ in 0..100 {
            let r = a + b * th;
            let f = spiral_arc_length(a, b, th) - s;
            let step = f / (r * r + b * b).sqrt();
            th -= step;
            if step.abs() < 1e-14 * th.max(1.0) {
                break;
            }
        }
        th
    };
    let r = a + b * theta;
    center + Vec2::new(r * theta.cos(), r * theta.sin())
}

//! Small planar vector helpers over `[f64; 2]`.

use std::f64::consts::PI;

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, k: f64) -> Point {
    [a[0] * k, a[1] * k]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// z-component of the 3D cross product; positive when `b` is to the left of `a`.
#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Rotates `a` anti-clockwise by `angle` radians.
#[inline]
pub fn rotate(a: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Returns the representative of `angle` (mod 2π) closest to `reference`.
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    reference + wrap_angle(angle - reference)
}

/// Root mean square; 0 for an empty slice.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|k| k * k).sum::<f64>() / values.len() as f64).sqrt()
}

/// Signed curvature of the curve through three points sampled at uniform
/// parameter spacing `h`, using central differences for the first and second
/// derivatives. Returns `None` when the first derivative vanishes.
pub fn central_difference_curvature(prev: Point, cur: Point, next: Point, h: f64) -> Option<f64> {
    let dx = (next[0] - prev[0]) / (2.0 * h);
    let dy = (next[1] - prev[1]) / (2.0 * h);
    let ddx = (next[0] - 2.0 * cur[0] + prev[0]) / (h * h);
    let ddy = (next[1] - 2.0 * cur[1] + prev[1]) / (h * h);
    let speed_sq = dx * dx + dy * dy;
    if speed_sq.sqrt() < 1e-9 {
        return None;
    }
    Some((dx * ddy - dy * ddx) / speed_sq.powf(1.5))
}

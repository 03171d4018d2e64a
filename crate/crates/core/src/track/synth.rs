//! Builder for synthetic circuits made of straights and circular arcs, and
//! the definitions of the bundled tracks.

use std::f64::consts::PI;

use super::{HalfWidth, TrackSpec};
use crate::geom::Point;

/// Turtle-style centerline builder. Positive arc angles turn left.
#[derive(Debug, Clone)]
pub struct TrackBuilder {
    max_spacing: f64,
    position: Point,
    heading: f64,
    points: Vec<Point>,
    arc_length: Vec<f64>,
}

impl TrackBuilder {
    pub fn new(start: Point, heading: f64, max_spacing: f64) -> Self {
        TrackBuilder {
            max_spacing,
            position: start,
            heading,
            points: vec![start],
            arc_length: vec![0.0],
        }
    }

    fn push(&mut self, p: Point, ds: f64) {
        let s = self.arc_length.last().copied().unwrap_or(0.0) + ds;
        self.points.push(p);
        self.arc_length.push(s);
        self.position = p;
    }

    pub fn straight(mut self, length: f64) -> Self {
        let n = (length / self.max_spacing).ceil().max(1.0) as usize;
        let start = self.position;
        let (s, c) = self.heading.sin_cos();
        for k in 1..=n {
            let t = length * k as f64 / n as f64;
            self.push([start[0] + c * t, start[1] + s * t], length / n as f64);
        }
        self
    }

    pub fn arc(mut self, radius: f64, angle: f64) -> Self {
        let length = radius * angle.abs();
        let n = (length / self.max_spacing).ceil().max(1.0) as usize;
        let side = angle.signum();
        // Center lies to the left for a left turn.
        let normal = self.heading + side * PI / 2.0;
        let center = [
            self.position[0] + radius * normal.cos(),
            self.position[1] + radius * normal.sin(),
        ];
        let start_angle = normal + PI;
        let chord = 2.0 * radius * (angle.abs() / (2.0 * n as f64)).sin();
        for k in 1..=n {
            let a = start_angle + angle * k as f64 / n as f64;
            self.push([center[0] + radius * a.cos(), center[1] + radius * a.sin()], chord);
        }
        self.heading += angle;
        self
    }

    /// Lateral chicane made of four arcs; returns to the entry heading and
    /// lateral position. `angle > 0` swerves right first.
    pub fn chicane(self, radius: f64, angle: f64) -> Self {
        self.arc(radius, -angle).arc(radius, angle).arc(radius, angle).arc(radius, -angle)
    }

    pub fn position(&self) -> Point {
        self.position
    }

    /// Finishes a closed circuit. The final point is dropped because it
    /// coincides with the start.
    pub fn close(
        mut self,
        name: &str,
        left: impl Fn(f64) -> f64,
        right: impl Fn(f64) -> f64,
    ) -> TrackSpec {
        let gap = crate::geom::dist(self.points[0], self.position);
        assert!(gap < 1e-6, "circuit does not close (gap {gap})");
        self.points.pop();
        self.arc_length.pop();
        TrackSpec {
            name: name.to_string(),
            closed: true,
            half_width_left: widths(&self.arc_length, left),
            half_width_right: widths(&self.arc_length, right),
            centerline: self.points,
        }
    }

    pub fn finish_open(self, name: &str, left: f64, right: f64) -> TrackSpec {
        TrackSpec {
            name: name.to_string(),
            closed: false,
            centerline: self.points,
            half_width_left: HalfWidth::Constant(left),
            half_width_right: HalfWidth::Constant(right),
        }
    }
}

fn widths(arc_length: &[f64], f: impl Fn(f64) -> f64) -> HalfWidth {
    let values: Vec<f64> = arc_length.iter().map(|&s| f(s)).collect();
    if values.windows(2).all(|w| w[0] == w[1]) {
        HalfWidth::Constant(values[0])
    } else {
        HalfWidth::PerPoint(values)
    }
}

const SPACING: f64 = 0.25;

/// Two 200 m straights joined by radius-30 m semicircles, 10 m wide,
/// driven anti-clockwise from the origin heading east.
pub fn oval() -> TrackSpec {
    TrackBuilder::new([0.0, 0.0], 0.0, SPACING)
        .straight(200.0)
        .arc(30.0, PI)
        .straight(200.0)
        .arc(30.0, PI)
        .close("oval", |_| 5.0, |_| 5.0)
}

/// Rounded circuit with a four-arc chicane on each straight.
pub fn s_curve() -> TrackSpec {
    let chicane = PI / 4.0;
    TrackBuilder::new([0.0, 0.0], 0.0, SPACING)
        .straight(60.0)
        .chicane(25.0, chicane)
        .straight(60.0)
        .arc(35.0, PI)
        .straight(60.0)
        .chicane(25.0, chicane)
        .straight(60.0)
        .arc(35.0, PI)
        .close("s-curve", |_| 5.0, |_| 5.0)
}

/// Long straights with tight hairpins; the back straight narrows in its
/// middle third ("speed trap").
pub fn speed_trap() -> TrackSpec {
    let straight = 300.0;
    let hairpin = 20.0;
    let back_start = straight + PI * hairpin;
    let pinch = move |s: f64| {
        let u = (s - back_start) / straight;
        if (1.0 / 3.0..=2.0 / 3.0).contains(&u) {
            3.5
        } else if (0.2..1.0 / 3.0).contains(&u) {
            6.0 - 2.5 * (u - 0.2) / (1.0 / 3.0 - 0.2)
        } else if (2.0 / 3.0..0.8).contains(&u) {
            3.5 + 2.5 * (u - 2.0 / 3.0) / (0.8 - 2.0 / 3.0)
        } else {
            6.0
        }
    };
    TrackBuilder::new([0.0, 0.0], 0.0, SPACING)
        .straight(straight)
        .arc(hairpin, PI)
        .straight(straight)
        .arc(hairpin, PI)
        .close("speed-trap", pinch, pinch)
}

/// Generator for a bundled track by name.
pub fn generate(name: &str) -> Option<TrackSpec> {
    match name {
        "oval" => Some(oval()),
        "s-curve" => Some(s_curve()),
        "speed-trap" => Some(speed_trap()),
        _ => None,
    }
}

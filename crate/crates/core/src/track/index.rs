use super::grid::SegmentGrid;
use super::{TrackError, TrackSpec};
use crate::geom::{self, central_difference_curvature, rms, cross, dot, norm, scale, sub, wrap_angle, Point};

/// Default arc-length spacing of the curvature table, in meters.
pub const DEFAULT_CURVATURE_SPACING: f64 = 1.0;

/// Result of projecting a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc-length progress of the foot point, in `[0, total_length)` for
    /// closed tracks.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub d: f64,
    /// Heading of the nearest segment, wrapped to (−π, π].
    pub heading: f64,
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterlineSample {
    pub point: Point,
    pub heading: f64,
    pub curvature: f64,
}

/// Precomputed lookup tables over a validated [`TrackSpec`].
///
/// Immutable after construction, so it can be shared behind an `Arc`.
#[derive(Debug, Clone)]
pub struct TrackIndex {
    spec: TrackSpec,
    /// Arc length at the start of each segment plus the total at the end.
    cumulative: Vec<f64>,
    seg_len: Vec<f64>,
    tangents: Vec<Point>,
    /// Unwrapped segment headings.
    seg_heading: Vec<f64>,
    /// Unwrapped per-vertex headings (outgoing segment; incoming for the last
    /// vertex of an open track).
    vertex_heading: Vec<f64>,
    total_length: f64,
    curvature_spacing: f64,
    curvature: Vec<f64>,
    grid: SegmentGrid,
}

impl TrackIndex {
    pub fn new(spec: TrackSpec) -> Result<Self, TrackError> {
        Self::with_curvature_spacing(spec, DEFAULT_CURVATURE_SPACING)
    }

    pub fn with_curvature_spacing(spec: TrackSpec, spacing: f64) -> Result<Self, TrackError> {
        spec.validate()?;
        let m = spec.segment_count();
        let mut cumulative = Vec::with_capacity(m + 1);
        let mut seg_len = Vec::with_capacity(m);
        let mut tangents = Vec::with_capacity(m);
        let mut seg_heading: Vec<f64> = Vec::with_capacity(m);
        let mut acc = 0.0;
        for i in 0..m {
            let (a, b) = spec.segment(i);
            let v = sub(b, a);
            let len = norm(v);
            cumulative.push(acc);
            acc += len;
            seg_len.push(len);
            tangents.push(scale(v, 1.0 / len));
            let h = v[1].atan2(v[0]);
            let h = match seg_heading.last() {
                Some(&prev) => geom::unwrap_near(h, prev),
                None => h,
            };
            seg_heading.push(h);
        }
        cumulative.push(acc);
        let n = spec.centerline.len();
        let vertex_heading = (0..n).map(|i| seg_heading[i.min(m - 1)]).collect();

        let grid = SegmentGrid::build(&spec);
        let mut index = TrackIndex {
            spec,
            cumulative,
            seg_len,
            tangents,
            seg_heading,
            vertex_heading,
            total_length: acc,
            curvature_spacing: spacing,
            curvature: Vec::new(),
            grid,
        };
        let (h, samples) = index.uniform_resample(spacing);
        index.curvature_spacing = h;
        index.curvature = index.curvature_at_samples(&samples, h);
        Ok(index)
    }

    pub fn spec(&self) -> &TrackSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn closed(&self) -> bool {
        self.spec.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn cumulative_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn segment_tangents(&self) -> &[Point] {
        &self.tangents
    }

    pub fn vertex_headings(&self) -> &[f64] {
        &self.vertex_heading
    }

    /// Curvature table and its actual arc-length spacing.
    pub fn curvature_table(&self) -> (f64, &[f64]) {
        (self.curvature_spacing, &self.curvature)
    }

    /// Maps any `s` onto the centerline domain: wrapped for closed tracks,
    /// clamped for open ones.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.spec.closed {
            let w = s.rem_euclid(self.total_length);
            if w >= self.total_length {
                0.0
            } else {
                w
            }
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    fn segment_at(&self, s: f64) -> usize {
        let m = self.seg_len.len();
        let i = self.cumulative.partition_point(|&c| c <= s);
        i.saturating_sub(1).min(m - 1)
    }

    /// Centerline point by linear interpolation along arc length.
    pub fn point_at(&self, s: f64) -> Point {
        let s = self.normalize_s(s);
        let i = self.segment_at(s);
        let t = ((s - self.cumulative[i]) / self.seg_len[i]).clamp(0.0, 1.0);
        let (a, b) = self.spec.segment(i);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    pub fn sample_centerline(&self, s: f64) -> CenterlineSample {
        let s = self.normalize_s(s);
        let i = self.segment_at(s);
        CenterlineSample {
            point: self.point_at(s),
            heading: wrap_angle(self.seg_heading[i]),
            curvature: self.curvature_at(s),
        }
    }

    /// Linearly interpolated value of the curvature table.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let s = self.normalize_s(s);
        let h = self.curvature_spacing;
        let k = self.curvature.len();
        let x = s / h;
        let i = (x.floor() as usize).min(k - 1);
        let frac = x - i as f64;
        let j = if self.spec.closed { (i + 1) % k } else { (i + 1).min(k - 1) };
        self.curvature[i] * (1.0 - frac) + self.curvature[j] * frac
    }

    /// Interpolated half-widths (left, right) at progress `s`.
    pub fn half_widths_at(&self, s: f64) -> (f64, f64) {
        let s = self.normalize_s(s);
        let i = self.segment_at(s);
        let t = ((s - self.cumulative[i]) / self.seg_len[i]).clamp(0.0, 1.0);
        let j = (i + 1) % self.spec.centerline.len();
        let lerp = |w: &super::HalfWidth| w.at(i) * (1.0 - t) + w.at(j) * t;
        (lerp(&self.spec.half_width_left), lerp(&self.spec.half_width_right))
    }

    /// Distance from `p` to segment `i`, with the clamped foot parameter.
    pub(crate) fn segment_distance(&self, i: usize, p: Point) -> (f64, f64) {
        let (a, _) = self.spec.segment(i);
        let t = (dot(sub(p, a), self.tangents[i]) / self.seg_len[i]).clamp(0.0, 1.0);
        let foot = [a[0] + t * self.seg_len[i] * self.tangents[i][0], a[1] + t * self.seg_len[i] * self.tangents[i][1]];
        (geom::dist(p, foot), t)
    }

    fn projection_from_segment(&self, i: usize, p: Point, distance: f64, t: f64) -> Projection {
        let (a, _) = self.spec.segment(i);
        let side = cross(self.tangents[i], sub(p, a));
        let d = if side < 0.0 { -distance } else { distance };
        let mut s = self.cumulative[i] + t * self.seg_len[i];
        if self.spec.closed && s >= self.total_length {
            s -= self.total_length;
        }
        Projection {
            s,
            d,
            heading: wrap_angle(self.seg_heading[i]),
            segment: i,
        }
    }

    /// Projects `p` onto the globally nearest centerline segment. Ties go to
    /// the lowest segment index.
    pub fn project(&self, p: Point) -> Projection {
        let (i, distance, t) = self.grid.nearest(self, p);
        self.projection_from_segment(i, p, distance, t)
    }

    /// [`project`](Self::project) restricted to points within `radius` of the
    /// centerline; `None` for anything farther.
    pub fn project_within(&self, p: Point, radius: f64) -> Option<Projection> {
        let (i, distance, t) = self.grid.nearest_within(self, p, radius)?;
        Some(self.projection_from_segment(i, p, distance, t))
    }

    /// Largest half-width on either side anywhere along the track.
    pub fn max_half_width(&self) -> f64 {
        self.spec.half_width_left.max().max(self.spec.half_width_right.max())
    }

    /// Reference implementation of [`project`](Self::project) by linear scan.
    pub fn project_linear(&self, p: Point) -> Projection {
        let mut best = (usize::MAX, f64::INFINITY, 0.0);
        for i in 0..self.seg_len.len() {
            let (dd, t) = self.segment_distance(i, p);
            if dd < best.1 {
                best = (i, dd, t);
            }
        }
        self.projection_from_segment(best.0, p, best.1, best.2)
    }

    /// Boundary-inclusive drivable-area test.
    pub fn is_inside_drivable(&self, p: Point) -> bool {
        let proj = self.project(p);
        self.offset_is_drivable(&proj)
    }

    pub fn offset_is_drivable(&self, proj: &Projection) -> bool {
        let (left, right) = self.half_widths_at(proj.s);
        -right <= proj.d && proj.d <= left
    }

    /// Resamples the centerline at a uniform spacing. For closed tracks the
    /// spacing is adjusted so that it divides the total length exactly; the
    /// adjusted spacing is returned with the samples.
    pub fn uniform_resample(&self, spacing: f64) -> (f64, Vec<Point>) {
        if self.spec.closed {
            let count = ((self.total_length / spacing).round() as usize).max(3);
            let h = self.total_length / count as f64;
            (h, (0..count).map(|k| self.point_at(k as f64 * h)).collect())
        } else {
            let count = ((self.total_length / spacing).round() as usize).max(2);
            let h = self.total_length / count as f64;
            (h, (0..=count).map(|k| self.point_at(k as f64 * h)).collect())
        }
    }

    fn curvature_at_samples(&self, samples: &[Point], h: f64) -> Vec<f64> {
        let k = samples.len();
        let mut out = vec![0.0; k];
        if self.spec.closed {
            for i in 0..k {
                let prev = samples[(i + k - 1) % k];
                let next = samples[(i + 1) % k];
                out[i] = central_difference_curvature(prev, samples[i], next, h).unwrap_or(0.0);
            }
        } else {
            for i in 1..k - 1 {
                out[i] = central_difference_curvature(samples[i - 1], samples[i], samples[i + 1], h).unwrap_or(0.0);
            }
            out[0] = out[1];
            out[k - 1] = out[k - 2];
        }
        out
    }

    /// Root-mean-square centerline curvature from a uniform arc-length
    /// resampling at `spacing`.
    pub fn track_curvature_rms(&self, spacing: f64) -> Result<f64, TrackError> {
        if !(spacing > 0.0 && spacing < self.total_length / 16.0) {
            return Err(TrackError::SpacingOutOfRange {
                spacing,
                max: self.total_length / 16.0,
            });
        }
        let (h, samples) = self.uniform_resample(spacing);
        let kappa: Vec<f64> = if self.spec.closed {
            self.curvature_at_samples(&samples, h)
        } else {
            let k = samples.len();
            (1..k - 1)
                .filter_map(|i| central_difference_curvature(samples[i - 1], samples[i], samples[i + 1], h))
                .collect()
        };
        Ok(rms(&kappa))
    }

    /// RMS curvature of the centerline over the arc-length span
    /// `[s_from, s_to]` (unwrapped; may cover several laps).
    pub fn curvature_rms_over_span(&self, s_from: f64, s_to: f64, spacing: f64) -> Result<f64, TrackError> {
        if !(spacing > 0.0 && spacing < self.total_length / 16.0) {
            return Err(TrackError::SpacingOutOfRange {
                spacing,
                max: self.total_length / 16.0,
            });
        }
        let span = s_to - s_from;
        if span < 2.0 * spacing {
            return Err(TrackError::SpanTooShort { span });
        }
        let count = (span / spacing).floor() as usize;
        let mut kappa = Vec::with_capacity(count + 1);
        for k in 0..=count {
            let s = s_from + k as f64 * spacing;
            if !self.spec.closed && (s - spacing < 0.0 || s + spacing > self.total_length) {
                continue;
            }
            let prev = self.point_at(s - spacing);
            let cur = self.point_at(s);
            let next = self.point_at(s + spacing);
            if let Some(c) = central_difference_curvature(prev, cur, next, spacing) {
                kappa.push(c);
            }
        }
        Ok(rms(&kappa))
    }
}

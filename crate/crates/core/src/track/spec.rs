use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrackError;
use crate::geom::{cross, dist, dot, sub, Point};

pub const MIN_POINTS: usize = 8;
pub const MIN_SEPARATION: f64 = 1e-6;

/// Drivable half-width on one side of the centerline: either one value for
/// the whole track or one value per centerline point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HalfWidth {
    Constant(f64),
    PerPoint(Vec<f64>),
}

impl HalfWidth {
    pub fn at(&self, index: usize) -> f64 {
        match self {
            HalfWidth::Constant(w) => *w,
            HalfWidth::PerPoint(ws) => ws[index],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            HalfWidth::Constant(w) => *w,
            HalfWidth::PerPoint(ws) => ws.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// A racetrack as stored on disk: centerline polyline plus half-widths, in
/// meters on the east/north ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    pub closed: bool,
    pub centerline: Vec<Point>,
    pub half_width_left: HalfWidth,
    pub half_width_right: HalfWidth,
}

#[derive(Deserialize)]
struct RawTrack {
    name: Option<String>,
    closed: Option<bool>,
    centerline: Option<Vec<Point>>,
    half_width_left: Option<HalfWidth>,
    half_width_right: Option<HalfWidth>,
}

impl TrackSpec {
    pub fn from_json_str(text: &str) -> Result<Self, TrackError> {
        let raw: RawTrack =
            serde_json::from_str(text).map_err(|e| TrackError::Malformed(e.to_string()))?;
        let spec = TrackSpec {
            name: raw.name.ok_or(TrackError::MissingField("name"))?,
            closed: raw.closed.ok_or(TrackError::MissingField("closed"))?,
            centerline: raw.centerline.ok_or(TrackError::MissingField("centerline"))?,
            half_width_left: raw
                .half_width_left
                .ok_or(TrackError::MissingField("half_width_left"))?,
            half_width_right: raw
                .half_width_right
                .ok_or(TrackError::MissingField("half_width_right"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_reader(mut reader: impl std::io::Read) -> Result<Self, TrackError> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| TrackError::Io(e.to_string()))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("track spec serializes")
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.centerline.len()
        } else {
            self.centerline.len() - 1
        }
    }

    pub fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.centerline.len();
        (self.centerline[i], self.centerline[(i + 1) % n])
    }

    /// Checks every structural invariant; the first violation found is returned.
    pub fn validate(&self) -> Result<(), TrackError> {
        let n = self.centerline.len();
        if n < MIN_POINTS {
            return Err(TrackError::TooFewPoints { found: n });
        }
        for (i, p) in self.centerline.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(TrackError::NonFinitePoint { index: i });
            }
        }
        for i in 1..n {
            if dist(self.centerline[i - 1], self.centerline[i]) <= MIN_SEPARATION {
                return Err(TrackError::DuplicatePoint { index: i });
            }
        }
        if self.closed && dist(self.centerline[n - 1], self.centerline[0]) <= MIN_SEPARATION {
            return Err(TrackError::RepeatedClosingPoint);
        }
        check_widths("half_width_left", &self.half_width_left, n)?;
        check_widths("half_width_right", &self.half_width_right, n)?;
        if let Some((first, second)) = self.find_self_intersection() {
            return Err(TrackError::SelfIntersecting { first, second });
        }
        Ok(())
    }

    /// O(n²) scan over segment pairs. Adjacent segments only conflict when
    /// they fold back onto each other.
    fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.segment_count();
        let boxes: Vec<[f64; 4]> = (0..m)
            .map(|i| {
                let (a, b) = self.segment(i);
                [a[0].min(b[0]), a[1].min(b[1]), a[0].max(b[0]), a[1].max(b[1])]
            })
            .collect();
        for i in 0..m {
            for j in (i + 1)..m {
                let adjacent = j == i + 1 || (self.closed && i == 0 && j == m - 1);
                let (a, b) = self.segment(i);
                let (c, d) = self.segment(j);
                if adjacent {
                    // Shared vertex; only a reversal (collinear, opposite) overlaps.
                    let u = sub(b, a);
                    let v = sub(d, c);
                    if cross(u, v) == 0.0 && dot(u, v) < 0.0 {
                        return Some((i, j));
                    }
                    continue;
                }
                let (bi, bj) = (boxes[i], boxes[j]);
                if bi[2] < bj[0] || bj[2] < bi[0] || bi[3] < bj[1] || bj[3] < bi[1] {
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

fn check_widths(field: &'static str, w: &HalfWidth, n: usize) -> Result<(), TrackError> {
    match w {
        HalfWidth::Constant(v) => {
            if !(v.is_finite() && *v > 0.0) {
                return Err(TrackError::NonPositiveWidth { field, index: None });
            }
        }
        HalfWidth::PerPoint(vs) => {
            if vs.len() != n {
                return Err(TrackError::WidthCountMismatch {
                    field,
                    expected: n,
                    found: vs.len(),
                });
            }
            if let Some(i) = vs.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(TrackError::NonPositiveWidth {
                    field,
                    index: Some(i),
                });
            }
        }
    }
    Ok(())
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test, including touching and collinear overlap.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Loads and validates a track from a JSON file.
pub fn load_track(path: impl AsRef<Path>) -> Result<TrackSpec, TrackError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| TrackError::Io(format!("{}: {e}", path.display())))?;
    TrackSpec::from_reader(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn octagon_json(extra: &str) -> String {
        let pts: Vec<String> = (0..8)
            .map(|k| {
                let a = k as f64 * PI / 4.0;
                format!("[{}, {}]", a.cos(), a.sin())
            })
            .collect();
        format!(
            r#"{{"name": "octagon", "closed": true, "centerline": [{}] {extra}}}"#,
            pts.join(", ")
        )
    }

    #[test]
    fn unit_octagon_loads() {
        let t = TrackSpec::from_json_str(&octagon_json(
            r#", "half_width_left": 2.0, "half_width_right": 2.0"#,
        ))
        .unwrap();
        assert!(t.closed);
        assert_eq!(t.centerline.len(), 8);
    }

    #[test]
    fn missing_width_is_reported() {
        let err = TrackSpec::from_json_str(&octagon_json(r#", "half_width_right": 2.0"#)).unwrap_err();
        assert_eq!(err, TrackError::MissingField("half_width_left"));
    }

    #[test]
    fn too_few_points() {
        let json = r#"{"name":"x","closed":false,"centerline":[[0,0],[1,0],[2,0]],
            "half_width_left":1,"half_width_right":1}"#;
        assert_eq!(
            TrackSpec::from_json_str(json).unwrap_err(),
            TrackError::TooFewPoints { found: 3 }
        );
    }

    #[test]
    fn non_positive_width_reports_index() {
        let widths = "[1,1,1,0,1,1,1,1]";
        let err = TrackSpec::from_json_str(&octagon_json(&format!(
            r#", "half_width_left": {widths}, "half_width_right": 2.0"#
        )))
        .unwrap_err();
        assert_eq!(
            err,
            TrackError::NonPositiveWidth {
                field: "half_width_left",
                index: Some(3)
            }
        );
    }

    #[test]
    fn figure_eight_is_rejected() {
        // Bow-tie: segments 1 and 5 cross at the origin.
        let json = r#"{"name":"bowtie","closed":true,
            "centerline":[[-2,-1],[-1,-1],[1,1],[2,1],[2,-1],[1,-1],[-1,1],[-2,1]],
            "half_width_left":0.1,"half_width_right":0.1}"#;
        match TrackSpec::from_json_str(json).unwrap_err() {
            TrackError::SelfIntersecting { first, second } => {
                assert_eq!((first, second), (1, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repeated_closing_point_is_rejected() {
        let json = r#"{"name":"sq","closed":true,
            "centerline":[[0,0],[1,0],[2,0],[2,1],[2,2],[1,2],[0,2],[0,1],[0,0]],
            "half_width_left":0.1,"half_width_right":0.1}"#;
        assert_eq!(
            TrackSpec::from_json_str(json).unwrap_err(),
            TrackError::RepeatedClosingPoint
        );
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(
            TrackSpec::from_json_str("{not json").unwrap_err(),
            TrackError::Malformed(_)
        ));
        assert!(matches!(
            TrackSpec::from_json_str(r#"{"name": 3}"#).unwrap_err(),
            TrackError::Malformed(_)
        ));
    }

    #[test]
    fn duplicate_consecutive_point() {
        let json = r#"{"name":"d","closed":false,
            "centerline":[[0,0],[1,0],[1,0],[3,0],[4,0],[5,0],[6,0],[7,0]],
            "half_width_left":1,"half_width_right":1}"#;
        assert_eq!(
            TrackSpec::from_json_str(json).unwrap_err(),
            TrackError::DuplicatePoint { index: 2 }
        );
    }

    #[test]
    fn segment_intersection_cases() {
        assert!(segments_intersect([0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]));
        // collinear overlap
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]));
        // touching at an endpoint
        assert!(segments_intersect([0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 5.0]));
    }
}

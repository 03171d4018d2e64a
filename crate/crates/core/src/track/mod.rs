//! Racetrack geometry: centerline polylines with drivable half-widths, plus
//! projection, progress, curvature and containment queries.

mod grid;
mod index;
mod spec;
pub mod synth;

pub use index::{CenterlineSample, Projection, TrackIndex, DEFAULT_CURVATURE_SPACING};
pub use spec::{load_track, segments_intersect, HalfWidth, TrackSpec, MIN_POINTS};

use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("malformed track document: {0}")]
    Malformed(String),
    #[error("track document is missing field `{0}`")]
    MissingField(&'static str),
    #[error("track needs at least {MIN_POINTS} centerline points, found {found}")]
    TooFewPoints { found: usize },
    #[error("centerline point {index} is not finite")]
    NonFinitePoint { index: usize },
    #[error("centerline point {index} coincides with its predecessor")]
    DuplicatePoint { index: usize },
    #[error("closed track repeats its first point as the last point")]
    RepeatedClosingPoint,
    #[error("`{field}` must be positive (index {index:?})")]
    NonPositiveWidth { field: &'static str, index: Option<usize> },
    #[error("`{field}` has {found} entries but the centerline has {expected} points")]
    WidthCountMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("centerline segments {first} and {second} intersect")]
    SelfIntersecting { first: usize, second: usize },
    #[error("curvature spacing {spacing} outside (0, {max})")]
    SpacingOutOfRange { spacing: f64, max: f64 },
    #[error("arc-length span {span} too short for curvature estimation")]
    SpanTooShort { span: f64 },
    #[error("unknown bundled track `{0}`")]
    UnknownTrack(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Names of the tracks shipped with the crate.
pub const BUNDLED_TRACKS: [&str; 3] = ["oval", "s-curve", "speed-trap"];

/// JSON text of a bundled track.
pub fn bundled_json(name: &str) -> Option<&'static str> {
    match name {
        "oval" => Some(include_str!("../../tracks/oval.json")),
        "s-curve" => Some(include_str!("../../tracks/s-curve.json")),
        "speed-trap" => Some(include_str!("../../tracks/speed-trap.json")),
        _ => None,
    }
}

pub fn bundled(name: &str) -> Result<TrackSpec, TrackError> {
    let text = bundled_json(name).ok_or_else(|| TrackError::UnknownTrack(name.to_string()))?;
    TrackSpec::from_json_str(text)
}

/// Resolves a track reference: a bundled name, or else a path to a JSON file.
pub fn resolve(reference: &str) -> Result<TrackSpec, TrackError> {
    if bundled_json(reference).is_some() {
        return bundled(reference);
    }
    let path = Path::new(reference);
    if path.exists() {
        load_track(path)
    } else {
        Err(TrackError::UnknownTrack(reference.to_string()))
    }
}

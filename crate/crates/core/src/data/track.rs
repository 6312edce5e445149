use serde::{Deserialize, Serialize};

use super::DataError;
use crate::angle::{unit_to_angle, Angle};

/// Cells must move farther than this many micrometers to get a label.
pub const MIN_DISPLACEMENT_UM: f64 = 5.0;

/// Time-ordered positions of one cell in micrometers (y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    positions: Vec<(f64, f64)>,
    frame_interval: f64,
}

impl Track {
    pub fn new(positions: Vec<(f64, f64)>, frame_interval: f64) -> Result<Self, DataError> {
        if positions.len() < 2 {
            return Err(DataError::Config(format!("a track needs at least 2 positions, got {}", positions.len())));
        }
        if positions.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) || !(frame_interval > 0.0) {
            return Err(DataError::Config("track coordinates and frame interval must be finite and positive".into()));
        }
        Ok(Self { positions, frame_interval })
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    /// Net displacement from the first to the last position.
    pub fn displacement(&self) -> (f64, f64) {
        let (a, b) = (self.positions[0], self.positions[self.positions.len() - 1]);
        (b.0 - a.0, b.1 - a.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackLabel {
    Accepted(Angle),
    /// The cell moved `distance` micrometers, not more than the threshold.
    Rejected { distance: f64 },
}

/// Ground-truth direction of a track: the angle of its net displacement if
/// that exceeds `min_displacement`.
pub fn track_to_label(track: &Track, min_displacement: f64) -> TrackLabel {
    let (dx, dy) = track.displacement();
    let distance = dx.hypot(dy);
    if distance > min_displacement {
        TrackLabel::Accepted(unit_to_angle(dx, dy).expect("nonzero finite displacement"))
    } else {
        TrackLabel::Rejected { distance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn label(from: (f64, f64), to: (f64, f64)) -> TrackLabel {
        track_to_label(&Track::new(vec![from, (1.0, 1.0), to], 1.0).unwrap(), MIN_DISPLACEMENT_UM)
    }

    #[test]
    fn examples() {
        assert_eq!(label((0.0, 0.0), (10.0, 0.0)), TrackLabel::Accepted(Angle::ZERO));
        assert_eq!(label((0.0, 0.0), (3.0, 0.0)), TrackLabel::Rejected { distance: 3.0 });
        match label((0.0, 0.0), (0.0, -6.0)) {
            TrackLabel::Accepted(a) => assert!((a.radians() - 1.5 * PI).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(label((1.0, 1.0), (6.0, 1.0)), TrackLabel::Rejected { distance: 5.0 });
    }

    #[test]
    fn invalid_tracks() {
        assert!(Track::new(vec![(0.0, 0.0)], 1.0).is_err());
        assert!(Track::new(vec![(0.0, 0.0), (f64::NAN, 0.0)], 1.0).is_err());
        assert!(Track::new(vec![(0.0, 0.0), (1.0, 0.0)], 0.0).is_err());
    }
}

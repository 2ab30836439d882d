//! Cubic Hermite segments used to smooth the ICP through double support.

use nalgebra::Vector2;
use serde::Serialize;

use crate::geometry::Point2;

/// Position and velocity boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Knot {
    pub position: Point2,
    pub velocity: Vector2<f64>,
}

impl Knot {
    pub fn new(position: Point2, velocity: Vector2<f64>) -> Self {
        Self { position, velocity }
    }
}

/// Basis rows over the boundary vector `(p0, v0, p1, v1)`: the position row
/// and the velocity row at one time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteBasis {
    pub position: [f64; 4],
    pub velocity: [f64; 4],
}

impl HermiteBasis {
    /// Evaluates the basis for a segment of length `duration` at local time
    /// `t`.
    pub fn at(t: f64, duration: f64) -> Self {
        let d = duration;
        let s = t / d;
        let (s2, s3) = (s * s, s * s * s);
        let position = [
            2.0 * s3 - 3.0 * s2 + 1.0,
            (s3 - 2.0 * s2 + s) * d,
            -2.0 * s3 + 3.0 * s2,
            (s3 - s2) * d,
        ];
        let velocity = [
            (6.0 * s2 - 6.0 * s) / d,
            3.0 * s2 - 4.0 * s + 1.0,
            (-6.0 * s2 + 6.0 * s) / d,
            3.0 * s2 - 2.0 * s,
        ];
        Self { position, velocity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplineSegment {
    duration: f64,
    start: Knot,
    end: Knot,
}

impl SplineSegment {
    /// Returns `None` for a non-positive duration.
    pub fn new(start: Knot, end: Knot, duration: f64) -> Option<Self> {
        (duration.is_finite() && duration > 0.0).then_some(Self {
            duration,
            start,
            end,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn start(&self) -> &Knot {
        &self.start
    }

    pub fn end(&self) -> &Knot {
        &self.end
    }

    pub fn basis(&self, t: f64) -> HermiteBasis {
        HermiteBasis::at(t, self.duration)
    }

    fn combine(&self, row: &[f64; 4]) -> Vector2<f64> {
        self.start.position * row[0]
            + self.start.velocity * row[1]
            + self.end.position * row[2]
            + self.end.velocity * row[3]
    }

    pub fn position(&self, t: f64) -> Point2 {
        if t <= 0.0 {
            return self.start.position;
        }
        if t >= self.duration {
            return self.end.position;
        }
        self.combine(&self.basis(t).position)
    }

    pub fn velocity(&self, t: f64) -> Vector2<f64> {
        if t <= 0.0 {
            return self.start.velocity;
        }
        if t >= self.duration {
            return self.end.velocity;
        }
        self.combine(&self.basis(t).velocity)
    }
}

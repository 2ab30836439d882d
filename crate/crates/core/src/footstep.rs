//! Footsteps, CMP offsets and step timing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation, ConvexPolygon, Point2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FootstepError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("toe CMP offset must not be behind the heel offset")]
    ToeBehindHeel,
    #[error("{which} CMP offset lies outside the foothold of footstep {index}")]
    OffsetOutsideFoothold { which: &'static str, index: usize },
    #[error("footsteps {0} and {1} are on the same side")]
    SameSide(usize, usize),
    #[error("transfer split does not fit the heel/toe split (need T_TH >= T_iniDS and T_HT >= T_eoDS)")]
    InconsistentSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// +1 for left, -1 for right: the lateral direction pointing away from
    /// the other foot.
    pub fn outward_sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// A foot placement. The foothold is expressed in the foot frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footstep {
    pub position: Point2,
    pub yaw: f64,
    pub side: Side,
    pub foothold: ConvexPolygon,
}

impl Footstep {
    pub fn new(position: Point2, yaw: f64, side: Side, foothold: ConvexPolygon) -> Self {
        Self {
            position,
            yaw,
            side,
            foothold,
        }
    }

    /// Maps a foot-frame point to the world frame.
    pub fn to_world(&self, local: &Point2) -> Point2 {
        self.position + rotation(self.yaw) * local
    }

    /// Maps a foot-frame offset (direction only) to the world frame.
    pub fn rotate(&self, local: &Point2) -> Point2 {
        rotation(self.yaw) * local
    }

    pub fn foothold_world(&self) -> ConvexPolygon {
        self.foothold.transformed(&self.position, self.yaw)
    }

    pub fn with_position(&self, position: Point2) -> Self {
        Self {
            position,
            ..self.clone()
        }
    }
}

/// Heel and toe CMP locations in the foot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmpOffsets {
    pub heel: Point2,
    pub toe: Point2,
}

impl Default for CmpOffsets {
    /// Offsets for the default 0.22 m foot.
    fn default() -> Self {
        Self::for_foot_length(0.22)
    }
}

impl CmpOffsets {
    pub fn new(heel: Point2, toe: Point2) -> Result<Self, FootstepError> {
        if toe.x < heel.x {
            return Err(FootstepError::ToeBehindHeel);
        }
        Ok(Self { heel, toe })
    }

    /// Heel and toe at -/+ 25% of the foot length along the foot x-axis.
    pub fn for_foot_length(length: f64) -> Self {
        Self {
            heel: Point2::new(-0.25 * length, 0.0),
            toe: Point2::new(0.25 * length, 0.0),
        }
    }

    pub fn validate_for(&self, index: usize, step: &Footstep) -> Result<(), FootstepError> {
        if self.toe.x < self.heel.x {
            return Err(FootstepError::ToeBehindHeel);
        }
        for (which, p) in [("heel", &self.heel), ("toe", &self.toe)] {
            if !step.foothold.contains(p, 0.0) {
                return Err(FootstepError::OffsetOutsideFoothold { which, index });
            }
        }
        Ok(())
    }
}

/// Step timing. Derived durations are always recomputed from the stored
/// fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    /// Single support duration `T_SS` (s).
    pub swing_duration: f64,
    /// Double support duration `T_DS` (s).
    pub transfer_duration: f64,
    /// Fraction of the step spent on the toe CMP.
    pub alpha_th: f64,
    /// Fraction of the transfer that happens before the heel corner point.
    pub alpha_ini_ds: f64,
    /// Lower bound on the swing time left after a speed-up (s).
    pub min_swing_remaining: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            swing_duration: 0.7,
            transfer_duration: 0.25,
            alpha_th: 0.5,
            alpha_ini_ds: 0.5,
            min_swing_remaining: 0.6,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), FootstepError> {
        for (name, value) in [
            ("swing_duration", self.swing_duration),
            ("transfer_duration", self.transfer_duration),
            ("min_swing_remaining", self.min_swing_remaining),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(FootstepError::NonPositive { name, value });
            }
        }
        for (name, value) in [
            ("alpha_th", self.alpha_th),
            ("alpha_ini_ds", self.alpha_ini_ds),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(FootstepError::FractionOutOfRange { name, value });
            }
        }
        let eps = 1e-12;
        if self.toe_duration() + eps < self.ini_ds_duration()
            || self.heel_duration() + eps < self.eo_ds_duration()
        {
            return Err(FootstepError::InconsistentSplit);
        }
        Ok(())
    }

    /// `T = T_SS + T_DS`
    pub fn step_duration(&self) -> f64 {
        self.swing_duration + self.transfer_duration
    }

    /// `T_TH`, time on the toe CMP.
    pub fn toe_duration(&self) -> f64 {
        self.alpha_th * self.step_duration()
    }

    /// `T_HT`, time on the heel CMP.
    pub fn heel_duration(&self) -> f64 {
        (1.0 - self.alpha_th) * self.step_duration()
    }

    pub fn ini_ds_duration(&self) -> f64 {
        self.alpha_ini_ds * self.transfer_duration
    }

    pub fn eo_ds_duration(&self) -> f64 {
        (1.0 - self.alpha_ini_ds) * self.transfer_duration
    }
}

/// Generates an alternating footstep sequence. The first two entries are the
/// feet on the ground at the start; the robot transfers onto entry 1 first.
/// Forward plans end with a square-up step beside the previous foot.
pub fn straight_line_footsteps(
    stride: f64,
    step_width: f64,
    step_count: usize,
    first_swing: Side,
    foothold: &ConvexPolygon,
) -> Vec<Footstep> {
    let lateral = |side: Side| side.outward_sign() * 0.5 * step_width;
    let mut steps = Vec::with_capacity(step_count + 2);
    let s0 = first_swing;
    steps.push(Footstep::new(
        Point2::new(0.0, lateral(s0)),
        0.0,
        s0,
        foothold.clone(),
    ));
    steps.push(Footstep::new(
        Point2::new(0.0, lateral(s0.opposite())),
        0.0,
        s0.opposite(),
        foothold.clone(),
    ));
    let mut x = 0.0;
    for i in 0..step_count {
        let side = if i % 2 == 0 { s0 } else { s0.opposite() };
        if i + 1 < step_count || step_count == 1 {
            x += stride;
        }
        steps.push(Footstep::new(
            Point2::new(x, lateral(side)),
            0.0,
            side,
            foothold.clone(),
        ));
    }
    steps
}

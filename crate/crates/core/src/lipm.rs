//! Linear inverted pendulum state and the capture point relations.
//!
//! Everything here is planar (x-y) with a constant CoM height, so the
//! pendulum frequency is fixed per scenario.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Pendulum parameters. `omega0` is derived once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipmParams {
    gravity: f64,
    com_height: f64,
    mass: f64,
    omega0: f64,
}

impl LipmParams {
    pub fn new(gravity: f64, com_height: f64, mass: f64) -> Result<Self, ParamsError> {
        for (name, value) in [
            ("gravity", gravity),
            ("com_height", com_height),
            ("mass", mass),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::NotPositive { name, value });
            }
        }
        Ok(Self {
            gravity,
            com_height,
            mass,
            omega0: (gravity / com_height).sqrt(),
        })
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn com_height(&self) -> f64 {
        self.com_height
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// CoM position and velocity in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipmState {
    pub com_pos: Point2,
    pub com_vel: Vector2<f64>,
}

impl LipmState {
    pub fn new(com_pos: Point2, com_vel: Vector2<f64>) -> Self {
        Self { com_pos, com_vel }
    }

    pub fn at_rest(com_pos: Point2) -> Self {
        Self::new(com_pos, Vector2::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.com_pos.iter().chain(self.com_vel.iter()).all(|v| v.is_finite())
    }
}

/// `x + xdot / omega0`
pub fn icp_from_state(state: &LipmState, params: &LipmParams) -> Point2 {
    state.com_pos + state.com_vel / params.omega0()
}

/// ICP velocity for a given CMP: `omega0 (icp - cmp)`.
pub fn icp_velocity(icp: &Point2, cmp: &Point2, params: &LipmParams) -> Vector2<f64> {
    (icp - cmp) * params.omega0()
}

/// CMP that produces the given ICP velocity; inverse of [`icp_velocity`].
pub fn cmp_from_icp(icp: &Point2, icp_vel: &Vector2<f64>, params: &LipmParams) -> Point2 {
    icp - icp_vel / params.omega0()
}

/// ICP after `t` seconds with the CMP held at `cmp`.
pub fn icp_closed_form(icp0: &Point2, cmp: &Point2, params: &LipmParams, t: f64) -> Point2 {
    cmp + (icp0 - cmp) * (params.omega0() * t).exp()
}

/// Advances the CoM state by `dt` with a constant CMP using the exact
/// solution of `xddot = omega0^2 (x - cmp)`.
pub fn integrate_plant(state: &LipmState, cmp: &Point2, params: &LipmParams, dt: f64) -> LipmState {
    let w = params.omega0();
    let (c, s) = ((w * dt).cosh(), (w * dt).sinh());
    let dx = state.com_pos - cmp;
    LipmState {
        com_pos: cmp + dx * c + state.com_vel * (s / w),
        com_vel: dx * (w * s) + state.com_vel * c,
    }
}

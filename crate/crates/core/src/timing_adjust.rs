//! Swing speed-up: advance the plan clock when the ICP runs ahead of the
//! reference along its own dynamics.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point2;
use crate::icp_plan::{IcpPlan, Phase};
use crate::lipm::LipmParams;

/// Minimum length of the reference-to-touchdown direction (m).
pub const EPS_DIRECTION: f64 = 1e-6;
/// Minimum distance between the reference ICP and its CMP (m).
pub const EPS_REFERENCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("reference and touchdown ICP coincide")]
    DegenerateDirection,
    #[error("reference ICP sits on its CMP")]
    DegenerateReference,
    #[error("only {remaining} s of swing would remain")]
    ExhaustedSwing { remaining: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingAdjustment {
    pub xi_p: Point2,
    pub delta_t: f64,
    /// Advanced plan time.
    pub t_plus: f64,
    pub sigma: f64,
    pub xi_t: Point2,
}

impl TimingAdjustment {
    fn identity(t: f64, xi_r: Point2, xi_t: Point2) -> Self {
        Self {
            xi_p: xi_r,
            delta_t: 0.0,
            t_plus: t,
            sigma: 1.0,
            xi_t,
        }
    }
}

/// Orthogonal projection of `xi` onto the line through `xi_r` along
/// `xi_t - xi_r`.
pub fn project_icp(xi: &Point2, xi_r: &Point2, xi_t: &Point2) -> Result<Point2, TimingError> {
    let dir = xi_t - xi_r;
    let n2 = dir.norm_squared();
    if n2.sqrt() <= EPS_DIRECTION {
        return Err(TimingError::DegenerateDirection);
    }
    Ok(xi_r + dir * ((xi - xi_r).dot(&dir) / n2))
}

/// Time the reference needs to travel from `xi_r` to `xi_p` under a
/// constant CMP, never negative.
pub fn time_advance(
    xi_p: &Point2,
    xi_r: &Point2,
    r_cmp_r: &Point2,
    params: &LipmParams,
) -> Result<f64, TimingError> {
    let off = xi_r - r_cmp_r;
    let base = off.norm();
    if base <= EPS_REFERENCE {
        return Err(TimingError::DegenerateReference);
    }
    let along = (xi_p - r_cmp_r).dot(&off) / base;
    if along <= base {
        return Ok(0.0);
    }
    Ok((along / base).ln() / params.omega0())
}

/// `(T_SS - t) / (T_SS - t_plus)`, with swing-local times.
pub fn speedup_factor(
    t: f64,
    t_plus: f64,
    swing_duration: f64,
    min_swing_remaining: f64,
) -> Result<f64, TimingError> {
    let remaining = swing_duration - t_plus;
    if remaining < min_swing_remaining {
        return Err(TimingError::ExhaustedSwing { remaining });
    }
    Ok((swing_duration - t) / remaining)
}

/// Speed-up at plan time `t` for the measured ICP `xi`. Outside swing, and
/// on any degenerate geometry, returns the identity adjustment.
pub fn apply(plan: &IcpPlan, xi: &Point2, t: f64) -> TimingAdjustment {
    let Ok(r) = plan.reference_at(t) else {
        return TimingAdjustment::identity(t, *xi, *xi);
    };
    if r.phase != Phase::Swing {
        return TimingAdjustment::identity(t, r.icp, r.icp);
    }
    let k = r.step_index;
    let xi_t = plan.touchdown_icp(k);
    let timing = plan.timing();
    let t_ss = timing.swing_duration;
    let local = t - plan.swing_start(k);
    let advance = project_icp(xi, &r.icp, &xi_t).and_then(|xi_p| {
        time_advance(&xi_p, &r.icp, &r.cmp, plan.params()).map(|dt| (xi_p, dt))
    });
    let Ok((xi_p, dt)) = advance else {
        return TimingAdjustment::identity(t, r.icp, xi_t);
    };
    let cap = t_ss - timing.min_swing_remaining;
    let local_plus = (local + dt).min(cap).max(local);
    let sigma = match speedup_factor(local, local_plus, t_ss, timing.min_swing_remaining) {
        Ok(s) => s,
        // Already inside the protected tail of the swing.
        Err(_) => 1.0,
    };
    TimingAdjustment {
        xi_p,
        delta_t: local_plus - local,
        t_plus: t + (local_plus - local),
        sigma,
        xi_t,
    }
}

//! Heel-to-toe ICP reference planning.
//!
//! The footstep list starts with the two feet on the ground. The robot first
//! transfers onto footstep 1, then every stance footstep `k` in
//! `1..footsteps.len() - 1` gets a transfer followed by a swing, and the plan
//! ends with a transfer onto the last footstep that brings the ICP to rest
//! between the final two heel CMPs.
//!
//! Timeline of stance footstep `k`, relative to its start `(k - 1) T`:
//!
//! ```text
//! |-- transfer (spline) --|-- swing on heel --|-- swing on toe --|
//! 0                      T_DS          T_iniDS + T_HT            T
//! ```
//!
//! The heel corner point `xi_HT,k` is reached `T_iniDS` into the transfer and
//! the toe corner point `xi_TH,k` at `T_iniDS + T_HT`.

use nalgebra::Vector2;
use serde::Serialize;
use thiserror::Error;

use crate::footstep::{CmpOffsets, Footstep, FootstepError, TimingParams};
use crate::geometry::{ConvexPolygon, Point2, PolygonError};
use crate::lipm::{cmp_from_icp, icp_velocity, LipmParams};
use crate::spline::{Knot, SplineSegment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("plan needs the two initial feet plus at least one step, got {0} footsteps")]
    EmptyPlan(usize),
    #[error("spline duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("time {0} is outside the plan horizon")]
    OutOfHorizon(f64),
    #[error(transparent)]
    Footstep(#[from] FootstepError),
    #[error("support polygon: {0}")]
    Polygon(#[from] PolygonError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Transfer,
    Swing,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Transfer => "transfer",
            Phase::Swing => "swing",
        }
    }
}

/// Which part of a step a segment covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentKind {
    Transfer,
    SwingHeel,
    SwingToe,
}

impl SegmentKind {
    pub fn phase(self) -> Phase {
        match self {
            SegmentKind::Transfer => Phase::Transfer,
            _ => Phase::Swing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SegmentShape {
    /// Constant CMP; `start_icp` is the ICP at the segment start.
    Exponential { cmp: Point2, start_icp: Point2 },
    Spline(SplineSegment),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub kind: SegmentKind,
    /// Index of the footstep being transferred onto or stood on.
    pub step_index: usize,
    pub shape: SegmentShape,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn eval(&self, local: f64, omega: f64) -> (Point2, Vector2<f64>) {
        match &self.shape {
            SegmentShape::Exponential { cmp, start_icp } => {
                let e = (omega * local).exp();
                let off = (start_icp - cmp) * e;
                (cmp + off, off * omega)
            }
            SegmentShape::Spline(s) => (s.position(local), s.velocity(local)),
        }
    }
}

/// Reference values at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub icp: Point2,
    pub icp_vel: Vector2<f64>,
    pub cmp: Point2,
    pub phase: Phase,
    pub step_index: usize,
}

/// Corner points indexed by stance footstep: entry `j` belongs to footstep
/// `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerPoints {
    pub corner_th: Vec<Point2>,
    pub corner_ht: Vec<Point2>,
    pub final_corner: Point2,
}

/// World heel/toe CMPs of every footstep.
pub fn world_cmps(footsteps: &[Footstep], offsets: &CmpOffsets) -> (Vec<Point2>, Vec<Point2>) {
    footsteps
        .iter()
        .map(|f| (f.to_world(&offsets.heel), f.to_world(&offsets.toe)))
        .unzip()
}

/// Backward recursion of the constant-CMP ICP solution. `heel[j]`/`toe[j]`
/// are the CMPs of stance `j`; returns `(corner_th, corner_ht)` such that
/// `corner_ht[j]` rolls forward on the heel for `heel_duration` into
/// `corner_th[j]`, which rolls forward on the toe for `toe_duration` into
/// `corner_ht[j + 1]` (or `final_corner`).
pub fn backward_corners(
    heel: &[Point2],
    toe: &[Point2],
    heel_duration: f64,
    toe_duration: f64,
    final_corner: Point2,
    omega: f64,
) -> (Vec<Point2>, Vec<Point2>) {
    let n = heel.len();
    let decay_toe = (-omega * toe_duration).exp();
    let decay_heel = (-omega * heel_duration).exp();
    let mut th = vec![Point2::zeros(); n];
    let mut ht = vec![Point2::zeros(); n];
    let mut next = final_corner;
    for j in (0..n).rev() {
        th[j] = toe[j] + (next - toe[j]) * decay_toe;
        ht[j] = heel[j] + (th[j] - heel[j]) * decay_heel;
        next = ht[j];
    }
    (th, ht)
}

/// Final ICP objective: midpoint of the last two heel CMPs.
pub fn final_objective(footsteps: &[Footstep], offsets: &CmpOffsets) -> Point2 {
    let n = footsteps.len();
    let a = footsteps[n - 2].to_world(&offsets.heel);
    let b = footsteps[n - 1].to_world(&offsets.heel);
    (a + b) * 0.5
}

pub fn corner_point_recursion(
    footsteps: &[Footstep],
    offsets: &CmpOffsets,
    timing: &TimingParams,
    params: &LipmParams,
) -> Result<CornerPoints, PlanError> {
    if footsteps.len() < 3 {
        return Err(PlanError::EmptyPlan(footsteps.len()));
    }
    let (heel, toe) = world_cmps(footsteps, offsets);
    let m = footsteps.len() - 1;
    let final_corner = final_objective(footsteps, offsets);
    let (corner_th, corner_ht) = backward_corners(
        &heel[1..m],
        &toe[1..m],
        timing.heel_duration(),
        timing.toe_duration(),
        final_corner,
        params.omega0(),
    );
    Ok(CornerPoints {
        corner_th,
        corner_ht,
        final_corner,
    })
}

/// Spline knots around a heel corner point: the start of transfer (still on
/// the previous toe) and the end of transfer (already on the new heel).
pub fn ds_boundaries(
    corner_ht: &Point2,
    toe_cmp_prev: &Point2,
    heel_cmp: &Point2,
    timing: &TimingParams,
    params: &LipmParams,
) -> (Knot, Knot) {
    let w = params.omega0();
    let ini = toe_cmp_prev + (corner_ht - toe_cmp_prev) * (-w * timing.ini_ds_duration()).exp();
    let eo = heel_cmp + (corner_ht - heel_cmp) * (w * timing.eo_ds_duration()).exp();
    (
        Knot::new(ini, icp_velocity(&ini, toe_cmp_prev, params)),
        Knot::new(eo, icp_velocity(&eo, heel_cmp, params)),
    )
}

pub fn build_spline(ini: Knot, eo: Knot, duration: f64) -> Result<SplineSegment, PlanError> {
    SplineSegment::new(ini, eo, duration).ok_or(PlanError::NonPositiveDuration(duration))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcpPlan {
    footsteps: Vec<Footstep>,
    offsets: CmpOffsets,
    timing: TimingParams,
    params: LipmParams,
    initial: Knot,
    heel_cmps: Vec<Point2>,
    toe_cmps: Vec<Point2>,
    corners: CornerPoints,
    /// `(start, end)` knots of each transfer, entry `j` for footstep `j + 1`.
    ds_knots: Vec<(Knot, Knot)>,
    segments: Vec<Segment>,
}

impl IcpPlan {
    /// Plan starting at rest with the ICP between the two initial feet.
    pub fn build(
        footsteps: Vec<Footstep>,
        offsets: CmpOffsets,
        timing: TimingParams,
        params: LipmParams,
    ) -> Result<Self, PlanError> {
        if footsteps.len() < 3 {
            return Err(PlanError::EmptyPlan(footsteps.len()));
        }
        let mid = (footsteps[0].position + footsteps[1].position) * 0.5;
        Self::build_from(footsteps, offsets, timing, params, mid, mid)
    }

    /// Plan whose first transfer starts at the measured ICP, with initial
    /// ICP velocity given by the current CMP.
    pub fn build_from(
        footsteps: Vec<Footstep>,
        offsets: CmpOffsets,
        timing: TimingParams,
        params: LipmParams,
        initial_icp: Point2,
        initial_cmp: Point2,
    ) -> Result<Self, PlanError> {
        let initial = Knot::new(initial_icp, icp_velocity(&initial_icp, &initial_cmp, &params));
        Self::assemble(footsteps, offsets, timing, params, initial)
    }

    fn assemble(
        footsteps: Vec<Footstep>,
        offsets: CmpOffsets,
        timing: TimingParams,
        params: LipmParams,
        initial: Knot,
    ) -> Result<Self, PlanError> {
        timing.validate()?;
        if footsteps.len() < 3 {
            return Err(PlanError::EmptyPlan(footsteps.len()));
        }
        for (i, f) in footsteps.iter().enumerate() {
            offsets.validate_for(i, f)?;
            if i > 0 && footsteps[i - 1].side == f.side {
                return Err(FootstepError::SameSide(i - 1, i).into());
            }
        }
        let corners = corner_point_recursion(&footsteps, &offsets, &timing, &params)?;
        let (heel_cmps, toe_cmps) = world_cmps(&footsteps, &offsets);
        let m = footsteps.len() - 1;
        let w = params.omega0();
        let t_step = timing.step_duration();
        let t_ds = timing.transfer_duration;
        let toe_at = timing.ini_ds_duration() + timing.heel_duration();

        let mut ds_knots = Vec::with_capacity(m);
        let mut segments = Vec::with_capacity(3 * m);
        for k in 1..=m {
            let start = (k - 1) as f64 * t_step;
            let (ini, eo) = if k < m {
                let (ini, eo) = ds_boundaries(
                    &corners.corner_ht[k - 1],
                    &toe_cmps[k - 1],
                    &heel_cmps[k],
                    &timing,
                    &params,
                );
                (if k == 1 { initial } else { ini }, eo)
            } else {
                let prev_toe = toe_cmps[m - 1];
                let ini = prev_toe
                    + (corners.final_corner - prev_toe) * (-w * timing.ini_ds_duration()).exp();
                let ini = if m == 1 {
                    initial
                } else {
                    Knot::new(ini, icp_velocity(&ini, &prev_toe, &params))
                };
                (ini, Knot::new(corners.final_corner, Vector2::zeros()))
            };
            ds_knots.push((ini, eo));
            segments.push(Segment {
                start,
                duration: t_ds,
                kind: SegmentKind::Transfer,
                step_index: k,
                shape: SegmentShape::Spline(build_spline(ini, eo, t_ds)?),
            });
            if k == m {
                break;
            }
            let heel_len = toe_at - t_ds;
            if heel_len > 1e-12 {
                segments.push(Segment {
                    start: start + t_ds,
                    duration: heel_len,
                    kind: SegmentKind::SwingHeel,
                    step_index: k,
                    shape: SegmentShape::Exponential {
                        cmp: heel_cmps[k],
                        start_icp: eo.position,
                    },
                });
            }
            let toe_start = if heel_len > 1e-12 { toe_at } else { t_ds };
            segments.push(Segment {
                start: start + toe_start,
                duration: t_step - toe_start,
                kind: SegmentKind::SwingToe,
                step_index: k,
                shape: SegmentShape::Exponential {
                    cmp: toe_cmps[k],
                    start_icp: if heel_len > 1e-12 {
                        corners.corner_th[k - 1]
                    } else {
                        eo.position
                    },
                },
            });
        }
        Ok(Self {
            footsteps,
            offsets,
            timing,
            params,
            initial,
            heel_cmps,
            toe_cmps,
            corners,
            ds_knots,
            segments,
        })
    }

    /// Rebuilds the plan with new footstep positions, keeping everything
    /// else (including the initial knot).
    pub fn with_positions(&self, positions: &[(usize, Point2)]) -> Result<Self, PlanError> {
        let mut footsteps = self.footsteps.clone();
        for (i, p) in positions {
            footsteps[*i].position = *p;
        }
        Self::assemble(
            footsteps,
            self.offsets,
            self.timing,
            self.params,
            self.initial,
        )
    }

    pub fn footsteps(&self) -> &[Footstep] {
        &self.footsteps
    }

    pub fn offsets(&self) -> &CmpOffsets {
        &self.offsets
    }

    pub fn timing(&self) -> &TimingParams {
        &self.timing
    }

    pub fn params(&self) -> &LipmParams {
        &self.params
    }

    pub fn initial(&self) -> &Knot {
        &self.initial
    }

    pub fn corners(&self) -> &CornerPoints {
        &self.corners
    }

    pub fn ds_knots(&self) -> &[(Knot, Knot)] {
        &self.ds_knots
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn heel_cmp(&self, index: usize) -> Point2 {
        self.heel_cmps[index]
    }

    pub fn toe_cmp(&self, index: usize) -> Point2 {
        self.toe_cmps[index]
    }

    pub fn final_corner(&self) -> Point2 {
        self.corners.final_corner
    }

    /// Corner `xi_HT` of stance footstep `k`; `k == last` gives the final
    /// objective.
    pub fn corner_ht(&self, k: usize) -> Point2 {
        if k == self.last_index() {
            self.corners.final_corner
        } else {
            self.corners.corner_ht[k - 1]
        }
    }

    pub fn corner_th(&self, k: usize) -> Point2 {
        self.corners.corner_th[k - 1]
    }

    pub fn last_index(&self) -> usize {
        self.footsteps.len() - 1
    }

    /// Start time of the transfer onto footstep `k`.
    pub fn step_start(&self, k: usize) -> f64 {
        (k - 1) as f64 * self.timing.step_duration()
    }

    /// Time at which the swing on footstep `k` switches from heel to toe.
    pub fn toe_start(&self, k: usize) -> f64 {
        self.step_start(k) + self.timing.ini_ds_duration() + self.timing.heel_duration()
    }

    pub fn swing_start(&self, k: usize) -> f64 {
        self.step_start(k) + self.timing.transfer_duration
    }

    pub fn swing_end(&self, k: usize) -> f64 {
        self.step_start(k) + self.timing.step_duration()
    }

    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::end)
    }

    /// Index of the segment active at `t` (later segment wins at joins).
    pub fn segment_index(&self, t: f64) -> usize {
        let t = t.clamp(0.0, self.horizon());
        self.segments
            .partition_point(|s| s.start <= t)
            .saturating_sub(1)
    }

    /// Reference ICP, ICP velocity and CMP at `t`. Times past the horizon
    /// clamp to its end.
    pub fn reference_at(&self, t: f64) -> Result<Reference, PlanError> {
        if !t.is_finite() || t < 0.0 {
            return Err(PlanError::OutOfHorizon(t));
        }
        let seg = &self.segments[self.segment_index(t)];
        let local = (t.min(self.horizon()) - seg.start).clamp(0.0, seg.duration);
        Ok(self.reference_in(seg, local))
    }

    pub fn reference_in(&self, seg: &Segment, local: f64) -> Reference {
        let (icp, icp_vel) = seg.eval(local, self.params.omega0());
        Reference {
            icp,
            icp_vel,
            cmp: cmp_from_icp(&icp, &icp_vel, &self.params),
            phase: seg.kind.phase(),
            step_index: seg.step_index,
        }
    }

    /// Support polygon during a segment: the stance foothold in swing, the
    /// hull of both footholds in transfer.
    pub fn support_region(&self, kind: SegmentKind, step_index: usize) -> ConvexPolygon {
        let stance = self.footsteps[step_index].foothold_world();
        match kind {
            SegmentKind::Transfer => {
                let prev = self.footsteps[step_index - 1].foothold_world();
                let pts: Vec<Point2> = stance
                    .vertices()
                    .iter()
                    .chain(prev.vertices())
                    .copied()
                    .collect();
                ConvexPolygon::hull(&pts).unwrap_or(stance)
            }
            _ => stance,
        }
    }

    /// Touchdown ICP of the swing on footstep `k`.
    pub fn touchdown_icp(&self, k: usize) -> Point2 {
        self.ds_knots[k].0.position
    }
}

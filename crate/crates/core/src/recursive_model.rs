//! Linear map from upcoming footstep positions to the reference ICP.
//!
//! The end-of-segment corner `xi_eo` is an affine combination of the final
//! objective and the heel/toe CMPs of the next `N` footsteps. The reference
//! at `t+` is in turn an affine function of `xi_eo` and the CMPs that the
//! current segment is anchored to, so
//!
//! ```text
//! xi_r(t+) = phi_f * xi_f + sum_i gamma_steps[i] * r_f,i + phi_cnst
//! ```
//!
//! with scalar weights applied identically to both axes.

use thiserror::Error;

use crate::footstep::Footstep;
use crate::geometry::Point2;
use crate::icp_plan::{IcpPlan, Phase, PlanError, SegmentKind, SegmentShape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("adjustment horizon must be at least 1, got {0}")]
    InvalidHorizon(usize),
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveMultipliers {
    pub gamma_f: f64,
    pub gamma_t: Vec<f64>,
    pub gamma_h: Vec<f64>,
}

impl RecursiveMultipliers {
    pub fn sum(&self) -> f64 {
        self.gamma_f + self.gamma_t.iter().sum::<f64>() + self.gamma_h.iter().sum::<f64>()
    }
}

/// Multipliers for a horizon of `n` upcoming steps. `step_timings[i]` is
/// `(T_TH,i, T_HT,i)` for `i = 0..=n`.
pub fn multipliers(
    phase: Phase,
    step_timings: &[(f64, f64)],
    n: usize,
    omega: f64,
) -> Result<RecursiveMultipliers, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidHorizon(n));
    }
    raw_multipliers(phase, step_timings, n, omega)
}

/// Same as [`multipliers`] but also accepts an empty horizon, which the
/// controller needs near the end of a plan.
fn raw_multipliers(
    phase: Phase,
    step_timings: &[(f64, f64)],
    n: usize,
    omega: f64,
) -> Result<RecursiveMultipliers, ModelError> {
    if step_timings.len() != n + 1 {
        return Err(ModelError::DimensionMismatch {
            expected: n + 1,
            got: step_timings.len(),
        });
    }
    let decay = |t: f64| (-omega * t).exp();
    let (th0, ht0) = step_timings[0];
    let mut gamma_t = Vec::with_capacity(n + 1);
    let mut gamma_h = Vec::with_capacity(n + 1);
    // Time elapsed from the start of the current corner to the start of step i.
    let mut lead = match phase {
        Phase::Swing => {
            gamma_t.push(1.0 - decay(th0));
            gamma_h.push(0.0);
            th0
        }
        Phase::Transfer => {
            gamma_t.push(decay(ht0) * (1.0 - decay(th0)));
            gamma_h.push(1.0 - decay(ht0));
            th0 + ht0
        }
    };
    for &(th, ht) in &step_timings[1..] {
        gamma_t.push(decay(lead + ht) * (1.0 - decay(th)));
        gamma_h.push(decay(lead) * (1.0 - decay(ht)));
        lead += th + ht;
    }
    Ok(RecursiveMultipliers {
        gamma_f: decay(lead),
        gamma_t,
        gamma_h,
    })
}

pub fn xi_eo(
    mult: &RecursiveMultipliers,
    xi_f: &Point2,
    toe_cmps: &[Point2],
    heel_cmps: &[Point2],
) -> Result<Point2, ModelError> {
    let n = mult.gamma_t.len();
    for got in [toe_cmps.len(), heel_cmps.len()] {
        if got != n {
            return Err(ModelError::DimensionMismatch { expected: n, got });
        }
    }
    let mut acc = xi_f * mult.gamma_f;
    for i in 0..n {
        acc += toe_cmps[i] * mult.gamma_t[i] + heel_cmps[i] * mult.gamma_h[i];
    }
    Ok(acc)
}

/// Weights of the current segment's reference on its anchors: `c_eo` on the
/// end-of-segment corner, `b_t0`/`b_h0` on the stance toe/heel CMPs,
/// `b_prev` on the previous toe CMP (transfer only) and a fixed point for
/// the measured start of the first transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentWeights {
    pub c_eo: f64,
    pub b_t0: f64,
    pub b_h0: f64,
    pub b_prev: f64,
    pub fixed: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveModel {
    pub step_index: usize,
    pub phase: Phase,
    pub multipliers: RecursiveMultipliers,
    pub weights: SegmentWeights,
    pub phi_f: f64,
    pub gamma_steps: Vec<f64>,
    pub phi_cnst: Point2,
    pub xi_f: Point2,
    /// Nominal positions of the adjustable footsteps.
    pub nominal: Vec<Point2>,
}

impl RecursiveModel {
    /// Number of adjustable footsteps.
    pub fn horizon(&self) -> usize {
        self.gamma_steps.len()
    }

    /// Index of the `i`-th adjustable footstep (1-based) in the plan.
    pub fn footstep_index(&self, i: usize) -> usize {
        self.step_index + i
    }

    pub fn predict(&self, positions: &[Point2]) -> Result<Point2, ModelError> {
        if positions.len() != self.horizon() {
            return Err(ModelError::DimensionMismatch {
                expected: self.horizon(),
                got: positions.len(),
            });
        }
        let mut acc = self.xi_f * self.phi_f + self.phi_cnst;
        for (g, r) in self.gamma_steps.iter().zip(positions) {
            acc += r * *g;
        }
        Ok(acc)
    }

    pub fn predict_nominal(&self) -> Point2 {
        self.predict(&self.nominal).expect("nominal has horizon length")
    }
}

/// Combines multipliers and segment weights into the final affine model.
/// `foot0` is the stance (or incoming) footstep, `upcoming` the adjustable
/// footsteps whose offsets go into the constant term.
pub fn assemble(
    mult: RecursiveMultipliers,
    weights: SegmentWeights,
    foot0_cmps: (Point2, Point2),
    prev_toe: Point2,
    upcoming: &[Footstep],
    offsets: &crate::footstep::CmpOffsets,
) -> Result<(f64, Vec<f64>, Point2), ModelError> {
    let n = upcoming.len();
    if mult.gamma_t.len() != n + 1 {
        return Err(ModelError::DimensionMismatch {
            expected: mult.gamma_t.len() - 1,
            got: n,
        });
    }
    let c = weights.c_eo;
    let (toe0, heel0) = foot0_cmps;
    let mut cnst = toe0 * (weights.b_t0 + c * mult.gamma_t[0])
        + heel0 * (weights.b_h0 + c * mult.gamma_h[0])
        + prev_toe * weights.b_prev
        + weights.fixed;
    let mut gammas = Vec::with_capacity(n);
    for (i, f) in upcoming.iter().enumerate() {
        let (gt, gh) = (mult.gamma_t[i + 1], mult.gamma_h[i + 1]);
        gammas.push(c * (gt + gh));
        cnst += (f.rotate(&offsets.toe) * gt + f.rotate(&offsets.heel) * gh) * c;
    }
    Ok((c * mult.gamma_f, gammas, cnst))
}

/// Builds the model of the plan's reference at `t_plus` for an adjustment
/// horizon of `n` steps. The horizon shrinks near the end of the plan so
/// the final standing pair is never adjusted.
pub fn build_model(plan: &IcpPlan, t_plus: f64, n: usize) -> Result<RecursiveModel, ModelError> {
    if n < 1 {
        return Err(ModelError::InvalidHorizon(n));
    }
    if !t_plus.is_finite() || t_plus < 0.0 {
        return Err(PlanError::OutOfHorizon(t_plus).into());
    }
    let seg = plan.segments()[plan.segment_index(t_plus)];
    let local = (t_plus.min(plan.horizon()) - seg.start).clamp(0.0, seg.duration);
    let k = seg.step_index;
    let last = plan.last_index();
    let timing = plan.timing();
    let w = plan.params().omega0();
    let phase = seg.kind.phase();

    if k == last {
        return Ok(final_transfer_model(plan, &seg, local));
    }

    let n_eff = n.min(last.saturating_sub(k + 2));
    let xi_f = plan.corner_ht(k + n_eff + 1);
    let timings = vec![(timing.toe_duration(), timing.heel_duration()); n_eff + 1];
    let mult = raw_multipliers(phase, &timings, n_eff, w)?;

    let weights = match (seg.kind, seg.shape) {
        (SegmentKind::Transfer, SegmentShape::Spline(s)) => {
            let p = s.basis(local).position;
            let a = (-w * timing.ini_ds_duration()).exp();
            let b = (w * timing.eo_ds_duration()).exp();
            let end_eo = p[2] * b + p[3] * w * b;
            let b_h0 = p[2] * (1.0 - b) - p[3] * w * b;
            if k == 1 {
                let init = plan.initial();
                SegmentWeights {
                    c_eo: end_eo,
                    b_t0: 0.0,
                    b_h0,
                    b_prev: 0.0,
                    fixed: init.position * p[0] + init.velocity * p[1],
                }
            } else {
                SegmentWeights {
                    c_eo: p[0] * a + p[1] * w * a + end_eo,
                    b_t0: 0.0,
                    b_h0,
                    b_prev: p[0] * (1.0 - a) - p[1] * w * a,
                    fixed: Point2::zeros(),
                }
            }
        }
        _ => {
            let c = (w * (seg.start + local - plan.toe_start(k))).exp();
            let on_toe = seg.kind == SegmentKind::SwingToe;
            SegmentWeights {
                c_eo: c,
                b_t0: if on_toe { 1.0 - c } else { 0.0 },
                b_h0: if on_toe { 0.0 } else { 1.0 - c },
                b_prev: 0.0,
                fixed: Point2::zeros(),
            }
        }
    };

    let upcoming = &plan.footsteps()[k + 1..=k + n_eff];
    let (phi_f, gamma_steps, phi_cnst) = assemble(
        mult.clone(),
        weights,
        (plan.toe_cmp(k), plan.heel_cmp(k)),
        plan.toe_cmp(k - 1),
        upcoming,
        plan.offsets(),
    )?;
    Ok(RecursiveModel {
        step_index: k,
        phase,
        multipliers: mult,
        weights,
        phi_f,
        gamma_steps,
        phi_cnst,
        xi_f,
        nominal: upcoming.iter().map(|f| f.position).collect(),
    })
}

/// The last transfer ends at rest on the final objective; nothing is
/// adjustable.
fn final_transfer_model(plan: &IcpPlan, seg: &crate::icp_plan::Segment, local: f64) -> RecursiveModel {
    let k = seg.step_index;
    let w = plan.params().omega0();
    let xi_f = plan.final_corner();
    let (weights, phi_f, phi_cnst) = match seg.shape {
        SegmentShape::Spline(s) => {
            let p = s.basis(local).position;
            let a = (-w * plan.timing().ini_ds_duration()).exp();
            let b_prev = p[0] * (1.0 - a) - p[1] * w * a;
            let c_eo = p[0] * a + p[1] * w * a + p[2];
            let prev = plan.toe_cmp(k - 1);
            (
                SegmentWeights {
                    c_eo,
                    b_t0: 0.0,
                    b_h0: 0.0,
                    b_prev,
                    fixed: Point2::zeros(),
                },
                c_eo,
                prev * b_prev,
            )
        }
        SegmentShape::Exponential { .. } => unreachable!("final segment is a transfer"),
    };
    RecursiveModel {
        step_index: k,
        phase: Phase::Transfer,
        multipliers: RecursiveMultipliers {
            gamma_f: 1.0,
            gamma_t: vec![0.0],
            gamma_h: vec![0.0],
        },
        weights,
        phi_f,
        gamma_steps: Vec::new(),
        phi_cnst,
        xi_f,
        nominal: Vec::new(),
    }
}

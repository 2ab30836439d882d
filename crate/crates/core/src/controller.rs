//! One control tick: optional swing speed-up, then the step-adjustment QP.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::icp_plan::{IcpPlan, Phase, PlanError};
use crate::lipm::{icp_from_state, LipmState};
use crate::qp::stab::{
    build_qp, ConstraintForm, Gains, Pinning, ReachabilityRect, StabInputs, StabSolution, Weights,
};
use crate::qp::{solve_with, ActiveSetOptions, QpError};
use crate::recursive_model::{build_model, ModelError};
use crate::timing_adjust::{self, TimingAdjustment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    FeedbackOnly,
    FeedbackAdjust,
    FeedbackSpeedup,
    FeedbackBoth,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] = [
        ControllerMode::FeedbackOnly,
        ControllerMode::FeedbackAdjust,
        ControllerMode::FeedbackSpeedup,
        ControllerMode::FeedbackBoth,
    ];

    pub fn adjusts_steps(self) -> bool {
        matches!(self, ControllerMode::FeedbackAdjust | ControllerMode::FeedbackBoth)
    }

    pub fn speeds_up(self) -> bool {
        matches!(self, ControllerMode::FeedbackSpeedup | ControllerMode::FeedbackBoth)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::FeedbackOnly => "feedback_only",
            ControllerMode::FeedbackAdjust => "feedback_adjust",
            ControllerMode::FeedbackSpeedup => "feedback_speedup",
            ControllerMode::FeedbackBoth => "feedback_both",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub gains: Gains,
    pub weights: Weights,
    pub reachability: ReachabilityRect,
    /// Number of upcoming footsteps the QP may move.
    pub horizon: usize,
    pub constraint_form: ConstraintForm,
    /// Adjustments larger than this (m) are written back into the plan.
    pub replan_threshold: f64,
    pub max_qp_iterations: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            weights: Weights::default(),
            reachability: ReachabilityRect::default(),
            horizon: 1,
            constraint_form: ConstraintForm::HalfSpace,
            replan_threshold: 1e-3,
            max_qp_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Result of one tick.
#[derive(Debug, Clone)]
pub struct TickOutput {
    /// Plan time used as the tracking target.
    pub t_plan: f64,
    pub xi: Point2,
    pub xi_r: Point2,
    pub r_cmp_r: Point2,
    pub r_cmp_d: Point2,
    pub phase: Phase,
    pub step_index: usize,
    pub timing: TimingAdjustment,
    pub solution: StabSolution,
    /// Footsteps moved in the plan this tick: `(index, old, new)`.
    pub replanned: Vec<(usize, Point2, Point2)>,
    pub qp_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    plan: IcpPlan,
    clock: f64,
    mode: ControllerMode,
    config: ControllerConfig,
    dt: f64,
}

impl Controller {
    pub fn new(plan: IcpPlan, mode: ControllerMode, config: ControllerConfig, dt: f64) -> Self {
        Self {
            plan,
            clock: 0.0,
            mode,
            config,
            dt,
        }
    }

    pub fn plan(&self) -> &IcpPlan {
        &self.plan
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Advances the plan clock by one control period.
    pub fn advance(&mut self) {
        self.clock += self.dt;
    }

    /// CMP that carries the reference ICP exactly from `t` to `t + dt`
    /// when held constant, so sampling adds no tracking error.
    fn held_reference_cmp(&self, t: f64) -> Result<(Point2, Point2, Phase, usize), PlanError> {
        let now = self.plan.reference_at(t)?;
        let next = self.plan.reference_at(t + self.dt)?;
        let e = (self.plan.params().omega0() * self.dt).exp();
        let cmp = (next.icp - now.icp * e) / (1.0 - e);
        Ok((now.icp, cmp, now.phase, now.step_index))
    }

    pub fn tick(&mut self, state: &LipmState) -> Result<TickOutput, ControllerError> {
        let xi = icp_from_state(state, self.plan.params());
        let timing = if self.mode.speeds_up() {
            timing_adjust::apply(&self.plan, &xi, self.clock)
        } else {
            let r = self.plan.reference_at(self.clock)?;
            TimingAdjustment {
                xi_p: r.icp,
                delta_t: 0.0,
                t_plus: self.clock,
                sigma: 1.0,
                xi_t: r.icp,
            }
        };
        self.clock = timing.t_plus;
        let t = self.clock;

        let (xi_r, r_cmp_r, phase, k) = self.held_reference_cmp(t)?;
        let seg = self.plan.segments()[self.plan.segment_index(t)];
        let support = self.plan.support_region(seg.kind, seg.step_index);
        let model = build_model(&self.plan, t, self.config.horizon)?;
        let n = model.horizon();
        let feet = self.plan.footsteps();
        let pinning = if self.mode.adjusts_steps() {
            Pinning::None
        } else {
            Pinning::Footsteps
        };
        let qp = build_qp(
            &model,
            &StabInputs {
                xi,
                r_cmp_r,
                support: &support,
                anchor: &feet[k],
                upcoming: &feet[k + 1..=k + n],
                gains: &self.config.gains,
                weights: &self.config.weights,
                reach: &self.config.reachability,
                form: self.config.constraint_form,
                pinning,
            },
        )?;
        let opts = ActiveSetOptions {
            max_iterations: self.config.max_qp_iterations,
            ..Default::default()
        };
        let started = Instant::now();
        let raw = solve_with(&qp.problem, &opts)?;
        let qp_seconds = started.elapsed().as_secs_f64();
        let solution = qp.unpack(raw);
        let r_cmp_d = r_cmp_r + solution.delta;

        let mut replanned = Vec::new();
        if self.mode.adjusts_steps() {
            for (i, p) in solution.footsteps.iter().enumerate() {
                let idx = k + 1 + i;
                let old = feet[idx].position;
                if (p - old).norm() > self.config.replan_threshold {
                    replanned.push((idx, old, *p));
                }
            }
            if !replanned.is_empty() {
                let moves: Vec<(usize, Point2)> =
                    replanned.iter().map(|(i, _, p)| (*i, *p)).collect();
                self.plan = self.plan.with_positions(&moves)?;
            }
        }

        Ok(TickOutput {
            t_plan: t,
            xi,
            xi_r,
            r_cmp_r,
            r_cmp_d,
            phase,
            step_index: k,
            timing,
            solution,
            replanned,
            qp_seconds,
        })
    }
}

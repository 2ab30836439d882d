//! Closed-loop point-mass simulation and push-recovery sweeps.

use std::time::Instant;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerConfig, ControllerMode};
use crate::footstep::{straight_line_footsteps, CmpOffsets, Footstep, Side, TimingParams};
use crate::geometry::{ConvexPolygon, Point2};
use crate::icp_plan::{IcpPlan, Phase, PlanError};
use crate::lipm::{icp_from_state, integrate_plant, LipmParams, LipmState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    /// m/s^2
    pub gravity: f64,
    /// m
    pub com_height: f64,
    /// kg
    pub mass: f64,
    /// Foothold rectangle length along the foot x-axis (m).
    pub foot_length: f64,
    /// m
    pub foot_width: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            com_height: 0.981,
            mass: 95.7,
            foot_length: 0.22,
            foot_width: 0.11,
        }
    }
}

impl RobotConfig {
    pub fn params(&self) -> Result<LipmParams, SimError> {
        LipmParams::new(self.gravity, self.com_height, self.mass)
            .map_err(|e| SimError::Invalid(e.to_string()))
    }

    pub fn foothold(&self) -> Result<ConvexPolygon, SimError> {
        ConvexPolygon::rectangle(Point2::zeros(), self.foot_length, self.foot_width)
            .map_err(|e| SimError::Invalid(format!("foothold: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    Fast,
    Slow,
}

impl Gait {
    pub const ALL: [Gait; 2] = [Gait::Fast, Gait::Slow];

    /// `(T_SS, T_DS)` in seconds.
    pub fn durations(self) -> (f64, f64) {
        match self {
            Gait::Fast => (0.7, 0.25),
            Gait::Slow => (1.6, 0.4),
        }
    }

    pub fn apply(self, timing: &TimingParams) -> TimingParams {
        let (ss, ds) = self.durations();
        TimingParams {
            swing_duration: ss,
            transfer_duration: ds,
            ..*timing
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gait::Fast => "fast",
            Gait::Slow => "slow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    /// m
    pub stride: f64,
    /// Lateral distance between foot centres (m).
    pub step_width: f64,
    pub step_count: usize,
    pub in_place: bool,
    pub first_swing: Side,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            stride: 0.5,
            step_width: 0.25,
            step_count: 6,
            in_place: false,
            first_swing: Side::Left,
        }
    }
}

impl WalkConfig {
    pub fn footsteps(&self, foothold: &ConvexPolygon) -> Vec<Footstep> {
        let stride = if self.in_place { 0.0 } else { self.stride };
        straight_line_footsteps(stride, self.step_width, self.step_count, self.first_swing, foothold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PushConfig {
    /// N
    pub magnitude: f64,
    /// Direction in the world frame, 0 = +x (rad).
    pub angle: f64,
    /// Start time (s). Defaults to the middle of the second step's swing.
    pub start: Option<f64>,
    /// s
    pub duration: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        Self {
            magnitude: 0.0,
            angle: 0.0,
            start: None,
            duration: 0.1,
        }
    }
}

impl PushConfig {
    pub fn force(&self) -> Vector2<f64> {
        Vector2::new(self.angle.cos(), self.angle.sin()) * self.magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuccessCriteria {
    /// Largest ICP error allowed at the end of the episode (m).
    pub terminal_error: f64,
    /// The episode fails as soon as the ICP error exceeds this (m).
    pub fall_error: f64,
    /// Largest allowed QP slack (m).
    pub max_slack: f64,
    /// Time simulated past the end of the plan before judging (s).
    pub settle_time: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self {
            terminal_error: 0.05,
            fall_error: 0.8,
            max_slack: 1e-3,
            settle_time: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub robot: RobotConfig,
    pub walk: WalkConfig,
    pub timing: TimingParams,
    pub offsets: CmpOffsets,
    pub push: PushConfig,
    pub mode: ControllerMode,
    pub controller: ControllerConfig,
    /// s
    pub control_period: f64,
    pub success: SuccessCriteria,
    /// Half-width of uniform noise added to the commanded CMP (m); 0 disables.
    pub cmp_noise: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        let robot = RobotConfig::default();
        Self {
            robot,
            walk: WalkConfig::default(),
            timing: TimingParams::default(),
            offsets: CmpOffsets::for_foot_length(robot.foot_length),
            push: PushConfig::default(),
            mode: ControllerMode::FeedbackBoth,
            controller: ControllerConfig::default(),
            control_period: 0.004,
            success: SuccessCriteria::default(),
            cmp_noise: 0.0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        self.robot.params()?;
        self.robot.foothold()?;
        self.timing
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        if !(self.push.duration.is_finite() && self.push.duration > 0.0) {
            return bad(format!("push duration must be positive, got {}", self.push.duration));
        }
        if !(self.push.magnitude.is_finite() && self.push.magnitude >= 0.0) {
            return bad(format!("push magnitude must be >= 0, got {}", self.push.magnitude));
        }
        if !self.push.angle.is_finite() || self.push.start.is_some_and(|s| !(s >= 0.0)) {
            return bad("push angle and start must be finite, start >= 0".into());
        }
        if !(self.control_period.is_finite() && self.control_period > 0.0) {
            return bad(format!("control period must be positive, got {}", self.control_period));
        }
        if !(self.cmp_noise >= 0.0 && self.cmp_noise.is_finite()) {
            return bad("cmp_noise must be >= 0".into());
        }
        if self.walk.step_count == 0 {
            return bad("step_count must be at least 1".into());
        }
        if !(self.walk.stride.is_finite() && self.walk.step_width > 0.0) {
            return bad("stride must be finite and step_width positive".into());
        }
        let s = &self.success;
        if !(s.terminal_error > 0.0 && s.fall_error > 0.0 && s.max_slack > 0.0 && s.settle_time >= 0.0) {
            return bad("success thresholds must be positive".into());
        }
        let c = &self.controller;
        c.weights.validate().map_err(SimError::Invalid)?;
        c.reachability.validate().map_err(SimError::Invalid)?;
        if c.horizon == 0 || c.max_qp_iterations == 0 {
            return bad("controller horizon and max_qp_iterations must be at least 1".into());
        }
        if !(c.replan_threshold >= 0.0) || c.gains.k_p.iter().any(|k| !(*k > 0.0)) {
            return bad("gains must be positive and replan_threshold >= 0".into());
        }
        Ok(())
    }

    pub fn with_gait(&self, gait: Gait) -> Self {
        Self {
            timing: gait.apply(&self.timing),
            ..self.clone()
        }
    }

    /// Nominal plan for this scenario.
    pub fn plan(&self) -> Result<IcpPlan, SimError> {
        self.validate()?;
        let foothold = self.robot.foothold()?;
        let feet = self.walk.footsteps(&foothold);
        Ok(IcpPlan::build(feet, self.offsets, self.timing, self.robot.params()?)?)
    }

    /// Push start time: the configured one, or mid-swing of the second step.
    pub fn push_start(&self, plan: &IcpPlan) -> f64 {
        self.push.start.unwrap_or_else(|| {
            let k = if plan.last_index() > 2 { 2 } else { 1 };
            plan.swing_start(k) + 0.5 * self.timing.swing_duration
        })
    }
}

/// Integrates the plant for `dt` with the CMP held and a constant force on
/// the CoM. The force is folded into an equivalent CMP shift so the step
/// stays exact.
pub fn apply_push(
    state: &LipmState,
    cmp: &Point2,
    force: &Vector2<f64>,
    dt: f64,
    params: &LipmParams,
) -> LipmState {
    let w2 = params.omega0() * params.omega0();
    let shifted = cmp - force / (params.mass() * w2);
    integrate_plant(state, &shifted, params, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    Fell { t: f64, error: f64 },
    SlackActive { t: f64, eta: f64 },
    Controller { t: f64 },
    NotSettled { error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub t: f64,
    pub index: usize,
    pub from: Point2,
    pub to: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingEvent {
    pub t: f64,
    pub delta_t: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub t_plan: f64,
    pub xi: Point2,
    pub xi_r: Point2,
    pub r_cmp_r: Point2,
    pub r_cmp_d: Point2,
    pub eta: Point2,
    pub delta_t: f64,
    pub phase: Phase,
    pub step_index: usize,
    /// Current plan position of the next footstep.
    pub next_step: Point2,
    pub push_active: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeResult {
    pub success: bool,
    pub failure: Option<Failure>,
    pub max_icp_error: f64,
    pub final_icp_error: f64,
    pub adjustments: Vec<Adjustment>,
    pub timing_events: Vec<TimingEvent>,
    pub samples: Vec<Sample>,
    /// Solver and full tick wall times (s), one per tick.
    pub qp_times: Vec<f64>,
    pub tick_times: Vec<f64>,
    pub nonoptimal_solves: usize,
    pub controller_error: Option<String>,
    pub final_footsteps: Vec<Point2>,
}

impl EpisodeResult {
    pub fn max_delta_t(&self) -> f64 {
        self.timing_events.iter().fold(0.0, |a, e| a.max(e.delta_t))
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Runs one episode and records the full time series.
pub fn run_episode(scenario: &Scenario) -> Result<EpisodeResult, SimError> {
    simulate(scenario, true)
}

/// Success flag only; skips the time series.
pub fn episode_succeeds(scenario: &Scenario) -> Result<bool, SimError> {
    Ok(simulate(scenario, false)?.success)
}

fn simulate(scenario: &Scenario, record: bool) -> Result<EpisodeResult, SimError> {
    let plan = scenario.plan()?;
    let params = *plan.params();
    let dt = scenario.control_period;
    let push_start = scenario.push_start(&plan);
    let push_end = push_start + scenario.push.duration;
    let force = scenario.push.force();
    let end_clock = plan.horizon() + scenario.success.settle_time;
    let crit = scenario.success;

    let mut state = LipmState::at_rest(plan.initial().position);
    let mut ctl = Controller::new(plan, scenario.mode, scenario.controller.clone(), dt);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut out = EpisodeResult::default();
    let mut failure = None;
    let max_ticks = (end_clock / dt).ceil() as usize + 1;

    for tick in 0..max_ticks {
        if ctl.clock() >= end_clock - 1e-9 {
            break;
        }
        let t = tick as f64 * dt;
        let started = Instant::now();
        let res = match ctl.tick(&state) {
            Ok(r) => r,
            Err(e) => {
                out.controller_error = Some(e.to_string());
                failure = Some(Failure::Controller { t });
                break;
            }
        };
        let mut r_cmp = res.r_cmp_d;
        if scenario.cmp_noise > 0.0 {
            let a = scenario.cmp_noise;
            r_cmp += Vector2::new(rng.gen_range(-a..=a), rng.gen_range(-a..=a));
        }
        out.tick_times.push(started.elapsed().as_secs_f64());
        out.qp_times.push(res.qp_seconds);

        let error = (res.xi - res.xi_r).norm();
        out.max_icp_error = out.max_icp_error.max(error);
        if !res.solution.raw.optimal {
            out.nonoptimal_solves += 1;
        }
        if res.timing.delta_t > 1e-9 {
            out.timing_events.push(TimingEvent {
                t,
                delta_t: res.timing.delta_t,
                sigma: res.timing.sigma,
            });
        }
        for &(index, from, to) in &res.replanned {
            out.adjustments.push(Adjustment { t, index, from, to });
        }
        if record {
            out.samples.push(Sample {
                t,
                t_plan: res.t_plan,
                xi: res.xi,
                xi_r: res.xi_r,
                r_cmp_r: res.r_cmp_r,
                r_cmp_d: r_cmp,
                eta: res.solution.eta,
                delta_t: res.timing.delta_t,
                phase: res.phase,
                step_index: res.step_index,
                next_step: {
                    let feet = ctl.plan().footsteps();
                    feet[(res.step_index + 1).min(feet.len() - 1)].position
                },
                push_active: t < push_end && t + dt > push_start,
            });
        }
        let eta = res.solution.eta.amax();
        if error > crit.fall_error {
            failure = Some(Failure::Fell { t, error });
            break;
        }
        if eta >= crit.max_slack {
            failure = Some(Failure::SlackActive { t, eta });
            break;
        }

        state = integrate_tick(&state, &r_cmp, &params, t, dt, (push_start, push_end), &force);
        ctl.advance();
    }

    if failure.is_none() {
        let xi = icp_from_state(&state, &params);
        let xi_r = ctl.plan().reference_at(ctl.clock())?.icp;
        out.final_icp_error = (xi - xi_r).norm();
        if out.final_icp_error >= crit.terminal_error {
            failure = Some(Failure::NotSettled {
                error: out.final_icp_error,
            });
        }
    }
    out.success = failure.is_none();
    out.failure = failure;
    out.final_footsteps = ctl.plan().footsteps().iter().map(|f| f.position).collect();
    Ok(out)
}

/// One control period, split where the push switches on or off.
fn integrate_tick(
    state: &LipmState,
    cmp: &Point2,
    params: &LipmParams,
    t0: f64,
    dt: f64,
    window: (f64, f64),
    force: &Vector2<f64>,
) -> LipmState {
    let t1 = t0 + dt;
    let mut cuts = [t0, window.0.clamp(t0, t1), window.1.clamp(t0, t1), t1];
    cuts.sort_by(f64::total_cmp);
    let mut s = *state;
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        s = if mid > window.0 && mid < window.1 {
            apply_push(&s, cmp, force, len, params)
        } else {
            integrate_plant(&s, cmp, params, len)
        };
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Number of evenly spaced push angles on [0, 2pi).
    pub angle_count: usize,
    pub modes: Vec<ControllerMode>,
    pub gaits: Vec<Gait>,
    /// Walking patterns to cover: `false` walks forward, `true` steps in place.
    pub in_place: Vec<bool>,
    pub bisection_iterations: usize,
    /// Upper bracket as a multiple of the robot weight.
    pub upper_bracket: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angle_count: 8,
            modes: ControllerMode::ALL.to_vec(),
            gaits: Gait::ALL.to_vec(),
            in_place: vec![false, true],
            bisection_iterations: 12,
            upper_bracket: 4.0,
        }
    }
}

impl SweepConfig {
    pub fn angles(&self) -> Vec<f64> {
        let n = self.angle_count as f64;
        (0..self.angle_count)
            .map(|i| i as f64 * std::f64::consts::TAU / n)
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.angle_count == 0 || self.modes.is_empty() || self.gaits.is_empty() || self.in_place.is_empty() {
            return Err(SimError::Invalid("sweep needs angles, modes, gaits and patterns".into()));
        }
        if !(self.upper_bracket > 0.0) || self.bisection_iterations == 0 {
            return Err(SimError::Invalid("sweep bracket and iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub angle: f64,
    pub mode: ControllerMode,
    pub gait: Gait,
    pub in_place: bool,
    /// Largest magnitude found to succeed (N), 0 when even no push fails.
    pub max_push: f64,
    pub max_push_over_weight: f64,
    /// Set when a smaller probe failed although a larger one succeeded.
    pub monotonicity_violation: bool,
}

/// Maximum recoverable push per (pattern, gait, mode, angle) by bisection.
/// Results come back in grid order regardless of scheduling.
pub fn sweep_max_push(template: &Scenario, cfg: &SweepConfig) -> Result<Vec<SweepCell>, SimError> {
    cfg.validate()?;
    template.validate()?;
    let mut cells = Vec::new();
    for &in_place in &cfg.in_place {
        for &gait in &cfg.gaits {
            for &mode in &cfg.modes {
                for angle in cfg.angles() {
                    let mut s = template.with_gait(gait);
                    s.walk.in_place = in_place;
                    s.mode = mode;
                    s.push.angle = angle;
                    cells.push((angle, mode, gait, in_place, s));
                }
            }
        }
    }
    let weight = template.robot.params()?.weight();
    let upper = cfg.upper_bracket * weight;
    cells
        .into_par_iter()
        .map(|(angle, mode, gait, in_place, s)| {
            let (max_push, violation) = bisect(&s, upper, cfg.bisection_iterations)?;
            if violation {
                log::warn!(
                    "non-monotone recovery: angle {angle:.3} mode {} gait {} in_place {in_place}",
                    mode.as_str(),
                    gait.as_str()
                );
            }
            Ok(SweepCell {
                angle,
                mode,
                gait,
                in_place,
                max_push,
                max_push_over_weight: max_push / weight,
                monotonicity_violation: violation,
            })
        })
        .collect()
}

fn succeeds_at(s: &Scenario, magnitude: f64) -> Result<bool, SimError> {
    let mut s = s.clone();
    s.push.magnitude = magnitude;
    episode_succeeds(&s)
}

/// Returns the capacity and whether an audit probe contradicted
/// monotonicity.
fn bisect(s: &Scenario, upper: f64, iterations: usize) -> Result<(f64, bool), SimError> {
    if !succeeds_at(s, 0.0)? {
        return Ok((0.0, false));
    }
    if succeeds_at(s, upper)? {
        return Ok((upper, false));
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if succeeds_at(s, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let violation = lo > 0.0 && !succeeds_at(s, 0.5 * lo)?;
    Ok((lo, violation))
}

//! Subcommand bodies shared by the binary and the tests.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::icp_plan::IcpPlan;
use crate::sim::{self, EpisodeResult, Failure, SimError, SweepCell};

/// Column layout version written into the manifest.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const PLAN_COLUMNS: [&str; 9] = [
    "t", "xi_x", "xi_y", "xi_dot_x", "xi_dot_y", "cmp_x", "cmp_y", "phase", "step_index",
];
pub const FOOTSTEP_COLUMNS: [&str; 9] = [
    "index", "side", "x", "y", "yaw", "heel_cmp_x", "heel_cmp_y", "toe_cmp_x", "toe_cmp_y",
];
pub const EPISODE_COLUMNS: [&str; 20] = [
    "t", "t_plan", "xi_x", "xi_y", "xi_r_x", "xi_r_y", "cmp_r_x", "cmp_r_y", "cmp_d_x", "cmp_d_y",
    "eta_x", "eta_y", "delta_t", "phase", "step_index", "next_step_x", "next_step_y",
    "push_active", "icp_error", "adjusted",
];
pub const SUMMARY_COLUMNS: [&str; 14] = [
    "mode", "success", "failure", "max_icp_error", "final_icp_error", "adjustments",
    "max_adjustment", "timing_events", "max_delta_t", "nonoptimal_solves", "qp_mean_us",
    "qp_median_us", "tick_median_us", "ticks",
];
pub const SWEEP_COLUMNS: [&str; 7] = [
    "angle_rad", "mode", "gait", "pattern", "max_push_N", "max_push_over_weight",
    "monotonicity_violation",
];

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("planner error: {0}")]
    Plan(String),
    #[error("simulation error: {0}")]
    Sim(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Plan(_) => 3,
            CommandError::Sim(_) => 4,
            CommandError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e.to_string())
    }
}

impl From<csv::Error> for CommandError {
    fn from(e: csv::Error) -> Self {
        CommandError::Io(e.to_string())
    }
}

fn sim_error(e: SimError) -> CommandError {
    match e {
        SimError::Invalid(m) => CommandError::Config(ConfigError::Invalid(m)),
        SimError::Plan(p) => CommandError::Plan(p.to_string()),
    }
}

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<File>, CommandError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join(name))?;
    w.write_record(header)?;
    Ok(w)
}

fn f(v: f64) -> String {
    v.to_string()
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, files: &[&str]) -> Result<(), CommandError> {
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "files": files,
        "config": cfg,
    });
    let mut file = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut file, &manifest).map_err(|e| CommandError::Io(e.to_string()))?;
    file.write_all(b"\n")?;
    Ok(())
}

fn prepare(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf, CommandError> {
    cfg.validate()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn write_plan_csv(plan: &IcpPlan, dt: f64, dir: &Path) -> Result<(), CommandError> {
    let mut w = writer(dir, "plan.csv", &PLAN_COLUMNS)?;
    let n = (plan.horizon() / dt + 1e-9).floor() as usize;
    for i in 0..=n {
        let t = i as f64 * dt;
        let r = plan
            .reference_at(t)
            .map_err(|e| CommandError::Plan(e.to_string()))?;
        w.write_record([
            f(t),
            f(r.icp.x),
            f(r.icp.y),
            f(r.icp_vel.x),
            f(r.icp_vel.y),
            f(r.cmp.x),
            f(r.cmp.y),
            r.phase.as_str().to_string(),
            r.step_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_footsteps_csv(plan: &IcpPlan, dir: &Path) -> Result<(), CommandError> {
    let mut w = writer(dir, "footsteps.csv", &FOOTSTEP_COLUMNS)?;
    for (i, step) in plan.footsteps().iter().enumerate() {
        let (h, t) = (plan.heel_cmp(i), plan.toe_cmp(i));
        w.write_record([
            i.to_string(),
            step.side.as_str().to_string(),
            f(step.position.x),
            f(step.position.y),
            f(step.yaw),
            f(h.x),
            f(h.y),
            f(t.x),
            f(t.y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Builds the nominal plan and writes `plan.csv` and `footsteps.csv`.
pub fn cmd_plan(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf, CommandError> {
    let dir = prepare(cfg, out)?;
    let plan = cfg.scenario().plan().map_err(sim_error)?;
    write_plan_csv(&plan, cfg.control_period, &dir)?;
    write_footsteps_csv(&plan, &dir)?;
    write_manifest(&dir, "plan", cfg, &["plan.csv", "footsteps.csv"])?;
    Ok(dir)
}

fn failure_label(f: &Option<Failure>) -> &'static str {
    match f {
        None => "",
        Some(Failure::Fell { .. }) => "fell",
        Some(Failure::SlackActive { .. }) => "slack_active",
        Some(Failure::Controller { .. }) => "controller_error",
        Some(Failure::NotSettled { .. }) => "not_settled",
    }
}

fn write_episode_csv(r: &EpisodeResult, dir: &Path) -> Result<(), CommandError> {
    let mut w = writer(dir, "episode.csv", &EPISODE_COLUMNS)?;
    let mut adj = r.adjustments.iter().peekable();
    for s in &r.samples {
        let mut adjusted = 0usize;
        while adj.peek().is_some_and(|a| a.t <= s.t) {
            adj.next();
            adjusted += 1;
        }
        w.write_record([
            f(s.t),
            f(s.t_plan),
            f(s.xi.x),
            f(s.xi.y),
            f(s.xi_r.x),
            f(s.xi_r.y),
            f(s.r_cmp_r.x),
            f(s.r_cmp_r.y),
            f(s.r_cmp_d.x),
            f(s.r_cmp_d.y),
            f(s.eta.x),
            f(s.eta.y),
            f(s.delta_t),
            s.phase.as_str().to_string(),
            s.step_index.to_string(),
            f(s.next_step.x),
            f(s.next_step.y),
            u8::from(s.push_active).to_string(),
            f((s.xi - s.xi_r).norm()),
            adjusted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(cfg: &RunConfig, r: &EpisodeResult, dir: &Path) -> Result<(), CommandError> {
    let mut w = writer(dir, "summary.csv", &SUMMARY_COLUMNS)?;
    let max_adj = r
        .adjustments
        .iter()
        .fold(0.0, |a: f64, x| a.max((x.to - x.from).norm()));
    let us = |v: Option<f64>| match v {
        Some(v) if cfg.output.report_timing => f(v * 1e6),
        _ => String::new(),
    };
    let mean = (!r.qp_times.is_empty()).then(|| r.qp_times.iter().sum::<f64>() / r.qp_times.len() as f64);
    w.write_record([
        cfg.mode.as_str().to_string(),
        r.success.to_string(),
        failure_label(&r.failure).to_string(),
        f(r.max_icp_error),
        f(r.final_icp_error),
        r.adjustments.len().to_string(),
        f(max_adj),
        r.timing_events.len().to_string(),
        f(r.max_delta_t()),
        r.nonoptimal_solves.to_string(),
        us(mean),
        us(sim::median(&r.qp_times)),
        us(sim::median(&r.tick_times)),
        r.tick_times.len().to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Runs one episode. An unsuccessful recovery is a normal result; only an
/// invalid setup is an error.
pub fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<(PathBuf, EpisodeResult), CommandError> {
    let dir = prepare(cfg, out)?;
    let result = sim::run_episode(&cfg.scenario()).map_err(sim_error)?;
    let plan = cfg.scenario().plan().map_err(sim_error)?;
    let final_plan = plan
        .with_positions(
            &result
                .final_footsteps
                .iter()
                .copied()
                .enumerate()
                .collect::<Vec<_>>(),
        )
        .map_err(|e| CommandError::Sim(e.to_string()))?;
    write_episode_csv(&result, &dir)?;
    write_summary_csv(cfg, &result, &dir)?;
    write_footsteps_csv(&final_plan, &dir)?;
    write_manifest(&dir, "simulate", cfg, &["episode.csv", "summary.csv", "footsteps.csv"])?;
    Ok((dir, result))
}

pub fn write_sweep_csv(cells: &[SweepCell], dir: &Path) -> Result<(), CommandError> {
    let mut w = writer(dir, "sweep.csv", &SWEEP_COLUMNS)?;
    for c in cells {
        w.write_record([
            f(c.angle),
            c.mode.as_str().to_string(),
            c.gait.as_str().to_string(),
            if c.in_place { "in_place" } else { "forward" }.to_string(),
            f(c.max_push),
            f(c.max_push_over_weight),
            u8::from(c.monotonicity_violation).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bisection sweep over the configured grid on `cfg.jobs` threads.
pub fn cmd_sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<(PathBuf, Vec<SweepCell>), CommandError> {
    let dir = prepare(cfg, out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CommandError::Sim(e.to_string()))?;
    let cells = pool
        .install(|| sim::sweep_max_push(&cfg.scenario(), &cfg.sweep))
        .map_err(sim_error)?;
    write_sweep_csv(&cells, &dir)?;
    write_manifest(&dir, "sweep", cfg, &["sweep.csv"])?;
    Ok((dir, cells))
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not on the known-failure list.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_8, PI};
use std::path::Path;
use std::time::Instant;

use common::*;
use icp_walk::commands;
use icp_walk::config::RunConfig;
use icp_walk::controller::ControllerMode;
use icp_walk::footstep::TimingParams;
use icp_walk::geometry::Point2;
use icp_walk::icp_plan::{IcpPlan, SegmentKind};
use icp_walk::qp::solve_active_set;
use icp_walk::qp::stab::{ConstraintForm, Pinning};
use icp_walk::recursive_model::build_model;
use icp_walk::sim::{self, Gait, Scenario, SweepCell, SweepConfig};
use icp_walk::timing_adjust;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the faithful implementation. See README.
const KNOWN_FAILURES: &[&str] = &["5a"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn planner_equivalence() -> Vec<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut corner_err, mut final_err, mut pos_gap, mut vel_gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut plans = 0;
    for steps in 1..=10 {
        for _ in 0..20 {
            let plan = random_plan(&mut rng, steps, 0.6, 0.8, 2.5);
            let segs = plan.segments();
            for (i, seg) in segs.iter().enumerate() {
                let xi0 = plan.reference_in(seg, 0.0).icp;
                let end = rk4_segment(&plan, seg, xi0, 400);
                let expect = plan.reference_in(seg, seg.duration);
                corner_err = corner_err.max((end - expect.icp).norm());
                if let Some(next) = segs.get(i + 1) {
                    let n = plan.reference_in(next, 0.0);
                    pos_gap = pos_gap.max((n.icp - expect.icp).norm());
                    if seg.kind == SegmentKind::Transfer || next.kind == SegmentKind::Transfer {
                        vel_gap = vel_gap.max((n.icp_vel - expect.icp_vel).norm());
                    }
                } else {
                    final_err = final_err.max((end - plan.final_corner()).norm());
                }
            }
            plans += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![
        outcome(
            "1",
            corner_err.max(final_err) < 1e-7 && secs < 5.0,
            format!(
                "{plans} plans of 1-10 steps: RK4 corner error {corner_err:.2e} m, final objective error {final_err:.2e} m (tol 1e-7), {secs:.2} s (< 5 s)"
            ),
        ),
        outcome(
            "1-joins",
            pos_gap < 1e-9 && vel_gap < 1e-9,
            format!("join gaps: position {pos_gap:.2e} m, velocity at spline joins {vel_gap:.2e} m/s (tol 1e-9)"),
        ),
    ]
}

fn model_equivalence() -> Vec<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut pred_err, mut fd_err) = (0.0f64, 0.0f64);
    let mut samples = 0;
    for _ in 0..6 {
        let steps = rng.gen_range(3..=8);
        let plan = random_plan(&mut rng, steps, 0.6, 0.8, 2.5);
        for n in 1..=3 {
            for (si, seg) in plan.segments().iter().enumerate() {
                for j in 0..100 {
                    let t = seg.start + seg.duration * (j as f64 + 0.5) / 100.0;
                    let model = build_model(&plan, t, n).unwrap();
                    let r = plan.reference_at(t).unwrap();
                    pred_err = pred_err.max((model.predict_nominal() - r.icp).norm());
                    samples += 1;
                    if j % 25 != 12 || si % 2 != 0 {
                        continue;
                    }
                    let h = 1e-4;
                    for (i, g) in model.gamma_steps.iter().enumerate() {
                        let idx = model.footstep_index(i + 1);
                        for axis in 0..2 {
                            let shifted = |d: f64| {
                                let mut p = plan.footsteps()[idx].position;
                                p[axis] += d;
                                plan.with_positions(&[(idx, p)]).unwrap().reference_at(t).unwrap().icp
                            };
                            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                            fd_err = fd_err.max((fd[axis] - g).abs()).max(fd[1 - axis].abs());
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![outcome(
        "2",
        pred_err < 1e-9 && fd_err < 1e-6 && secs < 10.0,
        format!(
            "{samples} samples, N=1..3: prediction error {pred_err:.2e} m (tol 1e-9), Gamma vs finite differences {fd_err:.2e} (tol 1e-6), {secs:.2} s (< 10 s)"
        ),
    )]
}

/// Same footsteps with a short protected tail so that most of the toe
/// segment may be skipped.
fn loose_tail(plan: &IcpPlan) -> IcpPlan {
    let timing = TimingParams {
        min_swing_remaining: 0.02 * plan.timing().swing_duration,
        ..*plan.timing()
    };
    IcpPlan::build(plan.footsteps().to_vec(), offsets(), timing, params()).unwrap()
}

fn timing_inversion() -> Vec<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut inv_err, mut perp_max) = (0.0f64, 0.0f64);
    let mut cases = 0;
    while cases < 1000 {
        let plan = loose_tail(&random_plan(&mut rng, 4, 0.6, 0.8, 2.5));
        let msr = plan.timing().min_swing_remaining;
        let toes: Vec<_> = plan
            .segments()
            .iter()
            .filter(|s| s.kind == SegmentKind::SwingToe)
            .copied()
            .collect();
        for seg in toes.iter().take(3) {
            let latest = seg.end() - msr;
            let t = rng.gen_range(seg.start..latest - 1e-3);
            let planted = rng.gen_range(1e-4..latest - t);
            let r = plan.reference_at(t).unwrap();
            let k = r.step_index;
            let dir = (plan.touchdown_icp(k) - r.icp).normalize();
            let perp = Point2::new(-dir.y, dir.x);
            let ahead = plan.reference_at(t + planted).unwrap().icp;
            let xi = ahead + perp * rng.gen_range(-0.05..0.05);
            let adj = timing_adjust::apply(&plan, &xi, t);
            inv_err = inv_err.max((adj.delta_t - planted).abs());
            let side = r.icp + perp * rng.gen_range(-0.1..0.1);
            perp_max = perp_max.max(timing_adjust::apply(&plan, &side, t).delta_t);
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    vec![outcome(
        "3",
        inv_err < 1e-9 && perp_max < 1e-9 && secs < 1.0,
        format!(
            "{cases} toe-segment cases: |dt - planted| {inv_err:.2e} s (tol 1e-9), perpendicular errors give dt <= {perp_max:.2e} s (tol 1e-9), {secs:.2} s (< 1 s)"
        ),
    )]
}

fn qp_correctness() -> Vec<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut kkt_max, mut obj_gap) = (0.0f64, 0.0f64);
    let mut nonoptimal = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng);
        let qp = inst.build();
        let sol = solve_active_set(&qp.problem).unwrap();
        if !sol.optimal {
            nonoptimal += 1;
        }
        kkt_max = kkt_max.max(sol.kkt(&qp.problem).max());
        let (_, obj) = ipm_solve(&qp.problem);
        obj_gap = obj_gap.max((obj - sol.objective).abs());
    }
    let secs = start.elapsed().as_secs_f64();

    let (plan, t) = swing_plan();
    let mut zero = 0.0f64;
    for form in [ConstraintForm::HalfSpace, ConstraintForm::Vertex] {
        for n in 1..=3 {
            let inst = instance(plan.clone(), t, n, Point2::zeros(), form, Pinning::None);
            let qp = inst.build();
            let s = qp.unpack(solve_active_set(&qp.problem).unwrap());
            zero = zero.max(s.delta.amax()).max(s.eta.amax());
            for (p, q) in s.footsteps.iter().zip(&inst.model.nominal) {
                zero = zero.max((p - q).norm());
            }
        }
    }

    let e = Point2::new(0.02, -0.015);
    let inst = instance(plan.clone(), t, 2, e, ConstraintForm::HalfSpace, Pinning::Footsteps);
    let qp = inst.build();
    let s = qp.unpack(solve_active_set(&qp.problem).unwrap());
    let k = inst.gains.k_xi();
    let mut frozen = 0.0f64;
    for a in 0..2 {
        let (r, q) = (inst.weights.r_delta[a], inst.weights.q_eta[a]);
        frozen = frozen.max((s.delta[a] - k[a] * e[a] * q / (q + r * k[a] * k[a])).abs());
    }
    for (p, q) in s.footsteps.iter().zip(&inst.model.nominal) {
        frozen = frozen.max((p - q).norm());
    }

    let e = Point2::new(0.01, 0.008);
    let inst = instance(plan, t, 1, e, ConstraintForm::HalfSpace, Pinning::Delta);
    let qp = inst.build();
    let s = qp.unpack(solve_active_set(&qp.problem).unwrap());
    let g = inst.model.gamma_steps[0];
    let mut pinned = s.delta.amax();
    for a in 0..2 {
        let (qf, qe) = (inst.weights.q_f(0)[(a, a)], inst.weights.q_eta[a]);
        let d = e[a] * g * qe / (qf + g * g * qe);
        pinned = pinned.max((s.footsteps[0][a] - inst.model.nominal[0][a] - d).abs());
    }

    vec![
        outcome(
            "4",
            kkt_max <= 1e-8 && obj_gap <= 1e-6 && nonoptimal == 0 && secs < 30.0,
            format!(
                "1000 fuzzed QPs: max scaled KKT residual {kkt_max:.2e} (tol 1e-8), objective gap to interior point {obj_gap:.2e} (tol 1e-6), {nonoptimal} non-optimal, {secs:.2} s (< 30 s)"
            ),
        ),
        outcome(
            "4-regimes",
            zero < 1e-9 && frozen < 1e-12 && pinned < 1e-10,
            format!(
                "zero error identity {zero:.2e} (tol 1e-9), frozen feet vs closed form {frozen:.2e} (tol 1e-12), pinned delta vs closed form {pinned:.2e} (tol 1e-10)"
            ),
        ),
    ]
}

type CellKey = (bool, &'static str, u64);

fn capacity_table(cells: &[SweepCell]) -> BTreeMap<(CellKey, &'static str), f64> {
    cells
        .iter()
        .map(|c| (((c.in_place, c.gait.as_str(), c.angle.to_bits()), c.mode.as_str()), c.max_push_over_weight))
        .collect()
}

fn pattern(in_place: bool) -> &'static str {
    if in_place {
        "in_place"
    } else {
        "forward"
    }
}

fn mean_over_angles(cells: &[SweepCell], mode: ControllerMode, gait: Gait, in_place: bool) -> f64 {
    let v: Vec<f64> = cells
        .iter()
        .filter(|c| c.mode == mode && c.gait == gait && c.in_place == in_place)
        .map(|c| c.max_push_over_weight)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Push angles roughly perpendicular to the reference ICP motion at push
/// time while stepping in place.
fn perpendicular_angles(template: &Scenario, gait: Gait, angles: &[f64]) -> Vec<f64> {
    let mut s = template.with_gait(gait);
    s.walk.in_place = true;
    let plan = s.plan().unwrap();
    let t = s.push_start(&plan);
    let r = plan.reference_at(t).unwrap();
    let d = plan.touchdown_icp(r.step_index) - r.icp;
    let heading = d.y.atan2(d.x);
    angles
        .iter()
        .copied()
        .filter(|a| (a - heading).cos().abs() < FRAC_PI_8.sin())
        .collect()
}

fn sweep_trends() -> Vec<Outcome> {
    let template = Scenario::default();
    let cfg = SweepConfig::default();
    let start = Instant::now();
    let cells = sim::sweep_max_push(&template, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let table = capacity_table(&cells);
    let resolution = cfg.upper_bracket / (1u64 << cfg.bisection_iterations) as f64;
    let threads = rayon::current_num_threads();

    let mut shortfalls = Vec::new();
    let mut worst = 0.0f64;
    for c in cells.iter().filter(|c| c.mode == ControllerMode::FeedbackBoth) {
        let key = (c.in_place, c.gait.as_str(), c.angle.to_bits());
        for other in ControllerMode::ALL {
            let cap = table[&(key, other.as_str())];
            let gap = cap - c.max_push_over_weight;
            worst = worst.max(gap);
            if gap > resolution {
                shortfalls.push(format!(
                    "{} {} {:.3} rad: both {:.4} < {} {:.4}",
                    pattern(c.in_place),
                    c.gait.as_str(),
                    c.angle,
                    c.max_push_over_weight,
                    other.as_str(),
                    cap
                ));
            }
        }
    }
    let violations = cells.iter().filter(|c| c.monotonicity_violation).count();

    let mut b = Vec::new();
    let mut c = Vec::new();
    let mut b_ok = true;
    let mut c_ok = true;
    for in_place in [false, true] {
        let af = mean_over_angles(&cells, ControllerMode::FeedbackAdjust, Gait::Fast, in_place);
        let as_ = mean_over_angles(&cells, ControllerMode::FeedbackAdjust, Gait::Slow, in_place);
        b_ok &= af > as_;
        b.push(format!("{} fast {af:.3} W vs slow {as_:.3} W", pattern(in_place)));
        let of = mean_over_angles(&cells, ControllerMode::FeedbackOnly, Gait::Fast, in_place);
        let os = mean_over_angles(&cells, ControllerMode::FeedbackOnly, Gait::Slow, in_place);
        let rel = (of - os).abs() / of.max(os);
        c_ok &= rel < 0.15;
        c.push(format!("{} {:.1}%", pattern(in_place), 100.0 * rel));
    }

    let mut d = Vec::new();
    let mut d_ok = true;
    let mut d_count = 0;
    for gait in Gait::ALL {
        for angle in perpendicular_angles(&template, gait, &cfg.angles()) {
            let key = (true, gait.as_str(), angle.to_bits());
            let only = table[&(key, ControllerMode::FeedbackOnly.as_str())];
            let speed = table[&(key, ControllerMode::FeedbackSpeedup.as_str())];
            let rel = (speed - only).abs() / only;
            d_ok &= rel < 0.10;
            d_count += 1;
            d.push(format!("{} {:.3} rad {:.1}%", gait.as_str(), angle, 100.0 * rel));
        }
    }
    d_ok &= d_count > 0;

    let a_detail = if shortfalls.is_empty() {
        format!("FeedbackBoth within {resolution:.4} W of the best mode in all {} cells", cells.len() / 4)
    } else {
        format!(
            "{} cells beyond resolution {resolution:.4} W (worst {worst:.4} W): {}",
            shortfalls.len(),
            shortfalls.join("; ")
        )
    };
    vec![
        outcome("5a", shortfalls.is_empty(), a_detail),
        outcome("5b", b_ok, format!("FeedbackAdjust mean capacity: {}", b.join(", "))),
        outcome("5c", c_ok, format!("FeedbackOnly fast/slow difference: {} (tol 15%)", c.join(", "))),
        outcome(
            "5d",
            d_ok,
            format!("FeedbackSpeedup vs FeedbackOnly, perpendicular in-place pushes: {} (tol 10%)", d.join(", ")),
        ),
        outcome(
            "5-runtime",
            secs < 600.0 * (4.0 / threads.min(4) as f64).max(1.0),
            format!(
                "full sweep of {} cells in {secs:.1} s on {threads} thread(s), {violations} monotonicity violations",
                cells.len()
            ),
        ),
    ]
}

fn read_summary(dir: &Path) -> BTreeMap<String, String> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    header.iter().map(String::from).zip(row.iter().map(String::from)).collect()
}

fn performance() -> Vec<Outcome> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.controller.horizon = 3;
    cfg.output.report_timing = true;
    cfg.push.magnitude = 120.0;
    cfg.push.angle = PI / 2.0;
    let (_, result) = commands::cmd_simulate(&cfg, Some(dir.path())).unwrap();
    let s = read_summary(dir.path());
    let us = |k: &str| s[k].parse::<f64>().unwrap();
    let (qp, tick) = (us("qp_median_us"), us("tick_median_us"));
    vec![outcome(
        "6",
        qp < 1000.0 && tick < 3000.0,
        format!(
            "N=3, {} ticks, {} adjustments, recovered {}: median QP solve {qp:.1} us (< 1000), median tick {tick:.1} us (< 3000), mean QP {:.1} us",
            s["ticks"],
            result.adjustments.len(),
            result.success,
            us("qp_mean_us")
        ),
    )]
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).map_err(|_| format!("{name:?} missing"))?;
        if x != y {
            return Err(format!("{name:?} differs"));
        }
    }
    Ok(names.len())
}

fn determinism() -> Vec<Outcome> {
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.cmp_noise = 0.02;
    cfg.push.magnitude = 300.0;
    cfg.push.angle = 2.0;
    cfg.sweep = SweepConfig {
        angle_count: 2,
        modes: vec![ControllerMode::FeedbackOnly, ControllerMode::FeedbackBoth],
        gaits: vec![Gait::Fast],
        in_place: vec![true],
        bisection_iterations: 6,
        upper_bracket: 4.0,
    };
    let mut files = 0;
    let mut problems = Vec::new();
    for cmd in ["plan", "simulate", "sweep"] {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                match cmd {
                    "plan" => drop(commands::cmd_plan(&cfg, Some(dir.path())).unwrap()),
                    "simulate" => drop(commands::cmd_simulate(&cfg, Some(dir.path())).unwrap()),
                    _ => drop(commands::cmd_sweep(&cfg, Some(dir.path())).unwrap()),
                }
                dir
            })
            .collect();
        match same_files(runs[0].path(), runs[1].path()) {
            Ok(n) => files += n,
            Err(e) => problems.push(format!("{cmd}: {e}")),
        }
    }
    let detail = if problems.is_empty() {
        format!("plan, simulate (with CMP noise) and sweep: {files} output files byte-identical across two runs")
    } else {
        problems.join("; ")
    };
    vec![outcome("7", problems.is_empty(), detail)]
}

fn main() {
    let suites: [(&str, fn() -> Vec<Outcome>); 7] = [
        ("planner oracle equivalence", planner_equivalence),
        ("recursive model equivalence", model_equivalence),
        ("timing adjust inversion", timing_inversion),
        ("QP correctness", qp_correctness),
        ("sweep trends", sweep_trends),
        ("performance", performance),
        ("determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (name, run) in suites {
        for o in run() {
            let known = KNOWN_FAILURES.contains(&o.id);
            let tag = match (o.pass, known) {
                (true, _) => "PASS",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            };
            println!("[{tag}] {} {name}: {}", o.id, o.detail);
            if !o.pass && !known {
                unexpected.push(o.id);
            }
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
    } else {
        println!("acceptance: unexpected failures in {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

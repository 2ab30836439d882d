//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use icp_walk::footstep::{CmpOffsets, Footstep, Side, TimingParams};
use icp_walk::geometry::{ConvexPolygon, Point2};
use icp_walk::icp_plan::{IcpPlan, Segment};
use icp_walk::lipm::LipmParams;
use icp_walk::qp::stab::{
    build_qp, ConstraintForm, Gains, Pinning, ReachabilityRect, StabInputs, StabQp, Weights,
};
use icp_walk::qp::QpProblem;
use icp_walk::recursive_model::{build_model, RecursiveModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn params() -> LipmParams {
    LipmParams::new(9.81, 0.981, 95.7).unwrap()
}

pub fn foothold() -> ConvexPolygon {
    ConvexPolygon::rectangle(Point2::zeros(), 0.22, 0.11).unwrap()
}

pub fn offsets() -> CmpOffsets {
    CmpOffsets::for_foot_length(0.22)
}

/// Random walk of `steps` footsteps after the two initial feet, strides up
/// to `max_stride`, step duration in `[t_min, t_max]`.
pub fn random_plan<R: Rng>(rng: &mut R, steps: usize, max_stride: f64, t_min: f64, t_max: f64) -> IcpPlan {
    let timing = loop {
        let t = rng.gen_range(t_min..=t_max);
        let ds = rng.gen_range(0.15..0.35) * t;
        let timing = TimingParams {
            swing_duration: t - ds,
            transfer_duration: ds,
            alpha_th: rng.gen_range(0.35..0.65),
            alpha_ini_ds: rng.gen_range(0.3..0.7),
            min_swing_remaining: 0.6f64.min(0.5 * (t - ds)),
        };
        if timing.validate().is_ok() {
            break timing;
        }
    };
    let width = rng.gen_range(0.2..0.3);
    let first = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
    let mut feet = vec![
        Footstep::new(Point2::new(0.0, first.outward_sign() * width / 2.0), 0.0, first, foothold()),
        Footstep::new(
            Point2::new(0.0, first.opposite().outward_sign() * width / 2.0),
            0.0,
            first.opposite(),
            foothold(),
        ),
    ];
    let mut heading: f64 = 0.0;
    for _ in 0..steps {
        let prev = &feet[feet.len() - 1];
        let side = prev.side.opposite();
        heading += rng.gen_range(-0.15..0.15);
        let stride = rng.gen_range(0.0..=max_stride);
        let fwd = Point2::new(heading.cos(), heading.sin());
        let left = Point2::new(-heading.sin(), heading.cos());
        let other = &feet[feet.len() - 2];
        let base = (prev.position + other.position) * 0.5;
        let pos = base + fwd * stride + left * (side.outward_sign() * width / 2.0);
        feet.push(Footstep::new(pos, heading, side, foothold()));
    }
    IcpPlan::build(feet, offsets(), timing, params()).unwrap()
}

/// Fixed five-step plan and a time early in the swing onto footstep 2.
pub fn swing_plan() -> (IcpPlan, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let plan = random_plan(&mut rng, 5, 0.3, 1.0, 1.0);
    let t = plan.swing_start(2) + 0.3 * plan.timing().swing_duration;
    (plan, t)
}

/// RK4 of `xi' = omega (xi - cmp(t))` across one segment, CMP taken from
/// the plan's own reference.
pub fn rk4_segment(plan: &IcpPlan, seg: &Segment, xi0: Point2, substeps: usize) -> Point2 {
    let w = plan.params().omega0();
    let cmp = |s: f64| plan.reference_in(seg, s.clamp(0.0, seg.duration)).cmp;
    let f = |s: f64, x: Point2| (x - cmp(s)) * w;
    let h = seg.duration / substeps as f64;
    let mut x = xi0;
    for i in 0..substeps {
        let s = i as f64 * h;
        let k1 = f(s, x);
        let k2 = f(s + h / 2.0, x + k1 * (h / 2.0));
        let k3 = f(s + h / 2.0, x + k2 * (h / 2.0));
        let k4 = f(s + h, x + k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Everything needed to rebuild a stabilization QP.
pub struct Instance {
    pub plan: IcpPlan,
    pub model: RecursiveModel,
    pub t: f64,
    pub xi: Point2,
    pub xi_r: Point2,
    pub r_cmp_r: Point2,
    pub support: ConvexPolygon,
    pub form: ConstraintForm,
    pub pinning: Pinning,
    pub gains: Gains,
    pub weights: Weights,
    pub reach: ReachabilityRect,
}

impl Instance {
    pub fn build(&self) -> StabQp {
        let k = self.model.step_index;
        let n = self.model.horizon();
        let feet = self.plan.footsteps();
        build_qp(
            &self.model,
            &StabInputs {
                xi: self.xi,
                r_cmp_r: self.r_cmp_r,
                support: &self.support,
                anchor: &feet[k],
                upcoming: &feet[k + 1..=k + n],
                gains: &self.gains,
                weights: &self.weights,
                reach: &self.reach,
                form: self.form,
                pinning: self.pinning,
            },
        )
        .unwrap()
    }
}

pub fn instance(plan: IcpPlan, t: f64, n: usize, error: Point2, form: ConstraintForm, pinning: Pinning) -> Instance {
    let model = build_model(&plan, t, n).unwrap();
    let r = plan.reference_at(t).unwrap();
    let seg = plan.segments()[plan.segment_index(t)];
    let support = plan.support_region(seg.kind, seg.step_index);
    Instance {
        model,
        t,
        xi: r.icp + error,
        xi_r: r.icp,
        r_cmp_r: r.cmp,
        support,
        form,
        pinning,
        gains: Gains::default(),
        weights: Weights::default(),
        reach: ReachabilityRect::default(),
        plan,
    }
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let steps = rng.gen_range(2..=6);
    let plan = random_plan(rng, steps, 0.6, 0.8, 2.5);
    let t = rng.gen_range(0.0..plan.horizon());
    let n = rng.gen_range(1..=3);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mag = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.35) };
    let error = Point2::new(angle.cos(), angle.sin()) * mag;
    let form = if rng.gen_bool(0.5) {
        ConstraintForm::HalfSpace
    } else {
        ConstraintForm::Vertex
    };
    let pinning = match rng.gen_range(0..4) {
        0 => Pinning::Footsteps,
        1 => Pinning::Delta,
        _ => Pinning::None,
    };
    let inst = instance(plan, t, n, error, form, pinning);
    // Pinning delta needs the reference CMP itself to be supported.
    if inst.pinning == Pinning::Delta && !inst.support.contains(&inst.r_cmp_r, 0.0) {
        return Instance {
            pinning: Pinning::None,
            ..inst
        };
    }
    inst
}

/// Primal-dual interior point method (Mehrotra predictor-corrector),
/// written independently of the production solver. Each Newton step
/// solves the full unreduced system. Returns `(z, objective)`.
pub fn ipm_solve(p: &QpProblem) -> (DVector<f64>, f64) {
    let n = p.dim();
    let me = p.n_eq();
    let mi = p.n_in();
    // Equilibrate: unit-norm constraint rows, objective scaled to order one.
    let c = 1.0 / p.hessian.amax().max(p.linear.amax()).max(1.0);
    let (h, f) = (&p.hessian * c, &p.linear * c);
    let (mut a, mut b, mut g, mut hv) = (p.a_eq.clone(), p.b_eq.clone(), p.a_in.clone(), p.b_in.clone());
    for i in 0..me {
        let r = a.row(i).norm();
        a.row_mut(i).scale_mut(1.0 / r);
        b[i] /= r;
    }
    for i in 0..mi {
        let r = g.row(i).norm();
        g.row_mut(i).scale_mut(1.0 / r);
        hv[i] /= r;
    }
    let (h, f, a, b, g, hv) = (&h, &f, &a, &b, &g, &hv);
    let dim = n + me + 2 * mi;
    let (oz, ol, om, os) = (0, n, n + me, n + me + mi);
    let mut z = DVector::zeros(n);
    let mut lam = DVector::zeros(me);
    let mut s = DVector::from_iterator(mi, (hv - g * &z).iter().map(|v| v.max(1.0)));
    let mut mu = DVector::from_element(mi, 1.0);

    let mut base = DMatrix::zeros(dim, dim);
    base.view_mut((oz, oz), (n, n)).copy_from(h);
    base.view_mut((oz, ol), (n, me)).copy_from(&a.transpose());
    base.view_mut((oz, om), (n, mi)).copy_from(&g.transpose());
    base.view_mut((ol, oz), (me, n)).copy_from(a);
    base.view_mut((om, oz), (mi, n)).copy_from(g);
    for j in 0..mi {
        base[(om + j, os + j)] = 1.0;
    }

    let max_step = |x: &DVector<f64>, dx: &DVector<f64>| {
        x.iter()
            .zip(dx.iter())
            .filter(|(_, d)| **d < 0.0)
            .map(|(x, d)| -x / d)
            .fold(1.0, f64::min)
    };

    for _ in 0..300 {
        let rd = h * &z + f + a.transpose() * &lam + g.transpose() * &mu;
        let re = a * &z - b;
        let ri = g * &z + &s - hv;
        let gap = if mi > 0 { s.dot(&mu) / mi as f64 } else { 0.0 };
        let scale = 1.0;
        let prim = re.amax().max(if mi > 0 { ri.amax() } else { 0.0 });
        if rd.amax() < 1e-11 * scale && prim < 1e-12 && gap < 1e-14 {
            break;
        }
        let mut k = base.clone();
        for j in 0..mi {
            k[(os + j, om + j)] = s[j];
            k[(os + j, os + j)] = mu[j];
        }
        let lu = k.lu();
        let step = |rc: &DVector<f64>| {
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(oz, n).copy_from(&(-&rd));
            rhs.rows_mut(ol, me).copy_from(&(-&re));
            rhs.rows_mut(om, mi).copy_from(&(-&ri));
            rhs.rows_mut(os, mi).copy_from(&(-rc));
            let x = lu.solve(&rhs).expect("nonsingular Newton system");
            (
                x.rows(oz, n).into_owned(),
                x.rows(ol, me).into_owned(),
                x.rows(om, mi).into_owned(),
                x.rows(os, mi).into_owned(),
            )
        };
        let rc_aff = s.component_mul(&mu);
        let (_, _, dmu_a, ds_a) = step(&rc_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&mu, &dmu_a));
        let sigma = if mi > 0 && gap > 0.0 {
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&mu + &dmu_a * alpha_aff)) / mi as f64;
            (mu_aff / gap).powi(3)
        } else {
            0.0
        };
        let rc = DVector::from_iterator(
            mi,
            (0..mi).map(|j| s[j] * mu[j] + ds_a[j] * dmu_a[j] - sigma * gap),
        );
        let (dz, dl, dmu, ds) = step(&rc);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&mu, &dmu))).min(1.0);
        z += &dz * alpha;
        lam += &dl * alpha;
        mu += &dmu * alpha;
        s += &ds * alpha;
    }
    let obj = p.objective(&z);
    (z, obj)
}

/// Exhaustive active-set enumeration for small problems: every subset of
/// inequality rows is tried as equalities; the best KKT point wins.
pub fn brute_force(p: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = p.dim();
    let mi = p.n_in();
    assert!(mi <= 16, "too many rows to enumerate");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << mi) {
        let rows: Vec<usize> = (0..mi).filter(|j| mask & (1 << j) != 0).collect();
        let m = p.n_eq() + rows.len();
        if m > n {
            continue;
        }
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        a.view_mut((0, 0), (p.n_eq(), n)).copy_from(&p.a_eq);
        b.rows_mut(0, p.n_eq()).copy_from(&p.b_eq);
        for (r, j) in rows.iter().enumerate() {
            a.row_mut(p.n_eq() + r).copy_from(&p.a_in.row(*j));
            b[p.n_eq() + r] = p.b_in[*j];
        }
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(&a);
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&p.linear));
        rhs.rows_mut(n, m).copy_from(&b);
        let Some(sol) = k.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        if p.infeasibility(&z) > 1e-9 {
            continue;
        }
        // multipliers of the chosen inequality rows must be non-negative
        if rows.iter().enumerate().any(|(r, _)| sol[n + p.n_eq() + r] < -1e-7) {
            continue;
        }
        let obj = p.objective(&z);
        if best.as_ref().map_or(true, |(_, o)| obj < *o) {
            best = Some((z, obj));
        }
    }
    best
}

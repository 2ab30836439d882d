//! Step-adjustment QP: proportional ICP feedback with footstep adjustment,
//! CMP support constraint and footstep reachability.
//!
//! Decision vector `z = [r_f,1 .. r_f,N, delta, eta, beta]` where `beta`
//! only exists in the vertex form of the CMP constraint.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::problem::{QpError, QpProblem, QpSolution};
use crate::footstep::Footstep;
use crate::geometry::{rotation, ConvexPolygon, Point2};
use crate::lipm::{LipmParams, LipmState};
use crate::recursive_model::RecursiveModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    /// Proportional ICP gain per axis.
    pub k_p: [f64; 2],
}

impl Default for Gains {
    fn default() -> Self {
        Self { k_p: [1.5, 1.5] }
    }
}

impl Gains {
    pub fn k_xi(&self) -> Vector2<f64> {
        Vector2::new(self.k_p[0] + 1.0, self.k_p[1] + 1.0)
    }
}

/// Diagonal weights; `q_f` holds one entry per horizon step and the last
/// entry is reused for longer horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub q_f: Vec<[f64; 2]>,
    pub r_delta: [f64; 2],
    pub q_eta: [f64; 2],
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            q_f: vec![[5.0, 5.0]],
            r_delta: [0.05, 0.05],
            q_eta: [1e6, 1e6],
        }
    }
}

impl Weights {
    pub fn q_f(&self, i: usize) -> Matrix2<f64> {
        let q = self
            .q_f
            .get(i)
            .or(self.q_f.last())
            .copied()
            .unwrap_or([5.0, 5.0]);
        Matrix2::from_diagonal(&Vector2::new(q[0], q[1]))
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = self
            .q_f
            .iter()
            .chain([&self.r_delta, &self.q_eta])
            .flatten();
        for w in all {
            if !(w.is_finite() && *w > 0.0) {
                return Err(format!("weights must be positive, got {w}"));
            }
        }
        if self.q_f.is_empty() {
            return Err("q_f needs at least one entry".into());
        }
        Ok(())
    }
}

/// Rectangle in the previous footstep's frame bounding the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachabilityRect {
    pub forward_max: f64,
    pub backward_max: f64,
    pub outward_max: f64,
    pub inward_min: f64,
}

impl Default for ReachabilityRect {
    fn default() -> Self {
        Self {
            forward_max: 0.8,
            backward_max: 0.5,
            outward_max: 0.6,
            inward_min: 0.1,
        }
    }
}

impl ReachabilityRect {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.forward_max > -self.backward_max) {
            return Err("forward_max must exceed -backward_max".into());
        }
        if !(self.inward_min >= 0.0 && self.outward_max > self.inward_min) {
            return Err("need outward_max > inward_min >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintForm {
    /// CMP as a convex combination of polygon corners.
    Vertex,
    /// Polygon edges as half-space rows on the CMP.
    HalfSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pinning {
    None,
    /// Footsteps fixed at their nominal positions.
    Footsteps,
    /// No CMP feedback allowed.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub steps: usize,
    pub vertices: usize,
}

impl Layout {
    pub fn step(&self, i: usize) -> usize {
        2 * i
    }

    pub fn delta(&self) -> usize {
        2 * self.steps
    }

    pub fn eta(&self) -> usize {
        2 * self.steps + 2
    }

    pub fn beta(&self) -> usize {
        2 * self.steps + 4
    }

    pub fn dim(&self) -> usize {
        2 * self.steps + 4 + self.vertices
    }
}

/// Everything the builder needs besides the model.
#[derive(Debug, Clone)]
pub struct StabInputs<'a> {
    pub xi: Point2,
    pub r_cmp_r: Point2,
    pub support: &'a ConvexPolygon,
    /// Footstep before the first adjustable one (stance or landing foot).
    pub anchor: &'a Footstep,
    /// Adjustable footsteps at their nominal pose.
    pub upcoming: &'a [Footstep],
    pub gains: &'a Gains,
    pub weights: &'a Weights,
    pub reach: &'a ReachabilityRect,
    pub form: ConstraintForm,
    pub pinning: Pinning,
}

#[derive(Debug, Clone)]
pub struct StabQp {
    pub problem: QpProblem,
    pub layout: Layout,
}

pub fn build_qp(model: &RecursiveModel, inp: &StabInputs<'_>) -> Result<StabQp, QpError> {
    let n = model.horizon();
    if inp.upcoming.len() != n {
        return Err(QpError::Dimension("upcoming footsteps"));
    }
    if inp.support.len() < 3 || inp.support.area() <= 0.0 {
        return Err(QpError::InfeasibleGeometry);
    }
    let verts = inp.support.vertices();
    let layout = Layout {
        steps: n,
        vertices: match inp.form {
            ConstraintForm::Vertex => verts.len(),
            ConstraintForm::HalfSpace => 0,
        },
    };
    let dim = layout.dim();
    let k = inp.gains.k_xi();

    let mut h = DMatrix::zeros(dim, dim);
    let mut f = DVector::zeros(dim);
    let mut c0 = 0.0;
    for (i, step) in inp.upcoming.iter().enumerate() {
        let q = inp.weights.q_f(i);
        let j = layout.step(i);
        for a in 0..2 {
            h[(j + a, j + a)] = 2.0 * q[(a, a)];
            f[j + a] = -2.0 * q[(a, a)] * step.position[a];
            c0 += q[(a, a)] * step.position[a] * step.position[a];
        }
    }
    for a in 0..2 {
        h[(layout.delta() + a, layout.delta() + a)] = 2.0 * inp.weights.r_delta[a];
        h[(layout.eta() + a, layout.eta() + a)] = 2.0 * inp.weights.q_eta[a];
    }

    let mut eq_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    // delta + k sum Gamma_i r_i + k eta = k (xi - Phi_F xi_f - Phi_cnst)
    let free = inp.xi - model.xi_f * model.phi_f - model.phi_cnst;
    for a in 0..2 {
        let mut row = DVector::zeros(dim);
        row[layout.delta() + a] = 1.0;
        row[layout.eta() + a] = k[a];
        for (i, g) in model.gamma_steps.iter().enumerate() {
            row[layout.step(i) + a] = k[a] * g;
        }
        eq_rows.push((row, k[a] * free[a]));
    }

    let mut in_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    match inp.form {
        ConstraintForm::Vertex => {
            // delta - sum beta_c r_c = -r_cmp_r, sum beta_c = 1, beta >= 0
            for a in 0..2 {
                let mut row = DVector::zeros(dim);
                row[layout.delta() + a] = 1.0;
                for (c, v) in verts.iter().enumerate() {
                    row[layout.beta() + c] = -v[a];
                }
                eq_rows.push((row, -inp.r_cmp_r[a]));
            }
            let mut row = DVector::zeros(dim);
            for c in 0..verts.len() {
                row[layout.beta() + c] = 1.0;
            }
            eq_rows.push((row, 1.0));
            for c in 0..verts.len() {
                let mut row = DVector::zeros(dim);
                row[layout.beta() + c] = -1.0;
                in_rows.push((row, 0.0));
            }
        }
        ConstraintForm::HalfSpace => {
            for hs in inp.support.half_spaces() {
                let mut row = DVector::zeros(dim);
                row[layout.delta()] = hs.normal.x;
                row[layout.delta() + 1] = hs.normal.y;
                in_rows.push((row, hs.offset - hs.normal.dot(&inp.r_cmp_r)));
            }
        }
    }

    match inp.pinning {
        Pinning::Footsteps => {
            for (i, step) in inp.upcoming.iter().enumerate() {
                for a in 0..2 {
                    let mut row = DVector::zeros(dim);
                    row[layout.step(i) + a] = 1.0;
                    eq_rows.push((row, step.position[a]));
                }
            }
        }
        Pinning::Delta => {
            for a in 0..2 {
                let mut row = DVector::zeros(dim);
                row[layout.delta() + a] = 1.0;
                eq_rows.push((row, 0.0));
            }
        }
        Pinning::None => {}
    }

    if inp.pinning != Pinning::Footsteps {
        for (i, step) in inp.upcoming.iter().enumerate() {
            let prev = if i == 0 { inp.anchor } else { &inp.upcoming[i - 1] };
            let rt = rotation(prev.yaw).transpose();
            let s = step.side.outward_sign();
            // Rows of u = R' (r_i - r_prev): (along, lateral) with bounds.
            let bounds = [
                (rt.row(0).into_owned(), 1.0, inp.reach.forward_max),
                (rt.row(0).into_owned(), -1.0, inp.reach.backward_max),
                (rt.row(1).into_owned(), s, inp.reach.outward_max),
                (rt.row(1).into_owned(), -s, -inp.reach.inward_min),
            ];
            for (dir, sign, bound) in bounds {
                let mut row = DVector::zeros(dim);
                let mut rhs = bound;
                for a in 0..2 {
                    row[layout.step(i) + a] = sign * dir[a];
                    if i == 0 {
                        rhs += sign * dir[a] * prev.position[a];
                    } else {
                        row[layout.step(i - 1) + a] = -sign * dir[a];
                    }
                }
                in_rows.push((row, rhs));
            }
        }
    }

    let stack = |rows: &[(DVector<f64>, f64)]| {
        let a = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        (a, b)
    };
    let (a_eq, b_eq) = stack(&eq_rows);
    let (a_in, b_in) = stack(&in_rows);
    Ok(StabQp {
        problem: QpProblem::new(h, f, c0, a_eq, b_eq, a_in, b_in)?,
        layout,
    })
}

/// Solution split back into its physical parts.
#[derive(Debug, Clone, PartialEq)]
pub struct StabSolution {
    pub footsteps: Vec<Point2>,
    pub delta: Vector2<f64>,
    pub eta: Vector2<f64>,
    pub beta: Vec<f64>,
    pub raw: QpSolution,
}

impl StabQp {
    pub fn unpack(&self, raw: QpSolution) -> StabSolution {
        let l = self.layout;
        let z = &raw.z;
        StabSolution {
            footsteps: (0..l.steps)
                .map(|i| Point2::new(z[l.step(i)], z[l.step(i) + 1]))
                .collect(),
            delta: Vector2::new(z[l.delta()], z[l.delta() + 1]),
            eta: Vector2::new(z[l.eta()], z[l.eta() + 1]),
            beta: (0..l.vertices).map(|c| z[l.beta() + c]).collect(),
            raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub r_cmp_d: Point2,
    /// Rate of change of horizontal linear momentum (N).
    pub l_dot: Vector2<f64>,
    pub adjusted_steps: Vec<Point2>,
}

pub fn control_output(
    sol: &StabSolution,
    r_cmp_r: &Point2,
    state: &LipmState,
    params: &LipmParams,
) -> ControlOutput {
    let r_cmp_d = r_cmp_r + sol.delta;
    let w = params.omega0();
    ControlOutput {
        r_cmp_d,
        l_dot: (state.com_pos - r_cmp_d) * (params.mass() * w * w),
        adjusted_steps: sol.footsteps.clone(),
    }
}

//! Dense convex QP in the form
//!
//! ```text
//! min  1/2 z'Hz + f'z + c
//! s.t. A_eq z  = b_eq
//!      A_in z <= b_in
//! ```

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch in {0}")]
    Dimension(&'static str),
    #[error("support region is degenerate")]
    InfeasibleGeometry,
    #[error("no point satisfies all constraints (residual {0:e})")]
    InfeasibleProblem(f64),
    #[error("hessian is not symmetric positive semidefinite")]
    NotConvex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        constant: f64,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = linear.len();
        if hessian.shape() != (n, n) {
            return Err(QpError::Dimension("hessian"));
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(QpError::Dimension("equality rows"));
        }
        if a_in.ncols() != n || a_in.nrows() != b_in.len() {
            return Err(QpError::Dimension("inequality rows"));
        }
        Ok(Self {
            hessian,
            linear,
            constant,
            a_eq,
            b_eq,
            a_in,
            b_in,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn n_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn n_in(&self) -> usize {
        self.b_in.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z) + self.constant
    }

    pub fn is_positive_definite(&self) -> bool {
        self.hessian.clone().cholesky().is_some()
    }

    /// Largest constraint violation at `z`.
    pub fn infeasibility(&self, z: &DVector<f64>) -> f64 {
        let eq = (&self.a_eq * z - &self.b_eq).amax0();
        let ineq = (&self.a_in * z - &self.b_in)
            .iter()
            .fold(0.0, |a: f64, v| a.max(*v));
        eq.max(ineq)
    }

    /// KKT residuals for a primal/dual pair. Sign convention:
    /// `Hz + f + A_eq' lambda + A_in' mu = 0` with `mu >= 0`.
    ///
    /// Stationarity is measured relative to the largest term of the
    /// gradient sum and complementarity relative to the multiplier size,
    /// so heavily weighted slack variables do not swamp the check.
    pub fn kkt_report(&self, z: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> KktReport {
        let hz = &self.hessian * z;
        let eq = self.a_eq.transpose() * lambda;
        let ineq = self.a_in.transpose() * mu;
        let grad = &hz + &self.linear + &eq + &ineq;
        let grad_scale = 1.0 + hz.amax0().max(self.linear.amax0()).max(eq.amax0()).max(ineq.amax0());
        let slack = &self.b_in - &self.a_in * z;
        let complementarity = mu
            .iter()
            .zip(slack.iter())
            .map(|(m, s)| (m * s).abs())
            .fold(0.0, f64::max);
        KktReport {
            stationarity: grad.amax0() / grad_scale,
            primal: self.infeasibility(z),
            dual: mu.iter().map(|m| -m).fold(0.0, f64::max),
            complementarity: complementarity / (1.0 + mu.amax0()),
        }
    }
}

/// Scaled KKT residuals; see [`QpProblem::kkt_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }

    pub fn certified(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Inequality rows held as equalities at the returned point.
    pub active_set: Vec<usize>,
    /// False when the iteration limit stopped the solver early.
    pub optimal: bool,
}

impl QpSolution {
    pub fn kkt(&self, problem: &QpProblem) -> KktReport {
        problem.kkt_report(&self.z, &self.lambda, &self.mu)
    }
}

/// Largest absolute entry, zero for empty matrices.
pub(crate) trait AbsMax {
    fn amax0(&self) -> f64;
}

impl<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>> AbsMax
    for nalgebra::Matrix<f64, R, C, S>
{
    fn amax0(&self) -> f64 {
        self.iter().fold(0.0, |a, x| a.max(x.abs()))
    }
}

//! Primal active-set solver for small dense convex QPs.
//!
//! The solve starts from the equality-constrained minimizer and greedily
//! adds the most violated inequality until the point is feasible. That
//! point seeds a textbook primal active-set loop. If the greedy start
//! fails (dependent or inconsistent rows), a phase-one QP that minimizes
//! the squared constraint violation provides a feasible start instead.
//! Ties always go to the lowest row index, so runs are reproducible.

use nalgebra::{DMatrix, DVector};

use super::problem::{AbsMax, QpError, QpProblem, QpSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetOptions {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub dual_tol: f64,
}

impl Default for ActiveSetOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            feasibility_tol: 1e-10,
            dual_tol: 1e-12,
        }
    }
}

pub fn solve_active_set(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_with(problem, &ActiveSetOptions::default())
}

pub fn solve_with(problem: &QpProblem, opts: &ActiveSetOptions) -> Result<QpSolution, QpError> {
    let pd = problem.is_positive_definite();
    let mut iterations = 0;
    let start = match greedy_start(problem, pd, opts, &mut iterations) {
        Some(s) => s,
        None => {
            let z = phase_one(problem, opts, &mut iterations)?;
            (z, Vec::new())
        }
    };
    Ok(primal_loop(problem, pd, start.0, start.1, opts, iterations))
}

/// Solves `[H A'; A 0] [x; y] = [top; bottom]`, where `A` stacks the
/// equality rows and the working inequality rows.
fn solve_kkt(
    problem: &QpProblem,
    working: &[usize],
    top: &DVector<f64>,
    bottom: &DVector<f64>,
    pd: bool,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.dim();
    let m_eq = problem.n_eq();
    let m = m_eq + working.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&problem.hessian);
    for r in 0..m {
        let row = if r < m_eq {
            problem.a_eq.row(r)
        } else {
            problem.a_in.row(working[r - m_eq])
        };
        for c in 0..n {
            k[(n + r, c)] = row[c];
            k[(c, n + r)] = row[c];
        }
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(top);
    rhs.rows_mut(n, m).copy_from(bottom);

    let accept = |sol: &DVector<f64>| {
        let scale = 1.0 + rhs.amax0() + k.amax0() * sol.amax0();
        (&k * sol - &rhs).amax0() <= 1e-9 * scale
    };
    let mut sol = None;
    if pd {
        let lu = k.clone().lu();
        sol = lu.solve(&rhs).map(|mut x| {
            if let Some(dx) = lu.solve(&(&rhs - &k * &x)) {
                x += dx;
            }
            x
        });
        sol = sol.filter(|s| accept(s));
    }
    if sol.is_none() {
        // Symmetric diagonal scaling keeps the large slack weights from
        // swamping the small but genuine singular values.
        let d = DVector::from_fn(n + m, |i, _| {
            let r = k.row(i).amax0();
            if r > 0.0 {
                1.0 / r.sqrt()
            } else {
                1.0
            }
        });
        let ks = DMatrix::from_fn(n + m, n + m, |i, j| d[i] * k[(i, j)] * d[j]);
        let svd = ks.svd(true, true);
        let eps = svd.singular_values.max() * 1e-13;
        let solve = |b: &DVector<f64>| {
            svd.solve(&b.component_mul(&d), eps)
                .ok()
                .map(|y| y.component_mul(&d))
        };
        sol = solve(&rhs).map(|mut x| {
            // Two rounds of iterative refinement recover the digits lost
            // to the scale spread between the cost weights.
            for _ in 0..2 {
                if let Some(dx) = solve(&(&rhs - &k * &x)) {
                    x += dx;
                }
            }
            x
        });
        sol = sol.filter(|s| accept(s));
    }
    sol.map(|s| (s.rows(0, n).into_owned(), s.rows(n, m).into_owned()))
}

/// Equality-constrained minimizer plus greedily added violated rows.
/// Returns `None` when the greedy process breaks down.
fn greedy_start(
    problem: &QpProblem,
    pd: bool,
    opts: &ActiveSetOptions,
    iterations: &mut usize,
) -> Option<(DVector<f64>, Vec<usize>)> {
    let mut working: Vec<usize> = Vec::new();
    let top = -&problem.linear;
    loop {
        let mut bottom = DVector::zeros(problem.n_eq() + working.len());
        bottom.rows_mut(0, problem.n_eq()).copy_from(&problem.b_eq);
        for (j, &i) in working.iter().enumerate() {
            bottom[problem.n_eq() + j] = problem.b_in[i];
        }
        let (z, _) = solve_kkt(problem, &working, &top, &bottom, pd)?;
        if (&problem.a_eq * &z - &problem.b_eq).amax0() > opts.feasibility_tol * (1.0 + problem.b_eq.amax0()) {
            return None;
        }
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..problem.n_in() {
            if working.contains(&i) {
                continue;
            }
            let v = problem.a_in.row(i).dot(&z.transpose()) - problem.b_in[i];
            let tol = opts.feasibility_tol * (1.0 + problem.b_in[i].abs());
            if v > tol && worst.map_or(true, |(_, w)| v > w) {
                worst = Some((i, v));
            }
        }
        match worst {
            None => return Some((z, working)),
            Some((i, _)) => {
                if *iterations >= opts.max_iterations || !independent(problem, &working, i) {
                    return None;
                }
                *iterations += 1;
                working.push(i);
            }
        }
    }
}

/// Whether inequality row `i` is linearly independent of the equality rows
/// and the working rows.
fn independent(problem: &QpProblem, working: &[usize], i: usize) -> bool {
    let m_eq = problem.n_eq();
    let rows = m_eq + working.len() + 1;
    let a = DMatrix::from_fn(rows, problem.dim(), |r, c| {
        let row = if r < m_eq {
            problem.a_eq.row(r)
        } else if r < rows - 1 {
            problem.a_in.row(working[r - m_eq])
        } else {
            problem.a_in.row(i)
        };
        row[c] / row.norm()
    });
    let sv = a.singular_values();
    sv.min() > 1e-10 * sv.max()
}

/// Finds a feasible point by minimizing `1/2 |s|^2` subject to
/// `A_eq z = b_eq`, `A_in z - s <= b_in`, `s >= 0`.
fn phase_one(
    problem: &QpProblem,
    opts: &ActiveSetOptions,
    iterations: &mut usize,
) -> Result<DVector<f64>, QpError> {
    let n = problem.dim();
    let m = problem.n_in();
    let z0 = if problem.n_eq() == 0 {
        DVector::zeros(n)
    } else {
        let svd = problem.a_eq.clone().svd(true, true);
        let eps = svd.singular_values.max() * 1e-12;
        svd.solve(&problem.b_eq, eps)
            .map_err(|_| QpError::InfeasibleProblem(f64::INFINITY))?
    };
    let eq_res = (&problem.a_eq * &z0 - &problem.b_eq).amax0();
    if problem.n_eq() > 0 && eq_res > 1e-9 * (1.0 + problem.b_eq.amax0()) {
        return Err(QpError::InfeasibleProblem(eq_res));
    }
    if m == 0 {
        return Ok(z0);
    }
    let mut h = DMatrix::zeros(n + m, n + m);
    for i in 0..m {
        h[(n + i, n + i)] = 1.0;
    }
    let mut a_eq = DMatrix::zeros(problem.n_eq(), n + m);
    a_eq.view_mut((0, 0), (problem.n_eq(), n)).copy_from(&problem.a_eq);
    let mut a_in = DMatrix::zeros(2 * m, n + m);
    let mut b_in = DVector::zeros(2 * m);
    a_in.view_mut((0, 0), (m, n)).copy_from(&problem.a_in);
    for i in 0..m {
        a_in[(i, n + i)] = -1.0;
        a_in[(m + i, n + i)] = -1.0;
        b_in[i] = problem.b_in[i];
    }
    let aux = QpProblem::new(
        h,
        DVector::zeros(n + m),
        0.0,
        a_eq,
        problem.b_eq.clone(),
        a_in,
        b_in,
    )?;
    let slack = (&problem.a_in * &z0 - &problem.b_in).map(|v| v.max(0.0));
    let mut start = DVector::zeros(n + m);
    start.rows_mut(0, n).copy_from(&z0);
    start.rows_mut(n, m).copy_from(&slack);
    let aux_opts = ActiveSetOptions {
        max_iterations: opts.max_iterations.max(4 * (n + 2 * m)),
        ..*opts
    };
    let sol = primal_loop(&aux, false, start, Vec::new(), &aux_opts, 0);
    *iterations += sol.iterations;
    let z = sol.z.rows(0, n).into_owned();
    let viol = problem.infeasibility(&z);
    if viol > 1e-9 * (1.0 + problem.b_in.amax0().max(problem.b_eq.amax0())) {
        return Err(QpError::InfeasibleProblem(viol));
    }
    Ok(z)
}

fn primal_loop(
    problem: &QpProblem,
    pd: bool,
    mut z: DVector<f64>,
    mut working: Vec<usize>,
    opts: &ActiveSetOptions,
    mut iterations: usize,
) -> QpSolution {
    let n = problem.dim();
    let m_eq = problem.n_eq();
    let finish = |z: DVector<f64>, working: Vec<usize>, lam: DVector<f64>, iterations, optimal| {
        let mut mu = DVector::zeros(problem.n_in());
        for (j, &i) in working.iter().enumerate() {
            mu[i] = lam[m_eq + j];
        }
        let lambda = lam.rows(0, m_eq).into_owned();
        let objective = problem.objective(&z);
        let mut active_set = working;
        active_set.sort_unstable();
        QpSolution {
            z,
            lambda,
            mu,
            objective,
            iterations,
            active_set,
            optimal,
        }
    };
    let mut degenerate = false;
    loop {
        let g = &problem.hessian * &z + &problem.linear;
        let bottom = DVector::zeros(m_eq + working.len());
        let Some((p, lam)) = solve_kkt(problem, &working, &(-&g), &bottom, pd) else {
            let lam = DVector::zeros(m_eq + working.len());
            return finish(z, working, lam, iterations, false);
        };
        // A step with no predicted decrease only slides along a flat
        // direction of a semidefinite Hessian; treat it like p = 0.
        let decrease = -(g.dot(&p) + 0.5 * p.dot(&(&problem.hessian * &p)));
        let flat = decrease <= 1e-15 * (1.0 + problem.objective(&z).abs());
        if p.amax0() <= 1e-11 * (1.0 + z.amax0()) || flat {
            // Most negative multiplier, or the lowest row index right after
            // a zero-length step so degenerate vertices cannot cycle.
            let mut drop: Option<(usize, f64)> = None;
            for j in 0..working.len() {
                let v = lam[m_eq + j];
                if v >= -opts.dual_tol {
                    continue;
                }
                let better = match drop {
                    None => true,
                    Some((b, _)) if degenerate => working[j] < working[b],
                    Some((_, best)) => v < best,
                };
                if better {
                    drop = Some((j, v));
                }
            }
            match drop {
                None => return finish(z, working, lam, iterations, true),
                Some((j, _)) => {
                    if iterations >= opts.max_iterations {
                        return finish(z, working, lam, iterations, false);
                    }
                    iterations += 1;
                    working.remove(j);
                }
            }
            continue;
        }
        if iterations >= opts.max_iterations {
            return finish(z, working, lam, iterations, false);
        }
        iterations += 1;
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..problem.n_in() {
            if working.contains(&i) {
                continue;
            }
            let row = problem.a_in.row(i);
            let ap = row.dot(&p.transpose());
            if ap <= 1e-12 * row.norm() * p.norm() {
                continue;
            }
            let gap = (problem.b_in[i] - row.dot(&z.transpose())).max(0.0);
            let a = gap / ap;
            if a < alpha {
                alpha = a;
                blocking = Some(i);
            }
        }
        degenerate = blocking.is_some() && alpha * p.amax0() <= 1e-11 * (1.0 + z.amax0());
        z += &p * alpha;
        debug_assert_eq!(z.len(), n);
        if let Some(i) = blocking {
            working.push(i);
        }
    }
}

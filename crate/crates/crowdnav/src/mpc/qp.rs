//! Dense primal active-set solver for the controller's slack-softened QPs.
//!
//! Problem shape:
//!
//! ```text
//!   minimize  1/2 u'H u + g'u + sum_j (w s_j + 1/2 delta s_j^2)
//!   s.t.      a_j'u + s_j >= b_j   (soft rows, one slack each)
//!             s_j >= 0
//!             c_k'u >= d_k         (hard rows)
//! ```
//!
//! H must be positive definite. A feasible start is always available: any
//! hard-feasible u with slacks lifted to cover the soft rows. The linear
//! slack penalty is exact, so satisfiable soft rows end with slack exactly
//! zero at the optimum.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("quadratic term is not positive definite")]
    NotPositiveDefinite,
    #[error("starting point violates a hard constraint by {0}")]
    InfeasibleStart(f64),
}

#[derive(Debug, Clone)]
pub struct SoftRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct HardRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub nu: usize,
    /// Row-major nu x nu positive definite matrix.
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub slack_weight: f64,
    pub slack_reg: f64,
    pub soft: Vec<SoftRow>,
    pub hard: Vec<HardRow>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub slacks: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// In-place lower Cholesky factorization; `a` is row-major n x n.
fn cholesky(n: usize, a: &mut [f64]) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

fn chol_solve(n: usize, l: &[f64], b: &[f64], out: &mut [f64]) {
    // L y = b
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * out[k];
        }
        out[i] = sum / l[i * n + i];
    }
    // L' x = y
    for i in (0..n).rev() {
        let mut sum = out[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * out[k];
        }
        out[i] = sum / l[i * n + i];
    }
}

struct Row {
    coeffs: Vec<f64>,
    rhs: f64,
}

pub fn solve_qp(problem: &QpProblem, u0: &[f64]) -> Result<QpSolution, QpError> {
    let nu = problem.nu;
    let ns = problem.soft.len();
    let n = nu + ns;
    debug_assert_eq!(u0.len(), nu);

    // Factor H once; P = blockdiag(H, delta I).
    let mut h_factor = problem.h.clone();
    if !cholesky(nu, &mut h_factor) {
        return Err(QpError::NotPositiveDefinite);
    }
    let delta = problem.slack_reg.max(1e-12);

    let apply_pinv = |v: &[f64], out: &mut Vec<f64>| {
        out.resize(n, 0.0);
        chol_solve(nu, &h_factor, &v[..nu], &mut out[..nu]);
        for j in 0..ns {
            out[nu + j] = v[nu + j] / delta;
        }
    };

    // Assemble constraint rows over z = [u; s].
    let mut rows: Vec<Row> = Vec::with_capacity(2 * ns + problem.hard.len());
    for (j, soft) in problem.soft.iter().enumerate() {
        let mut coeffs = vec![0.0; n];
        coeffs[..nu].copy_from_slice(&soft.coeffs);
        coeffs[nu + j] = 1.0;
        rows.push(Row { coeffs, rhs: soft.rhs, kind: RowKind::Soft });
    }
    for j in 0..ns {
        let mut coeffs = vec![0.0; n];
        coeffs[nu + j] = 1.0;
        rows.push(Row { coeffs, rhs: 0.0, kind: RowKind::SlackNonneg });
    }
    for hard in &problem.hard {
        let mut coeffs = vec![0.0; n];
        coeffs[..nu].copy_from_slice(&hard.coeffs);
        rows.push(Row { coeffs, rhs: hard.rhs, kind: RowKind::Hard });
    }

    // Feasible start: caller-provided u, slacks lifted to cover soft rows.
    let mut z = vec![0.0; n];
    z[..nu].copy_from_slice(u0);
    for (k, row) in rows.iter().enumerate().skip(2 * ns) {
        let margin = dot(&row.coeffs[..nu], u0) - row.rhs;
        if margin < -1e-9 {
            return Err(QpError::InfeasibleStart(-margin));
        }
        let _ = k;
    }
    for (j, soft) in problem.soft.iter().enumerate() {
        let lhs = dot(&soft.coeffs, u0);
        z[nu + j] = (soft.rhs - lhs).max(0.0);
    }

    // Gradient of the objective at z.
    let grad = |z: &[f64], out: &mut Vec<f64>| {
        out.resize(n, 0.0);
        for r in 0..nu {
            let mut acc = problem.g[r];
            for c in 0..nu {
                acc += problem.h[r * nu + c] * z[c];
            }
            out[r] = acc;
        }
        for j in 0..ns {
            out[nu + j] = problem.slack_weight + delta * z[nu + j];
        }
    };

    // Working set starts with the active slack bounds.
    let mut working: Vec<usize> = (0..ns)
        .filter(|j| z[nu + j] <= 1e-12)
        .map(|j| ns + j)
        .collect();
    for j in 0..ns {
        if z[nu + j] <= 1e-12 {
            z[nu + j] = 0.0;
        }
    }

    let mut y_cache: Vec<Option<Vec<f64>>> = vec![None; rows.len()];
    let mut gradient = Vec::new();
    let mut rhs_neg = vec![0.0; n];
    let mut y0 = Vec::new();
    let max_iter = 100 + 4 * (n + rows.len());
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        grad(&z, &mut gradient);
        for i in 0..n {
            rhs_neg[i] = -gradient[i];
        }
        apply_pinv(&rhs_neg, &mut y0);

        // Schur system over the working set.
        let m = working.len();
        let mut lambda = vec![0.0; m];
        let mut p = vec![0.0; n];
        if m == 0 {
            p.copy_from_slice(&y0);
        } else {
            for &r in &working {
                if y_cache[r].is_none() {
                    let mut y = Vec::new();
                    apply_pinv(&rows[r].coeffs, &mut y);
                    y_cache[r] = Some(y);
                }
            }
            let mut s = vec![0.0; m * m];
            for (a, &ra) in working.iter().enumerate() {
                let ya = y_cache[ra].as_ref().expect("cached");
                for (b, &rb) in working.iter().enumerate().skip(a) {
                    let v = dot(&rows[rb].coeffs, ya);
                    s[a * m + b] = v;
                    s[b * m + a] = v;
                }
            }
            // Tiny jitter guards rank-deficient working sets.
            let jitter = 1e-12 * (1.0 + s.iter().step_by(m + 1).sum::<f64>().abs() / m as f64);
            for i in 0..m {
                s[i * m + i] += jitter;
            }
            let mut s_factor = s;
            if !cholesky(m, &mut s_factor) {
                // Dependent rows: drop the most recently added and retry.
                working.pop();
                continue;
            }
            let mut rhs = vec![0.0; m];
            for (a, &ra) in working.iter().enumerate() {
                let row = &rows[ra];
                rhs[a] = (row.rhs - dot(&row.coeffs, &z)) - dot(&row.coeffs, &y0);
            }
            chol_solve(m, &s_factor, &rhs, &mut lambda);
            p.copy_from_slice(&y0);
            for (a, &ra) in working.iter().enumerate() {
                let ya = y_cache[ra].as_ref().expect("cached");
                for i in 0..n {
                    p[i] += lambda[a] * ya[i];
                }
            }
        }

        let step_norm = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if step_norm < 1e-10 {
            // Stationary on the working set; check multipliers.
            let mut drop_idx = None;
            let mut most_negative = -1e-9;
            for (a, &ra) in working.iter().enumerate() {
                let _ = ra;
                if lambda[a] < most_negative {
                    most_negative = lambda[a];
                    drop_idx = Some(a);
                }
            }
            match drop_idx {
                Some(a) => {
                    working.remove(a);
                }
                None => {
                    converged = true;
                    break;
                }
            }
            continue;
        }

        // Ratio test against rows outside the working set.
        let mut alpha = 1.0f64;
        let mut blocking = None;
        for (r, row) in rows.iter().enumerate() {
            if working.contains(&r) {
                continue;
            }
            let dir = dot(&row.coeffs, &p);
            if dir < -1e-12 {
                let slackness = dot(&row.coeffs, &z) - row.rhs;
                let limit = -slackness / dir;
                if limit < alpha {
                    alpha = limit.max(0.0);
                    blocking = Some(r);
                }
            }
        }
        for i in 0..n {
            z[i] += alpha * p[i];
        }
        if let Some(r) = blocking {
            working.push(r);
        }
    }

    let u = z[..nu].to_vec();
    let slacks: Vec<f64> = (0..ns).map(|j| z[nu + j].max(0.0)).collect();
    let _ = RowKind::Soft;
    Ok(QpSolution { u, slacks, iterations, converged })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_minimum() {
        // min 1/2 u'Iu - [1,2]'u  -> u = [1, 2].
        let p = QpProblem {
            nu: 2,
            h: vec![1.0, 0.0, 0.0, 1.0],
            g: vec![-1.0, -2.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![],
            hard: vec![],
        };
        let sol = solve_qp(&p, &[0.0, 0.0]).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.u[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.u[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn hard_constraint_binds() {
        // min 1/2 (u0^2 + u1^2) s.t. u0 + u1 >= 2 -> u = [1, 1].
        let p = QpProblem {
            nu: 2,
            h: vec![1.0, 0.0, 0.0, 1.0],
            g: vec![0.0, 0.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![],
            hard: vec![HardRow { coeffs: vec![1.0, 1.0], rhs: 2.0 }],
        };
        let sol = solve_qp(&p, &[2.0, 2.0]).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.u[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.u[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn satisfiable_soft_row_ends_with_zero_slack() {
        // Soft row u0 >= 1 pulls the unconstrained optimum at the origin.
        let p = QpProblem {
            nu: 1,
            h: vec![1.0],
            g: vec![0.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![SoftRow { coeffs: vec![1.0], rhs: 1.0 }],
            hard: vec![],
        };
        let sol = solve_qp(&p, &[0.0]).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.u[0], 1.0, epsilon = 1e-8);
        assert!(sol.slacks[0] <= 1e-10, "slack {} should vanish", sol.slacks[0]);
    }

    #[test]
    fn unsatisfiable_soft_rows_spill_into_slack() {
        // u <= 0 (hard, as -u >= 0) fights the soft row u >= 1.
        let p = QpProblem {
            nu: 1,
            h: vec![1.0],
            g: vec![0.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![SoftRow { coeffs: vec![1.0], rhs: 1.0 }],
            hard: vec![HardRow { coeffs: vec![-1.0], rhs: 0.0 }],
        };
        let sol = solve_qp(&p, &[0.0]).unwrap();
        assert!(sol.converged);
        assert!(sol.u[0] <= 1e-9);
        assert_abs_diff_eq!(sol.slacks[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn box_constrained_projection() {
        // min 1/2|u - (3,4)|^2 s.t. |u_i| <= 1 -> u = (1, 1).
        let p = QpProblem {
            nu: 2,
            h: vec![1.0, 0.0, 0.0, 1.0],
            g: vec![-3.0, -4.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![],
            hard: vec![
                HardRow { coeffs: vec![-1.0, 0.0], rhs: -1.0 },
                HardRow { coeffs: vec![1.0, 0.0], rhs: -1.0 },
                HardRow { coeffs: vec![0.0, -1.0], rhs: -1.0 },
                HardRow { coeffs: vec![0.0, 1.0], rhs: -1.0 },
            ],
        };
        let sol = solve_qp(&p, &[0.0, 0.0]).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.u[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.u[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_hard_start_is_detected() {
        let p = QpProblem {
            nu: 1,
            h: vec![1.0],
            g: vec![0.0],
            slack_weight: 1e4,
            slack_reg: 1e-8,
            soft: vec![],
            hard: vec![HardRow { coeffs: vec![1.0], rhs: 5.0 }],
        };
        assert!(matches!(solve_qp(&p, &[0.0]), Err(QpError::InfeasibleStart(_))));
    }

    #[test]
    fn random_problems_satisfy_kkt() {
        use rand::Rng;
        let mut rng = crate::seeds::rng(31, "qp-kkt", 0);
        for _ in 0..50 {
            let nu = 4;
            // PD matrix: A'A + I.
            let a: Vec<f64> = (0..nu * nu).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut h = vec![0.0; nu * nu];
            for i in 0..nu {
                for j in 0..nu {
                    let mut acc = if i == j { 1.0 } else { 0.0 };
                    for k in 0..nu {
                        acc += a[k * nu + i] * a[k * nu + j];
                    }
                    h[i * nu + j] = acc;
                }
            }
            let g: Vec<f64> = (0..nu).map(|_| rng.random_range(-2.0..2.0)).collect();
            let soft: Vec<SoftRow> = (0..3)
                .map(|_| SoftRow {
                    coeffs: (0..nu).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rhs: rng.random_range(-1.0..1.0),
                })
                .collect();
            let hard: Vec<HardRow> = (0..nu)
                .flat_map(|i| {
                    let mut lo = vec![0.0; nu];
                    lo[i] = 1.0;
                    let mut hi = vec![0.0; nu];
                    hi[i] = -1.0;
                    [HardRow { coeffs: lo, rhs: -3.0 }, HardRow { coeffs: hi, rhs: -3.0 }]
                })
                .collect();
            let p = QpProblem {
                nu,
                h,
                g,
                slack_weight: 1e4,
                slack_reg: 1e-8,
                soft,
                hard,
            };
            let sol = solve_qp(&p, &vec![0.0; nu]).unwrap();
            assert!(sol.converged, "did not converge");
            // Feasibility of every row at the solution.
            for row in &p.hard {
                let v: f64 = row.coeffs.iter().zip(&sol.u).map(|(a, b)| a * b).sum();
                assert!(v >= row.rhs - 1e-8);
            }
            for (j, row) in p.soft.iter().enumerate() {
                let v: f64 = row.coeffs.iter().zip(&sol.u).map(|(a, b)| a * b).sum();
                assert!(v + sol.slacks[j] >= row.rhs - 1e-8);
                assert!(sol.slacks[j] >= -1e-12);
            }
        }
    }
}

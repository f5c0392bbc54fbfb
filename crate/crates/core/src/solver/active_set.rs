//! Goldfarb-Idnani dual active-set method for strictly convex QPs
//!
//! ```text
//!     minimize    1/2 x' G x + g' x
//!     subject to  n_k' x >= b_k   (inequalities)
//!                 n_k' x  = b_k   (equalities)
//! ```
//!
//! with `G` positive definite. The method starts from the unconstrained
//! minimizer and adds violated constraints one at a time while keeping dual
//! feasibility, maintaining `J = L^{-T} Q` and the triangular factor `R` of
//! the active normals through Givens rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub normal: Vec<f64>,
    pub rhs: f64,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone)]
pub struct StrictQpSolution {
    pub x: Vec<f64>,
    /// One multiplier per constraint: `G x + g = sum_k lambda_k n_k`, with
    /// `lambda_k >= 0` for inequalities.
    pub multipliers: Vec<f64>,
}

struct ActiveEntry {
    constraint: usize,
    /// +1 or -1: the orientation the constraint entered with.
    sign: f64,
    equality: bool,
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0, a);
    }
    let r = a.hypot(b);
    (a / r, b / r, r)
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, k: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let (a, b) = (m[(row, i)], m[(row, k)]);
        m[(row, i)] = c * a + s * b;
        m[(row, k)] = -s * a + c * b;
    }
}

/// Solves the QP; `Ok(None)` means the constraints are inconsistent.
pub fn solve_strict_qp(
    g_mat: &DMatrix<f64>,
    g_lin: &[f64],
    constraints: &[LinearConstraint],
) -> Result<Option<StrictQpSolution>> {
    let n = g_lin.len();
    let chol = g_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("quadratic term is not positive definite".to_string()))?;
    let lt = chol.l().transpose();
    let mut j_mat = lt
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".to_string()))?;
    let mut x = -chol.solve(&DVector::from_column_slice(g_lin));

    let normals: Vec<DVector<f64>> = constraints
        .iter()
        .map(|c| DVector::from_column_slice(&c.normal))
        .collect();
    let norms: Vec<f64> = normals.iter().map(|v| v.norm().max(1e-300)).collect();

    let mut r_mat = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<ActiveEntry> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iter = 20 * (n + constraints.len()) + 200;
    let mut iterations = 0;

    loop {
        // Most violated constraint, measured as a distance.
        let xscale = 1.0 + x.amax();
        let mut pick: Option<(usize, f64, f64)> = None; // (k, sign, violation)
        for (k, con) in constraints.iter().enumerate() {
            if active.iter().any(|a| a.constraint == k) {
                continue;
            }
            let s = normals[k].dot(&x) - con.rhs;
            let tol = 1e-11 * (xscale + con.rhs.abs() / norms[k]);
            let (sign, viol) = if s < 0.0 {
                (1.0, -s / norms[k])
            } else if con.kind == ConstraintKind::Eq && s > 0.0 {
                (-1.0, s / norms[k])
            } else {
                continue;
            };
            if viol > tol && pick.is_none_or(|p| viol > p.2) {
                pick = Some((k, sign, viol));
            }
        }
        let Some((p, sign, _)) = pick else {
            break;
        };
        let np = &normals[p] * sign;
        let bp = constraints[p].rhs * sign;
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::IterationLimit("dual active-set QP"));
            }
            let q = active.len();
            let d = j_mat.transpose() * &np;
            let mut z = DVector::<f64>::zeros(n);
            for col in q..n {
                z.axpy(d[col], &j_mat.column(col), 1.0);
            }
            // r = R^{-1} d_1
            let mut r = vec![0.0; q];
            for i in (0..q).rev() {
                let mut acc = d[i];
                for k in i + 1..q {
                    acc -= r_mat[(i, k)] * r[k];
                }
                r[i] = acc / r_mat[(i, i)];
            }
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, entry) in active.iter().enumerate() {
                if !entry.equality && r[k] > 0.0 {
                    let ratio = u[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            let ztn = z.dot(&np);
            let t2 = if z.norm() <= 1e-10 * (1.0 + d.norm()) || ztn <= 0.0 {
                f64::INFINITY
            } else {
                (bp - np.dot(&x)) / ztn
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Ok(None);
            }
            let step = t1.min(t2);
            if t2.is_finite() {
                x.axpy(step, &z, 1.0);
            }
            for (uk, rk) in u.iter_mut().zip(&r) {
                *uk -= step * rk;
            }
            u_p += step;

            if t2 <= t1 {
                // Full step: add p to the active set.
                let mut d = d;
                for col in (q + 1..n).rev() {
                    let (c, s, rr) = givens(d[col - 1], d[col]);
                    if s != 0.0 {
                        rotate_columns(&mut j_mat, col - 1, col, c, s);
                    }
                    d[col - 1] = rr;
                    d[col] = 0.0;
                }
                for i in 0..=q {
                    r_mat[(i, q)] = d[i];
                }
                active.push(ActiveEntry {
                    constraint: p,
                    sign,
                    equality: constraints[p].kind == ConstraintKind::Eq,
                });
                u.push(u_p);
                break;
            }

            // Partial step: drop the blocking constraint and retry.
            let k = drop_at.expect("finite t1 has a blocking constraint");
            active.remove(k);
            u.remove(k);
            for col in k..q - 1 {
                for row in 0..=col + 1 {
                    r_mat[(row, col)] = r_mat[(row, col + 1)];
                }
            }
            for row in 0..n {
                r_mat[(row, q - 1)] = 0.0;
            }
            for col in k..q - 1 {
                let (c, s, rr) = givens(r_mat[(col, col)], r_mat[(col + 1, col)]);
                if s != 0.0 {
                    for cc in col + 1..q - 1 {
                        let (a, b) = (r_mat[(col, cc)], r_mat[(col + 1, cc)]);
                        r_mat[(col, cc)] = c * a + s * b;
                        r_mat[(col + 1, cc)] = -s * a + c * b;
                    }
                    rotate_columns(&mut j_mat, col, col + 1, c, s);
                }
                r_mat[(col, col)] = rr;
                r_mat[(col + 1, col)] = 0.0;
            }
        }
    }

    let mut multipliers = vec![0.0; constraints.len()];
    for (entry, &uk) in active.iter().zip(&u) {
        multipliers[entry.constraint] = entry.sign * uk;
    }
    Ok(Some(StrictQpSolution {
        x: x.iter().copied().collect(),
        multipliers,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ge(normal: &[f64], rhs: f64) -> LinearConstraint {
        LinearConstraint {
            normal: normal.to_vec(),
            rhs,
            kind: ConstraintKind::Ge,
        }
    }

    fn eq(normal: &[f64], rhs: f64) -> LinearConstraint {
        LinearConstraint {
            normal: normal.to_vec(),
            rhs,
            kind: ConstraintKind::Eq,
        }
    }

    fn check_kkt(g: &DMatrix<f64>, lin: &[f64], cons: &[LinearConstraint], sol: &StrictQpSolution) {
        let x = DVector::from_column_slice(&sol.x);
        let mut grad = g * &x + DVector::from_column_slice(lin);
        for (c, &l) in cons.iter().zip(&sol.multipliers) {
            grad.axpy(-l, &DVector::from_column_slice(&c.normal), 1.0);
            let s = DVector::from_column_slice(&c.normal).dot(&x) - c.rhs;
            match c.kind {
                ConstraintKind::Ge => {
                    assert!(s > -1e-10, "violated: {s}");
                    assert!(l >= -1e-12);
                    assert!((l * s).abs() < 1e-10);
                }
                ConstraintKind::Eq => assert!(s.abs() < 1e-10),
            }
        }
        assert!(grad.amax() < 1e-10, "stationarity {}", grad.amax());
    }

    #[test]
    fn quadprog_reference_problem() {
        // min 1/2 x'x - (0, 5, 0)'x  s.t.  A' x >= b from the classic quadprog example.
        let g = DMatrix::identity(3, 3);
        let lin = [0.0, -5.0, 0.0];
        let cons = vec![
            ge(&[-4.0, -3.0, 0.0], -8.0),
            ge(&[2.0, 1.0, 0.0], 2.0),
            ge(&[0.0, -2.0, 1.0], 0.0),
        ];
        let sol = solve_strict_qp(&g, &lin, &cons).unwrap().unwrap();
        let expect = [0.476_190_476_190_476_2, 1.047_619_047_619_047_6, 2.095_238_095_238_095_2];
        for (a, b) in sol.x.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        check_kkt(&g, &lin, &cons, &sol);
    }

    #[test]
    fn equality_and_dependent_rows() {
        let g = DMatrix::identity(2, 2);
        let cons = vec![
            eq(&[1.0, -1.0], 0.0),
            eq(&[-1.0, 1.0], 0.0),
            ge(&[1.0, 1.0], 2.0),
            ge(&[2.0, 2.0], 4.0),
        ];
        let sol = solve_strict_qp(&g, &[0.0, 0.0], &cons).unwrap().unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        check_kkt(&g, &[0.0, 0.0], &cons, &sol);
    }

    #[test]
    fn inconsistent_constraints() {
        let g = DMatrix::identity(1, 1);
        let cons = vec![ge(&[1.0], 1.0), ge(&[-1.0], 1.0)];
        assert!(solve_strict_qp(&g, &[0.0], &cons).unwrap().is_none());
    }

    #[test]
    fn equality_pulled_both_ways() {
        // min 1/2 |x|^2 + (3, -1)'x s.t. x0 + x1 = 1, x0 >= 0
        let g = DMatrix::identity(2, 2);
        let lin = [3.0, -1.0];
        let cons = vec![eq(&[1.0, 1.0], 1.0), ge(&[1.0, 0.0], 0.0)];
        let sol = solve_strict_qp(&g, &lin, &cons).unwrap().unwrap();
        assert!((sol.x[0]).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        check_kkt(&g, &lin, &cons, &sol);
    }
}

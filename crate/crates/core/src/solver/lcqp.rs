//! Convex LCQP driver.
//!
//! 1. Phase-1 simplex decides feasibility.
//! 2. An LP over the recession cone restricted to the null space of `Q`
//!    decides unboundedness.
//! 3. The optimum is found with the dual active-set method, directly when
//!    `Q` is positive definite and through proximal-point iterations
//!    otherwise.
//! 4. When `Q` is singular the optimal set `{x in X : Qx = Qx*, c'x = c'x*}`
//!    is searched for its point of smallest Euclidean norm.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::active_set::{solve_strict_qp, ConstraintKind, LinearConstraint, StrictQpSolution};
use super::lp::{solve_lp, LinearProgram, LpOutcome};
use crate::error::{Error, Result};
use crate::instance::{dot, LcqpInstance, Sense};

pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;
pub const KKT_TOLERANCE: f64 = 1e-6;

/// Relative eigenvalue cut separating the range of `Q` from its null space.
const RANK_TOLERANCE: f64 = 1e-9;
const PROX_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Infeasible,
    Unbounded,
    Optimal,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Infeasible => "INFEASIBLE",
            Status::Unbounded => "UNBOUNDED",
            Status::Optimal => "OPTIMAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: Status,
    pub value: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    pub kkt_residual: f64,
    /// Recession direction for unbounded problems.
    pub certificate: Option<Vec<f64>>,
}

impl SolveResult {
    pub fn infeasible() -> Self {
        Self {
            status: Status::Infeasible,
            value: None,
            x_star: None,
            kkt_residual: 0.0,
            certificate: None,
        }
    }

    pub fn unbounded(direction: Option<Vec<f64>>) -> Self {
        Self {
            status: Status::Unbounded,
            value: None,
            x_star: None,
            kkt_residual: 0.0,
            certificate: direction,
        }
    }
}

/// Every row and finite bound as `n'x >= b` or `n'x = b`.
pub(crate) fn standard_constraints(inst: &LcqpInstance) -> Vec<LinearConstraint> {
    let n = inst.n();
    let mut rows = vec![vec![0.0; n]; inst.m()];
    for &(i, j, v) in inst.a.entries() {
        rows[i][j] = v;
    }
    let mut out = Vec::new();
    for ((normal, &sense), &rhs) in rows.into_iter().zip(&inst.senses).zip(&inst.b) {
        if normal.iter().all(|&v| v == 0.0) {
            // Feasibility of an empty row does not depend on x.
            continue;
        }
        out.push(match sense {
            Sense::Ge => LinearConstraint { normal, rhs, kind: ConstraintKind::Ge },
            Sense::Eq => LinearConstraint { normal, rhs, kind: ConstraintKind::Eq },
            Sense::Le => LinearConstraint {
                normal: normal.iter().map(|v| -v).collect(),
                rhs: -rhs,
                kind: ConstraintKind::Ge,
            },
        });
    }
    for j in 0..n {
        let unit = |s: f64| {
            let mut e = vec![0.0; n];
            e[j] = s;
            e
        };
        let (l, u) = (inst.lower[j], inst.upper[j]);
        if l == u {
            out.push(LinearConstraint { normal: unit(1.0), rhs: l, kind: ConstraintKind::Eq });
            continue;
        }
        if l.is_finite() {
            out.push(LinearConstraint { normal: unit(1.0), rhs: l, kind: ConstraintKind::Ge });
        }
        if u.is_finite() {
            out.push(LinearConstraint { normal: unit(-1.0), rhs: -u, kind: ConstraintKind::Ge });
        }
    }
    out
}

/// Largest of stationarity, primal violation, dual sign and complementarity
/// errors for `(x, lambda)`.
pub(crate) fn kkt_residual(
    inst: &LcqpInstance,
    constraints: &[LinearConstraint],
    x: &[f64],
    multipliers: &[f64],
) -> f64 {
    let mut grad = inst.q.mul_vec(x);
    for (g, c) in grad.iter_mut().zip(&inst.c) {
        *g += c;
    }
    let mut worst = inst.max_violation(x);
    for (con, &lambda) in constraints.iter().zip(multipliers) {
        for (g, a) in grad.iter_mut().zip(&con.normal) {
            *g -= lambda * a;
        }
        let slack = dot(&con.normal, x) - con.rhs;
        if con.kind == ConstraintKind::Ge {
            worst = worst.max(-lambda).max((lambda * slack).abs());
        }
    }
    grad.iter().fold(worst, |acc, g| acc.max(g.abs()))
}

struct Spectrum {
    /// Orthonormal basis of the range of `Q`, one vector per column.
    range: DMatrix<f64>,
    full_rank: bool,
}

fn spectrum(inst: &LcqpInstance) -> Spectrum {
    let n = inst.n();
    let eig = SymmetricEigen::new(inst.q.to_dense());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let keep: Vec<usize> = (0..n)
        .filter(|&k| lmax > 0.0 && eig.eigenvalues[k] > RANK_TOLERANCE * lmax)
        .collect();
    let mut range = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        range.set_column(col, &eig.eigenvectors.column(k));
    }
    Spectrum { full_rank: keep.len() == n, range }
}

fn instance_rows(inst: &LcqpInstance) -> Vec<(Vec<f64>, Sense, f64)> {
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = inst
        .senses
        .iter()
        .zip(&inst.b)
        .map(|(&s, &b)| (vec![0.0; inst.n()], s, b))
        .collect();
    for &(i, j, v) in inst.a.entries() {
        rows[i].0[j] = v;
    }
    rows
}

/// Recession direction `d` with `Qd = 0` and `c'd < 0`, if one exists.
fn recession_direction(inst: &LcqpInstance, spec: &Spectrum) -> Result<Option<Vec<f64>>> {
    let n = inst.n();
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = instance_rows(inst)
        .into_iter()
        .map(|(a, s, _)| (a, s, 0.0))
        .collect();
    for col in spec.range.column_iter() {
        rows.push((col.iter().copied().collect(), Sense::Eq, 0.0));
    }
    let lower = inst.lower.iter().map(|&l| if l.is_finite() { 0.0 } else { -1.0 }).collect();
    let upper = inst.upper.iter().map(|&u| if u.is_finite() { 0.0 } else { 1.0 }).collect();
    let lp = LinearProgram { cost: inst.c.clone(), rows, lower, upper };
    match solve_lp(&lp)? {
        LpOutcome::Optimal { x, value } => {
            let cnorm = inst.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if value < -1e-9 * (1.0 + cnorm) * (n as f64).sqrt() {
                Ok(Some(x))
            } else {
                Ok(None)
            }
        }
        // d = 0 is always feasible and the box keeps the LP bounded.
        other => Err(Error::Numerical(format!("recession LP returned {other:?}"))),
    }
}

fn strict(
    g: &DMatrix<f64>,
    lin: &[f64],
    constraints: &[LinearConstraint],
) -> Result<StrictQpSolution> {
    solve_strict_qp(g, lin, constraints)?.ok_or_else(|| {
        Error::Numerical("active-set method reports infeasibility after phase 1".to_string())
    })
}

/// Optimal point and multipliers of the original problem.
fn first_stage(
    inst: &LcqpInstance,
    spec: &Spectrum,
    constraints: &[LinearConstraint],
    start: Vec<f64>,
) -> Result<StrictQpSolution> {
    let q = inst.q.to_dense();
    if spec.full_rank {
        return strict(&q, &inst.c, constraints);
    }
    // Proximal point: x+ = argmin f(x) + rho/2 |x - x_k|^2 over X.
    let n = inst.n();
    let rho = 1e-2 * q.amax().max(1.0);
    let g = &q + DMatrix::identity(n, n) * rho;
    let mut xk = start;
    for _ in 0..PROX_MAX_ITER {
        let lin: Vec<f64> = inst.c.iter().zip(&xk).map(|(c, x)| c - rho * x).collect();
        let next = strict(&g, &lin, constraints)?;
        let scale = 1.0 + next.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let step = next.x.iter().zip(&xk).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        if step <= 1e-11 * scale {
            return Ok(next);
        }
        xk = next.x;
    }
    Err(Error::IterationLimit("proximal-point stage"))
}

/// Point of least norm in `{x in X : U'x = U'xbar, c'x <= c'xbar}`.
fn min_norm_stage(
    inst: &LcqpInstance,
    spec: &Spectrum,
    constraints: &[LinearConstraint],
    xbar: &[f64],
) -> Result<Vec<f64>> {
    let n = inst.n();
    let mut cons = constraints.to_vec();
    for col in spec.range.column_iter() {
        let normal: Vec<f64> = col.iter().copied().collect();
        let rhs = dot(&normal, xbar);
        cons.push(LinearConstraint { normal, rhs, kind: ConstraintKind::Eq });
    }
    if inst.c.iter().any(|&v| v != 0.0) {
        cons.push(LinearConstraint {
            normal: inst.c.iter().map(|v| -v).collect(),
            rhs: -dot(&inst.c, xbar),
            kind: ConstraintKind::Ge,
        });
    }
    Ok(strict(&DMatrix::identity(n, n), &vec![0.0; n], &cons)?.x)
}

pub fn solve_lcqp(inst: &LcqpInstance) -> Result<SolveResult> {
    inst.validate().into_result()?;
    let n = inst.n();

    let phase1 = LinearProgram {
        cost: vec![0.0; n],
        rows: instance_rows(inst),
        lower: inst.lower.clone(),
        upper: inst.upper.clone(),
    };
    let start = match solve_lp(&phase1)? {
        LpOutcome::Infeasible => return Ok(SolveResult::infeasible()),
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Unbounded => {
            return Err(Error::Numerical("phase-1 LP reported unbounded".to_string()))
        }
    };

    let spec = spectrum(inst);
    let bounded_box = inst.lower.iter().chain(&inst.upper).all(|v| v.is_finite());
    if !spec.full_rank && !bounded_box {
        if let Some(d) = recession_direction(inst, &spec)? {
            return Ok(SolveResult::unbounded(Some(d)));
        }
    }

    let constraints = standard_constraints(inst);
    let first = first_stage(inst, &spec, &constraints, start)?;
    let x = if spec.full_rank {
        first.x.clone()
    } else {
        min_norm_stage(inst, &spec, &constraints, &first.x)?
    };

    let residual = kkt_residual(inst, &constraints, &x, &first.multipliers);
    if residual > KKT_TOLERANCE || inst.max_violation(&x) > FEASIBILITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "KKT residual {residual:.3e} exceeds tolerance at the computed optimum"
        )));
    }
    Ok(SolveResult {
        status: Status::Optimal,
        value: Some(inst.objective(&x)),
        x_star: Some(x),
        kkt_residual: residual,
        certificate: None,
    })
}

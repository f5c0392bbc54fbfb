//! Dense two-phase simplex for small linear programs.
//!
//! Variables with general bounds are shifted or split into nonnegative
//! columns, rows get slack and artificial columns, and Bland's rule keeps
//! the method finite on degenerate problems.

use crate::error::{Error, Result};
use crate::instance::Sense;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { x: Vec<f64>, value: f64 },
}

const PIVOT_TOL: f64 = 1e-9;

/// How an original variable is expressed in nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum Column {
    /// `x = offset + y`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - y`
    Mirrored { col: usize, offset: f64 },
    /// `x = y+ - y-`
    Split { pos: usize, neg: usize },
    /// `x = value` (equal bounds)
    Fixed { value: f64 },
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64], allowed: &[bool]) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.cols).map(|j| if allowed[j] { cost[j] } else { 0.0 }).collect();
        for (row, &bj) in self.t.iter().zip(&self.basis) {
            let cb = cost[bj];
            if cb != 0.0 {
                for (dj, v) in d.iter_mut().zip(row.iter()) {
                    *dj -= cb * v;
                }
            }
        }
        d
    }

    /// Minimizes `cost` over the current basis with Bland's rule.
    /// Returns `false` when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], max_iter: usize) -> Result<bool> {
        for _ in 0..max_iter {
            let d = self.reduced_costs(cost, allowed);
            let scale = 1.0 + cost.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let entering = (0..self.cols).find(|&j| allowed[j] && d[j] < -PIVOT_TOL * scale);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.t.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[self.cols] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        Err(Error::IterationLimit("simplex"))
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.cost.len();
    if lp.lower.len() != n || lp.upper.len() != n || lp.rows.iter().any(|r| r.0.len() != n) {
        return Err(Error::Dimension("linear program shapes disagree".to_string()));
    }
    if lp.lower.iter().zip(&lp.upper).any(|(l, u)| l > u) {
        return Ok(LpOutcome::Infeasible);
    }

    // Map variables onto nonnegative columns.
    let mut mapping = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // y_col <= width
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let col = if l.is_finite() && u.is_finite() && l == u {
            Column::Fixed { value: l }
        } else if l.is_finite() {
            if u.is_finite() {
                extra_rows.push((ncols, u - l));
            }
            ncols += 1;
            Column::Shifted { col: ncols - 1, offset: l }
        } else if u.is_finite() {
            ncols += 1;
            Column::Mirrored { col: ncols - 1, offset: u }
        } else {
            ncols += 2;
            Column::Split { pos: ncols - 2, neg: ncols - 1 }
        };
        mapping.push(col);
    }
    let structural = ncols;

    // Rows in terms of the columns: (coefficients, sense, rhs).
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for (coef, sense, rhs) in &lp.rows {
        let mut r = vec![0.0; structural];
        let mut rhs = *rhs;
        for (j, &a) in coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match mapping[j] {
                Column::Shifted { col, offset } => {
                    r[col] += a;
                    rhs -= a * offset;
                }
                Column::Mirrored { col, offset } => {
                    r[col] -= a;
                    rhs -= a * offset;
                }
                Column::Split { pos, neg } => {
                    r[pos] += a;
                    r[neg] -= a;
                }
                Column::Fixed { value } => rhs -= a * value,
            }
        }
        rows.push((r, *sense, rhs));
    }
    for &(col, width) in &extra_rows {
        let mut r = vec![0.0; structural];
        r[col] = 1.0;
        rows.push((r, Sense::Le, width));
    }

    // Slacks, then artificials where no unit slack can start the basis.
    let m = rows.len();
    let nslack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut slack_col = structural;
    let mut starts: Vec<Option<usize>> = Vec::with_capacity(m);
    for (coef, sense, rhs) in &rows {
        let mut row = vec![0.0; structural + nslack];
        row[..structural].copy_from_slice(coef);
        let mut rhs = *rhs;
        let mut slack = None;
        if *sense != Sense::Eq {
            row[slack_col] = if *sense == Sense::Le { 1.0 } else { -1.0 };
            slack = Some(slack_col);
            slack_col += 1;
        }
        if rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
        }
        starts.push(slack.filter(|&s| row[s] > 0.0));
        row.push(rhs);
        t.push(row);
    }
    let nart = starts.iter().filter(|s| s.is_none()).count();
    let cols = structural + nslack + nart;
    let mut basis = vec![0; m];
    let mut art = structural + nslack;
    for (r, row) in t.iter_mut().enumerate() {
        let rhs = row.pop().expect("rhs");
        row.resize(cols, 0.0);
        match starts[r] {
            Some(s) => basis[r] = s,
            None => {
                row[art] = 1.0;
                basis[r] = art;
                art += 1;
            }
        }
        row.push(rhs);
    }
    let mut tab = Tableau { t, basis, cols };
    let max_iter = 50 * (cols + m) + 1000;

    // Phase 1.
    let mut phase1_cost = vec![0.0; cols];
    for v in phase1_cost.iter_mut().skip(structural + nslack) {
        *v = 1.0;
    }
    let everything = vec![true; cols];
    tab.optimize(&phase1_cost, &everything, max_iter)?;
    let infeasibility: f64 = tab
        .t
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &b)| b >= structural + nslack)
        .map(|(row, _)| row[cols])
        .sum();
    let rhs_scale = 1.0 + rows.iter().fold(0.0f64, |a, r| a.max(r.2.abs()));
    if infeasibility > 1e-7 * rhs_scale {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= structural + nslack {
            let pivot_col = (0..structural + nslack).find(|&c| tab.t[r][c].abs() > PIVOT_TOL);
            match pivot_col {
                Some(c) => {
                    tab.pivot(r, c);
                    r += 1;
                }
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase 2 over structural and slack columns.
    let mut cost = vec![0.0; cols];
    for (j, &cj) in lp.cost.iter().enumerate() {
        match mapping[j] {
            Column::Shifted { col, .. } => cost[col] += cj,
            Column::Mirrored { col, .. } => cost[col] -= cj,
            Column::Split { pos, neg } => {
                cost[pos] += cj;
                cost[neg] -= cj;
            }
            Column::Fixed { .. } => {}
        }
    }
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(structural + nslack) {
        *a = false;
    }
    if !tab.optimize(&cost, &allowed, max_iter)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; cols];
    for (row, &b) in tab.t.iter().zip(&tab.basis) {
        y[b] = row[cols];
    }
    let x: Vec<f64> = mapping
        .iter()
        .map(|col| match *col {
            Column::Shifted { col, offset } => offset + y[col],
            Column::Mirrored { col, offset } => offset - y[col],
            Column::Split { pos, neg } => y[pos] - y[neg],
            Column::Fixed { value } => value,
        })
        .collect();
    let value = x.iter().zip(&lp.cost).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

//! Linearly constrained quadratic programs and their mixed-integer extension.
//!
//! An [`LcqpInstance`] describes
//!
//! ```text
//!     minimize    1/2 x' Q x + c' x
//!     subject to  A x (<=|=|>=) b,   l <= x <= u
//! ```
//!
//! with `Q` symmetric positive semidefinite and `l`, `u` possibly infinite.
//! [`MilcqpInstance`] adds a set of variable indices that must take integer
//! values. Instances are plain data: they are built once and then shared
//! read-only by the encoders, solvers and generators.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the smallest eigenvalue of `Q`, scaled by `||Q||_F`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Constraint sense of one row of `A x o b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Sense {
    pub fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    /// Position in the one-hot encoding `(<=, =, >=)`.
    pub fn index(self) -> usize {
        match self {
            Sense::Le => 0,
            Sense::Eq => 1,
            Sense::Ge => 2,
        }
    }

    /// Signed violation of `lhs o rhs`; zero when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Sparse matrix stored as row-major sorted coordinate triplets.
///
/// Explicit zeros are dropped on construction and duplicate coordinates are
/// rejected, so two matrices with equal entries have equal storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::Dimension(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidInstance(format!(
                "duplicate entry at ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let v = dense[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            rows: dense.nrows(),
            cols: dense.ncols(),
            entries,
        }
    }

    /// Builds a symmetric matrix from upper-triangle triplets (`i <= j`).
    pub fn from_upper_triplets(
        n: usize,
        upper: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut full = Vec::new();
        for (i, j, v) in upper {
            if i > j {
                return Err(Error::InvalidInstance(format!(
                    "entry ({i}, {j}) is below the diagonal; only the upper triangle is stored"
                )));
            }
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        Self::from_triplets(n, n, full)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self
            .entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
        {
            Ok(k) => self.entries[k].2,
            Err(_) => 0.0,
        }
    }

    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().copied().filter(|e| e.0 <= e.1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            d[(i, j)] = v;
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
        y
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && self
                .entries
                .iter()
                .all(|&(i, j, v)| self.get(j, i).to_bits() == v.to_bits())
    }

    /// Applies `new[row_map[i], col_map[j]] = old[i, j]`.
    pub fn relabel(&self, row_map: &[usize], col_map: &[usize]) -> Self {
        let mut entries: Vec<_> = self
            .entries
            .iter()
            .map(|&(i, j, v)| (row_map[i], col_map[j], v))
            .collect();
        entries.sort_by_key(|a| (a.0, a.1));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }
}

/// A linearly constrained quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct LcqpInstance {
    pub q: SparseMatrix,
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub senses: Vec<Sense>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Free-form provenance notes carried through files unchanged.
    pub metadata: BTreeMap<String, String>,
}

impl LcqpInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: SparseMatrix,
        c: Vec<f64>,
        a: SparseMatrix,
        b: Vec<f64>,
        senses: Vec<Sense>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            q,
            c,
            a,
            b,
            senses,
            lower,
            upper,
            metadata: BTreeMap::new(),
        };
        inst.check_dimensions()?;
        Ok(inst)
    }

    /// Convenience constructor from dense row-major data.
    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        q: &[Vec<f64>],
        c: &[f64],
        a: &[Vec<f64>],
        b: &[f64],
        senses: &[Sense],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self> {
        let n = c.len();
        let m = b.len();
        let to_sparse = |rows: &[Vec<f64>], r: usize, cdim: usize| -> Result<SparseMatrix> {
            if rows.len() != r || rows.iter().any(|row| row.len() != cdim) {
                return Err(Error::Dimension(format!("expected a {r}x{cdim} matrix")));
            }
            SparseMatrix::from_triplets(
                r,
                cdim,
                rows.iter()
                    .enumerate()
                    .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v))),
            )
        };
        Self::new(
            to_sparse(q, n, n)?,
            c.to_vec(),
            to_sparse(a, m, n)?,
            b.to_vec(),
            senses.to_vec(),
            lower.to_vec(),
            upper.to_vec(),
        )
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    fn check_dimensions(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        let mut problems = Vec::new();
        if self.q.rows() != n || self.q.cols() != n {
            problems.push(format!("Q is {}x{}, expected {n}x{n}", self.q.rows(), self.q.cols()));
        }
        if self.a.rows() != m || self.a.cols() != n {
            problems.push(format!("A is {}x{}, expected {m}x{n}", self.a.rows(), self.a.cols()));
        }
        if self.senses.len() != m {
            problems.push(format!("{} senses for {m} constraints", self.senses.len()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            problems.push(format!(
                "bounds have lengths {}/{}, expected {n}",
                self.lower.len(),
                self.upper.len()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Dimension(problems.join("; ")))
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        0.5 * dot(x, &qx) + dot(&self.c, x)
    }

    /// Largest violation over constraint rows and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let ax = self.a.mul_vec(x);
        let rows = ax
            .iter()
            .zip(&self.b)
            .zip(&self.senses)
            .map(|((&lhs, &rhs), s)| s.violation(lhs, rhs));
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xj, (&l, &u))| (l - xj).max(xj - u).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if let Err(e) = self.check_dimensions() {
            report.push("dimension", e.to_string());
            return report;
        }
        let nonfinite = |v: &f64| !v.is_finite();
        if self.q.entries().iter().any(|e| nonfinite(&e.2))
            || self.a.entries().iter().any(|e| nonfinite(&e.2))
            || self.c.iter().any(nonfinite)
            || self.b.iter().any(nonfinite)
        {
            report.push("nonfinite", "Q, c, A and b must be finite".to_string());
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || l == f64::INFINITY {
                report.push("lower_bound", format!("l[{j}] = {l} is not in R or -inf"));
            }
            if u.is_nan() || u == f64::NEG_INFINITY {
                report.push("upper_bound", format!("u[{j}] = {u} is not in R or +inf"));
            }
            if l > u {
                report.push("bounds_order", format!("l[{j}] = {l} > u[{j}] = {u}"));
            }
        }
        if !self.q.is_symmetric() {
            report.push("q_symmetric", "Q not symmetric".to_string());
        } else if report.ok() {
            let min_eig = smallest_eigenvalue(&self.q);
            let scale = self.q.frobenius_norm();
            if min_eig < -PSD_TOLERANCE * scale {
                report.push(
                    "q_psd",
                    format!("Q not PSD: smallest eigenvalue {min_eig:.3e} (||Q||_F = {scale:.3e})"),
                );
            }
        }
        report
    }

    /// Relabels constraints and variables: row `i` moves to `row_map[i]`,
    /// variable `j` to `col_map[j]`.
    pub fn permuted(&self, row_map: &[usize], col_map: &[usize]) -> Self {
        let scatter = |src: &[f64], map: &[usize]| {
            let mut out = vec![0.0; src.len()];
            for (k, &v) in src.iter().enumerate() {
                out[map[k]] = v;
            }
            out
        };
        let mut senses = self.senses.clone();
        for (i, &s) in self.senses.iter().enumerate() {
            senses[row_map[i]] = s;
        }
        Self {
            q: self.q.relabel(col_map, col_map),
            c: scatter(&self.c, col_map),
            a: self.a.relabel(row_map, col_map),
            b: scatter(&self.b, row_map),
            senses,
            lower: scatter(&self.lower, col_map),
            upper: scatter(&self.upper, col_map),
            metadata: self.metadata.clone(),
        }
    }
}

/// An LCQP in which the variables listed in `integers` must be integral.
#[derive(Debug, Clone, PartialEq)]
pub struct MilcqpInstance {
    pub base: LcqpInstance,
    pub integers: BTreeSet<usize>,
}

impl MilcqpInstance {
    pub fn new(base: LcqpInstance, integers: BTreeSet<usize>) -> Result<Self> {
        if let Some(&j) = integers.iter().find(|&&j| j >= base.n()) {
            return Err(Error::Dimension(format!(
                "integer index {j} out of range for n = {}",
                base.n()
            )));
        }
        Ok(Self { base, integers })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn m(&self) -> usize {
        self.base.m()
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.integers.contains(&j)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = self.base.validate();
        for &j in &self.integers {
            if j >= self.base.n() {
                report.push("integer_set", format!("index {j} outside 0..{}", self.base.n()));
            }
        }
        report
    }

    /// The continuous relaxation (integrality dropped).
    pub fn relaxation(&self) -> &LcqpInstance {
        &self.base
    }

    pub fn permuted(&self, row_map: &[usize], col_map: &[usize]) -> Self {
        Self {
            base: self.base.permuted(row_map, col_map),
            integers: self.integers.iter().map(|&j| col_map[j]).collect(),
        }
    }
}

/// Either kind of instance, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum QpInstance {
    Lcqp(LcqpInstance),
    Milcqp(MilcqpInstance),
}

impl QpInstance {
    pub fn base(&self) -> &LcqpInstance {
        match self {
            QpInstance::Lcqp(inst) => inst,
            QpInstance::Milcqp(inst) => &inst.base,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        match self {
            QpInstance::Lcqp(inst) => inst.validate(),
            QpInstance::Milcqp(inst) => inst.validate(),
        }
    }
}

impl From<LcqpInstance> for QpInstance {
    fn from(inst: LcqpInstance) -> Self {
        QpInstance::Lcqp(inst)
    }
}

impl From<MilcqpInstance> for QpInstance {
    fn from(inst: MilcqpInstance) -> Self {
        QpInstance::Milcqp(inst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, rule: &'static str, detail: String) {
        self.violations.push(Violation { rule, detail });
    }

    pub fn into_result(self) -> Result<()> {
        if self.ok() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(
                self.violations
                    .iter()
                    .map(|v| format!("[{}] {}", v.rule, v.detail))
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }
}

pub fn smallest_eigenvalue(q: &SparseMatrix) -> f64 {
    if q.rows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(q.to_dense()).eigenvalues.min()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}


#[cfg(test)]
mod tests {
    use super::*;

    fn small(q: &[Vec<f64>]) -> LcqpInstance {
        LcqpInstance::from_dense(
            q,
            &[0.0, 0.0],
            &[vec![1.0, 1.0]],
            &[1.0],
            &[Sense::Ge],
            &[0.0, 0.0],
            &[1.0, f64::INFINITY],
        )
        .unwrap()
    }

    #[test]
    fn zero_q_is_valid() {
        assert!(small(&[vec![0.0, 0.0], vec![0.0, 0.0]]).validate().ok());
    }

    #[test]
    fn asymmetric_q_reported() {
        let report = small(&[vec![1.0, 0.5], vec![0.25, 1.0]]).validate();
        assert!(report.has("q_symmetric"));
        assert!(report.violations[0].detail.contains("Q not symmetric"));
    }

    #[test]
    fn indefinite_q_reported() {
        // eigenvalues of [[a, b], [b, a]] are a +- |b|
        let (a, b) = (1.0_f64, 2.0_f64);
        let min_eig = a - b.abs();
        assert_eq!(min_eig, -1.0);
        let inst = small(&[vec![a, b], vec![b, a]]);
        assert!((smallest_eigenvalue(&inst.q) - min_eig).abs() < 1e-12);
        let report = inst.validate();
        assert!(report.has("q_psd"));
        assert!(report.violations[0].detail.contains("Q not PSD"));
    }

    #[test]
    fn bound_order_and_infinite_sides() {
        let mut inst = small(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        inst.lower[0] = 2.0;
        assert!(inst.validate().has("bounds_order"));
        inst.lower[0] = f64::INFINITY;
        assert!(inst.validate().has("lower_bound"));
    }

    #[test]
    fn duplicate_triplets_rejected() {
        let err = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (0, 1, 2.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn triplets_sorted_and_zeros_dropped() {
        let m = SparseMatrix::from_triplets(2, 2, [(1, 0, 3.0), (0, 1, 0.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(m.entries(), &[(0, 0, 1.0), (1, 0, 3.0)]);
    }

    #[test]
    fn integer_index_out_of_range() {
        let base = small(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(MilcqpInstance::new(base, [5].into_iter().collect()).is_err());
    }

    #[test]
    fn permutation_moves_rows_and_columns() {
        let inst = LcqpInstance::from_dense(
            &[vec![2.0, 1.0], vec![1.0, 3.0]],
            &[1.0, 2.0],
            &[vec![1.0, 0.0], vec![0.0, 4.0]],
            &[5.0, 6.0],
            &[Sense::Le, Sense::Eq],
            &[0.0, -1.0],
            &[1.0, 2.0],
        )
        .unwrap();
        let p = inst.permuted(&[1, 0], &[1, 0]);
        assert_eq!(p.c, vec![2.0, 1.0]);
        assert_eq!(p.q.get(0, 0), 3.0);
        assert_eq!(p.a.get(0, 0), 4.0);
        assert_eq!(p.senses, vec![Sense::Eq, Sense::Le]);
        assert_eq!(p.permuted(&[1, 0], &[1, 0]), inst);
    }
}

//! Mixed-integer LCQPs: depth-first branch-and-bound on the convex
//! relaxation, an enumeration oracle, and the target labels.
//!
//! Among optimal solutions the reported one has the smallest Euclidean
//! norm, with remaining ties broken lexicographically.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use super::lcqp::{solve_lcqp, SolveResult, Status, FEASIBILITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::instance::{LcqpInstance, MilcqpInstance, QpInstance, SparseMatrix};

pub const DEFAULT_NODE_BUDGET: usize = 200_000;
pub const ENUMERATION_LIMIT: f64 = 1e6;
const INTEGRALITY_TOLERANCE: f64 = 1e-6;

fn tie_tolerance(v: f64) -> f64 {
    1e-9 * v.abs().max(1.0)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Order on candidate optima: value, then norm, then lexicographic.
fn compare_candidates(a: (f64, &[f64]), b: (f64, &[f64])) -> Ordering {
    if (a.0 - b.0).abs() > tie_tolerance(a.0.abs().max(b.0.abs())) {
        return a.0.total_cmp(&b.0);
    }
    let (na, nb) = (norm2(a.1), norm2(b.1));
    if (na - nb).abs() > 1e-9 * na.max(nb).max(1.0) {
        return na.total_cmp(&nb);
    }
    for (x, y) in a.1.iter().zip(b.1) {
        if (x - y).abs() > 1e-9 * x.abs().max(y.abs()).max(1.0) {
            return x.total_cmp(y);
        }
    }
    Ordering::Equal
}

struct Incumbent {
    value: f64,
    x: Vec<f64>,
    kkt_residual: f64,
}

impl Incumbent {
    fn offer(slot: &mut Option<Incumbent>, cand: Incumbent) {
        let better = match slot {
            None => true,
            Some(cur) => {
                compare_candidates((cand.value, &cand.x), (cur.value, &cur.x)) == Ordering::Less
            }
        };
        if better {
            *slot = Some(cand);
        }
    }

    fn into_result(slot: Option<Incumbent>) -> SolveResult {
        match slot {
            None => SolveResult::infeasible(),
            Some(inc) => SolveResult {
                status: Status::Optimal,
                value: Some(inc.value),
                x_star: Some(inc.x),
                kkt_residual: inc.kkt_residual,
                certificate: None,
            },
        }
    }
}

/// Integer bounds rounded inward; `None` when some integer range is empty.
fn integer_box(inst: &MilcqpInstance) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut lower = inst.base.lower.clone();
    let mut upper = inst.base.upper.clone();
    for &j in &inst.integers {
        lower[j] = (lower[j] - INTEGRALITY_TOLERANCE).ceil();
        upper[j] = (upper[j] + INTEGRALITY_TOLERANCE).floor();
        if lower[j] > upper[j] {
            return None;
        }
    }
    Some((lower, upper))
}

fn with_bounds(base: &LcqpInstance, lower: &[f64], upper: &[f64]) -> LcqpInstance {
    let mut inst = base.clone();
    inst.lower = lower.to_vec();
    inst.upper = upper.to_vec();
    inst
}

fn most_fractional(x: &[f64], integers: &BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in integers {
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > INTEGRALITY_TOLERANCE && best.is_none_or(|b| frac > b.1 + 1e-12) {
            best = Some((j, frac));
        }
    }
    best.map(|b| b.0)
}

enum Search {
    Optimize,
    /// Stop at the first integer-feasible point.
    FeasibilityOnly,
}

fn branch_and_bound(
    base: &LcqpInstance,
    integers: &BTreeSet<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    budget: usize,
    mode: Search,
) -> Result<(Option<Incumbent>, bool)> {
    let mut stack = vec![(lower, upper)];
    let mut incumbent: Option<Incumbent> = None;
    let mut nodes = 0usize;
    let mut root_unbounded = false;
    while let Some((lo, hi)) = stack.pop() {
        nodes += 1;
        if nodes > budget {
            return Err(Error::Incomplete { budget });
        }
        let relax = solve_lcqp(&with_bounds(base, &lo, &hi))?;
        let (value, x) = match relax.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                // Only possible at the root; children inherit a bounded objective.
                root_unbounded = true;
                break;
            }
            Status::Optimal => (relax.value.unwrap(), relax.x_star.unwrap()),
        };
        if let Some(inc) = &incumbent {
            if value > inc.value + tie_tolerance(inc.value) {
                continue;
            }
        }
        match most_fractional(&x, integers) {
            None => {
                // Fix the rounded integers and recompute the least-norm
                // completion of the continuous part.
                let (mut flo, mut fhi) = (lo.clone(), hi.clone());
                for &j in integers {
                    let r = x[j].round();
                    flo[j] = r;
                    fhi[j] = r;
                }
                let fixed = solve_lcqp(&with_bounds(base, &flo, &fhi))?;
                if fixed.status == Status::Optimal {
                    Incumbent::offer(
                        &mut incumbent,
                        Incumbent {
                            value: fixed.value.unwrap(),
                            x: fixed.x_star.unwrap(),
                            kkt_residual: fixed.kkt_residual,
                        },
                    );
                    if matches!(mode, Search::FeasibilityOnly) {
                        break;
                    }
                }
            }
            Some(j) => {
                let (mut down_hi, mut up_lo) = (hi.clone(), lo.clone());
                down_hi[j] = x[j].floor();
                up_lo[j] = x[j].ceil();
                // Explore the side nearer to the relaxation first.
                let down = (lo.clone(), down_hi);
                let up = (up_lo, hi);
                if x[j] - x[j].floor() <= 0.5 {
                    stack.push(up);
                    stack.push(down);
                } else {
                    stack.push(down);
                    stack.push(up);
                }
            }
        }
    }
    Ok((incumbent, root_unbounded))
}

/// Exact MI-LCQP optimum by branch-and-bound, exploring at most `budget`
/// nodes.
pub fn solve_milcqp(inst: &MilcqpInstance, budget: usize) -> Result<SolveResult> {
    inst.validate().into_result()?;
    let Some((lower, upper)) = integer_box(inst) else {
        return Ok(SolveResult::infeasible());
    };
    let (incumbent, unbounded) = branch_and_bound(
        &inst.base,
        &inst.integers,
        lower.clone(),
        upper.clone(),
        budget,
        Search::Optimize,
    )?;
    if !unbounded {
        return Ok(Incumbent::into_result(incumbent));
    }
    // The relaxation has a descent ray; the MI problem is unbounded as soon
    // as it has an integer point.
    let mut flat = inst.base.clone();
    flat.q = SparseMatrix::zeros(inst.n(), inst.n());
    flat.c = vec![0.0; inst.n()];
    let (point, _) =
        branch_and_bound(&flat, &inst.integers, lower, upper, budget, Search::FeasibilityOnly)?;
    Ok(match point {
        Some(_) => SolveResult::unbounded(None),
        None => SolveResult::infeasible(),
    })
}

/// Instance in the continuous variables after substituting fixed integer
/// values, plus the constant objective term.
fn substitute(
    base: &LcqpInstance,
    fixed: &[(usize, f64)],
    free: &[usize],
) -> Result<(LcqpInstance, f64)> {
    let n = base.n();
    let mut value = vec![0.0; n];
    for &(j, v) in fixed {
        value[j] = v;
    }
    let mut new_index = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        new_index[j] = k;
    }
    // Objective: 1/2 x_F'Q_FF x_F + (c_F + Q_FI z)'x_F + 1/2 z'Q_II z + c_I'z.
    let qz = base.q.mul_vec(&value);
    let c: Vec<f64> = free.iter().map(|&j| base.c[j] + qz[j]).collect();
    let constant = fixed.iter().map(|&(j, v)| v * (0.5 * qz[j] + base.c[j])).sum();
    let q = SparseMatrix::from_triplets(
        free.len(),
        free.len(),
        base.q
            .entries()
            .iter()
            .filter(|e| new_index[e.0] != usize::MAX && new_index[e.1] != usize::MAX)
            .map(|&(i, j, v)| (new_index[i], new_index[j], v)),
    )?;
    let az = base.a.mul_vec(&value);
    let b: Vec<f64> = base.b.iter().zip(&az).map(|(b, s)| b - s).collect();
    let a = SparseMatrix::from_triplets(
        base.m(),
        free.len(),
        base.a
            .entries()
            .iter()
            .filter(|e| new_index[e.1] != usize::MAX)
            .map(|&(i, j, v)| (i, new_index[j], v)),
    )?;
    let reduced = LcqpInstance::new(
        q,
        c,
        a,
        b,
        base.senses.clone(),
        free.iter().map(|&j| base.lower[j]).collect(),
        free.iter().map(|&j| base.upper[j]).collect(),
    )?;
    Ok((reduced, constant))
}

/// Reference optimum by enumerating every integer assignment and solving
/// the continuous remainder.
pub fn brute_force_milcqp(inst: &MilcqpInstance) -> Result<SolveResult> {
    inst.validate().into_result()?;
    let ints: Vec<usize> = inst.integers.iter().copied().collect();
    let free: Vec<usize> = (0..inst.n()).filter(|j| !inst.integers.contains(j)).collect();
    if ints.is_empty() {
        return solve_lcqp(&inst.base);
    }
    let Some((lower, upper)) = integer_box(inst) else {
        return Ok(SolveResult::infeasible());
    };
    let mut count = 1.0f64;
    for &j in &ints {
        count *= upper[j] - lower[j] + 1.0;
    }
    if !count.is_finite() || count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationBound { count, limit: ENUMERATION_LIMIT });
    }

    let mut assignment: Vec<f64> = ints.iter().map(|&j| lower[j]).collect();
    let mut best: Option<Incumbent> = None;
    loop {
        let fixed: Vec<(usize, f64)> = ints.iter().copied().zip(assignment.iter().copied()).collect();
        let mut x = vec![0.0; inst.n()];
        for &(j, v) in &fixed {
            x[j] = v;
        }
        if free.is_empty() {
            if inst.base.max_violation(&x) <= FEASIBILITY_TOLERANCE {
                let value = inst.base.objective(&x);
                Incumbent::offer(&mut best, Incumbent { value, x, kkt_residual: 0.0 });
            }
        } else {
            let (reduced, constant) = substitute(&inst.base, &fixed, &free)?;
            let r = solve_lcqp(&reduced)?;
            match r.status {
                Status::Infeasible => {}
                Status::Unbounded => return Ok(SolveResult::unbounded(None)),
                Status::Optimal => {
                    for (&j, &v) in free.iter().zip(r.x_star.as_ref().unwrap()) {
                        x[j] = v;
                    }
                    Incumbent::offer(
                        &mut best,
                        Incumbent {
                            value: r.value.unwrap() + constant,
                            x,
                            kkt_residual: r.kkt_residual,
                        },
                    );
                }
            }
        }
        // Odometer increment over the integer box.
        let mut k = 0;
        loop {
            if k == ints.len() {
                return Ok(Incumbent::into_result(best));
            }
            if assignment[k] < upper[ints[k]] {
                assignment[k] += 1.0;
                break;
            }
            assignment[k] = lower[ints[k]];
            k += 1;
        }
    }
}

/// Feasibility, objective and solution targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetLabels {
    pub feas: u8,
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub obj: f64,
    pub sol: Option<Vec<f64>>,
}

impl TargetLabels {
    pub fn from_result(r: &SolveResult) -> Self {
        match r.status {
            Status::Infeasible => Self { feas: 0, obj: f64::INFINITY, sol: None },
            // Feasibility concerns the constraint set only.
            Status::Unbounded => Self { feas: 1, obj: f64::NEG_INFINITY, sol: None },
            Status::Optimal => Self {
                feas: 1,
                obj: r.value.expect("optimal results carry a value"),
                sol: r.x_star.clone(),
            },
        }
    }
}

pub fn evaluate_targets(inst: &QpInstance) -> Result<TargetLabels> {
    let result = match inst {
        QpInstance::Lcqp(lp) => solve_lcqp(lp)?,
        QpInstance::Milcqp(mi) => solve_milcqp(mi, DEFAULT_NODE_BUDGET)?,
    };
    Ok(TargetLabels::from_result(&result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::instance::Sense;

    #[test]
    fn ring_and_triangles() {
        let r = solve_milcqp(&corpus::cover_ring(), 10_000).unwrap();
        assert!((r.value.unwrap() - 4.5).abs() < 1e-9);
        let x = r.x_star.unwrap();
        // Least norm ties are all weight-3 alternating points; lexicographic picks (0,1,0,1,0,1).
        assert_eq!(x.iter().filter(|v| (*v - 1.0).abs() < 1e-9).count(), 3);
        let r2 = solve_milcqp(&corpus::cover_triangles(), 10_000).unwrap();
        assert!((r2.value.unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn agrees_with_enumeration_on_corpus() {
        for inst in [corpus::cover_ring(), corpus::cover_triangles(), corpus::cycle_sum_first()] {
            let a = solve_milcqp(&inst, 100_000).unwrap();
            let b = brute_force_milcqp(&inst).unwrap();
            assert_eq!(a.status, b.status);
            assert!((a.value.unwrap() - b.value.unwrap()).abs() < 1e-9);
            assert_eq!(a.x_star, b.x_star);
        }
    }

    #[test]
    fn integer_unbounded_and_infeasible() {
        // min -x, x integer in [0.2, 0.8]: empty integer range.
        let base = LcqpInstance::from_dense(&[vec![0.0]], &[-1.0], &[], &[], &[], &[0.2], &[0.8])
            .unwrap();
        let mi = MilcqpInstance::new(base.clone(), [0].into_iter().collect()).unwrap();
        assert_eq!(solve_milcqp(&mi, 100).unwrap().status, Status::Infeasible);

        // min -x0 over x0 >= 0 integer with 2 x1 = 1, x1 integer: relaxation unbounded, no integer point.
        let base = LcqpInstance::from_dense(
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &[-1.0, 0.0],
            &[vec![0.0, 2.0]],
            &[1.0],
            &[Sense::Eq],
            &[0.0, -5.0],
            &[f64::INFINITY, 5.0],
        )
        .unwrap();
        let mi = MilcqpInstance::new(base.clone(), [0, 1].into_iter().collect()).unwrap();
        assert_eq!(solve_milcqp(&mi, 1000).unwrap().status, Status::Infeasible);
        let mi = MilcqpInstance::new(base, [0].into_iter().collect()).unwrap();
        assert_eq!(solve_milcqp(&mi, 1000).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        assert!(matches!(
            solve_milcqp(&corpus::cover_triangles(), 1),
            Err(Error::Incomplete { budget: 1 })
        ));
    }

    #[test]
    fn labels() {
        let l = evaluate_targets(&QpInstance::Milcqp(corpus::cover_ring())).unwrap();
        assert_eq!(l.feas, 1);
        assert!((l.obj - 4.5).abs() < 1e-9);
        assert!(l.sol.is_some());
    }
}

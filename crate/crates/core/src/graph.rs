//! Weighted two-part graph encoding of LCQP / MI-LCQP instances.
//!
//! Constraint nodes carry `(b_i, sense_i)`, variable nodes carry
//! `(c_j, l_j, u_j)` plus the integrality flag for MI-LCQPs. `A` becomes the
//! edges between the two node sets and `Q` the edges among variable nodes,
//! self-loops included. Senses and infinite bounds stay symbolic here; the
//! GNN chooses its own numeric encoding.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{LcqpInstance, MilcqpInstance, QpInstance, Sense, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Lcqp,
    Milcqp,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Lcqp => "LCQP",
            GraphKind::Milcqp => "MILCQP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintFeature {
    pub rhs: f64,
    pub sense: Sense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableFeature {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    /// `Some(delta_I(j))` on MI-LCQP graphs, `None` on LCQP graphs.
    pub integer: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpGraph {
    pub kind: GraphKind,
    pub constraints: Vec<ConstraintFeature>,
    pub variables: Vec<VariableFeature>,
    /// `(i, j, A_ij)` for every nonzero, sorted by `(i, j)`.
    pub a_edges: Vec<(usize, usize, f64)>,
    /// `(j, j', Q_jj')` for every nonzero, both orientations, sorted.
    pub q_edges: Vec<(usize, usize, f64)>,
}

/// Neighbor lists derived from a graph's edge lists.
#[derive(Debug, Clone)]
pub struct Adjacency {
    /// For each constraint node, its `(variable, weight)` neighbors.
    pub v_to_w: Vec<Vec<(usize, f64)>>,
    /// For each variable node, its `(constraint, weight)` neighbors.
    pub w_to_v: Vec<Vec<(usize, f64)>>,
    /// For each variable node, its `(variable, weight)` Q-neighbors.
    pub w_to_w: Vec<Vec<(usize, f64)>>,
}

impl QpGraph {
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn n(&self) -> usize {
        self.variables.len()
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut adj = Adjacency {
            v_to_w: vec![Vec::new(); self.m()],
            w_to_v: vec![Vec::new(); self.n()],
            w_to_w: vec![Vec::new(); self.n()],
        };
        for &(i, j, a) in &self.a_edges {
            adj.v_to_w[i].push((j, a));
            adj.w_to_v[j].push((i, a));
        }
        for &(j, k, q) in &self.q_edges {
            adj.w_to_w[j].push((k, q));
        }
        adj
    }

    /// Recovers the instance the graph was encoded from.
    pub fn decode(&self) -> Result<QpInstance> {
        let q = SparseMatrix::from_triplets(self.n(), self.n(), self.q_edges.iter().copied())?;
        let a = SparseMatrix::from_triplets(self.m(), self.n(), self.a_edges.iter().copied())?;
        let base = LcqpInstance::new(
            q,
            self.variables.iter().map(|w| w.cost).collect(),
            a,
            self.constraints.iter().map(|v| v.rhs).collect(),
            self.constraints.iter().map(|v| v.sense).collect(),
            self.variables.iter().map(|w| w.lower).collect(),
            self.variables.iter().map(|w| w.upper).collect(),
        )?;
        Ok(match self.kind {
            GraphKind::Lcqp => QpInstance::Lcqp(base),
            GraphKind::Milcqp => {
                let ints: BTreeSet<usize> = self
                    .variables
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.integer == Some(true))
                    .map(|(j, _)| j)
                    .collect();
                QpInstance::Milcqp(MilcqpInstance::new(base, ints)?)
            }
        })
    }

    /// Places `other` after `self`: constraint `i` of `other` becomes
    /// `self.m() + i`, variable `j` becomes `self.n() + j`.
    pub fn disjoint_union(&self, other: &QpGraph) -> Result<QpGraph> {
        if self.kind != other.kind {
            return Err(Error::Dimension(format!(
                "cannot join a {} graph with a {} graph",
                self.kind.name(),
                other.kind.name()
            )));
        }
        let (m, n) = (self.m(), self.n());
        let mut out = self.clone();
        out.constraints.extend_from_slice(&other.constraints);
        out.variables.extend_from_slice(&other.variables);
        out.a_edges
            .extend(other.a_edges.iter().map(|&(i, j, a)| (i + m, j + n, a)));
        out.q_edges
            .extend(other.q_edges.iter().map(|&(j, k, q)| (j + n, k + n, q)));
        Ok(out)
    }
}

pub fn encode_lcqp(instance: &LcqpInstance) -> Result<QpGraph> {
    instance.validate().into_result()?;
    Ok(encode_base(instance, GraphKind::Lcqp, |_| None))
}

pub fn encode_milcqp(instance: &MilcqpInstance) -> Result<QpGraph> {
    instance.validate().into_result()?;
    Ok(encode_base(&instance.base, GraphKind::Milcqp, |j| {
        Some(instance.is_integer(j))
    }))
}

pub fn encode(instance: &QpInstance) -> Result<QpGraph> {
    match instance {
        QpInstance::Lcqp(inst) => encode_lcqp(inst),
        QpInstance::Milcqp(inst) => encode_milcqp(inst),
    }
}

fn encode_base(
    inst: &LcqpInstance,
    kind: GraphKind,
    flag: impl Fn(usize) -> Option<bool>,
) -> QpGraph {
    QpGraph {
        kind,
        constraints: inst
            .b
            .iter()
            .zip(&inst.senses)
            .map(|(&rhs, &sense)| ConstraintFeature { rhs, sense })
            .collect(),
        variables: (0..inst.n())
            .map(|j| VariableFeature {
                cost: inst.c[j],
                lower: inst.lower[j],
                upper: inst.upper[j],
                integer: flag(j),
            })
            .collect(),
        a_edges: inst.a.entries().to_vec(),
        q_edges: inst.q.entries().to_vec(),
    }
}

/// A relabeling of both node sets: node `i` moves to position `v[i]`,
/// node `j` to `w[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexPermutation {
    v: Vec<usize>,
    w: Vec<usize>,
}

impl VertexPermutation {
    pub fn new(v: Vec<usize>, w: Vec<usize>) -> Result<Self> {
        for (name, p) in [("constraint", &v), ("variable", &w)] {
            let mut seen = vec![false; p.len()];
            for &k in p.iter() {
                if k >= p.len() || std::mem::replace(&mut seen[k], true) {
                    return Err(Error::Dimension(format!(
                        "{name} permutation {p:?} is not a bijection"
                    )));
                }
            }
        }
        Ok(Self { v, w })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            v: (0..m).collect(),
            w: (0..n).collect(),
        }
    }

    /// Identity on constraints, transposition of variables `a` and `b`.
    pub fn swap_variables(m: usize, n: usize, a: usize, b: usize) -> Self {
        let mut p = Self::identity(m, n);
        p.w.swap(a, b);
        p
    }

    pub fn random<R: rand::Rng>(m: usize, n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut p = Self::identity(m, n);
        p.v.shuffle(rng);
        p.w.shuffle(rng);
        p
    }

    pub fn constraint_map(&self) -> &[usize] {
        &self.v
    }

    pub fn variable_map(&self) -> &[usize] {
        &self.w
    }

    pub fn inverse(&self) -> Self {
        let inv = |p: &[usize]| {
            let mut out = vec![0; p.len()];
            for (i, &k) in p.iter().enumerate() {
                out[k] = i;
            }
            out
        };
        Self {
            v: inv(&self.v),
            w: inv(&self.w),
        }
    }
}

pub fn permute(graph: &QpGraph, perm: &VertexPermutation) -> Result<QpGraph> {
    if perm.v.len() != graph.m() || perm.w.len() != graph.n() {
        return Err(Error::Dimension(format!(
            "permutation of size ({}, {}) applied to a graph with m = {}, n = {}",
            perm.v.len(),
            perm.w.len(),
            graph.m(),
            graph.n()
        )));
    }
    let mut constraints = graph.constraints.clone();
    for (i, &f) in graph.constraints.iter().enumerate() {
        constraints[perm.v[i]] = f;
    }
    let mut variables = graph.variables.clone();
    for (j, &f) in graph.variables.iter().enumerate() {
        variables[perm.w[j]] = f;
    }
    let mut a_edges: Vec<_> = graph
        .a_edges
        .iter()
        .map(|&(i, j, a)| (perm.v[i], perm.w[j], a))
        .collect();
    a_edges.sort_by_key(|x| (x.0, x.1));
    let mut q_edges: Vec<_> = graph
        .q_edges
        .iter()
        .map(|&(j, k, q)| (perm.w[j], perm.w[k], q))
        .collect();
    q_edges.sort_by_key(|x| (x.0, x.1));
    Ok(QpGraph {
        kind: graph.kind,
        constraints,
        variables,
        a_edges,
        q_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> LcqpInstance {
        LcqpInstance::from_dense(
            &[vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 0.0]],
            &[1.0, 2.0, 3.0],
            &[vec![1.0, 0.0, -1.0], vec![0.0, 2.0, 0.0]],
            &[1.0, 0.0],
            &[Sense::Le, Sense::Eq],
            &[0.0, f64::NEG_INFINITY, -1.0],
            &[1.0, 5.0, f64::INFINITY],
        )
        .unwrap()
    }

    #[test]
    fn edge_counts() {
        let g = encode_lcqp(&inst()).unwrap();
        assert_eq!(g.a_edges.len(), inst().a.nnz());
        let upper = inst().q.upper_triangle().count();
        let diag = inst().q.upper_triangle().filter(|e| e.0 == e.1).count();
        assert_eq!(g.q_edges.len(), 2 * upper - diag);
        assert!(g.q_edges.iter().all(|e| e.2 != 0.0));
    }

    #[test]
    fn zero_q_is_bipartite() {
        let mut i = inst();
        i.q = SparseMatrix::zeros(3, 3);
        assert!(encode_lcqp(&i).unwrap().q_edges.is_empty());
    }

    #[test]
    fn identity_a_edges() {
        let n = 4;
        let i = LcqpInstance::new(
            SparseMatrix::zeros(n, n),
            vec![0.0; n],
            SparseMatrix::identity(n),
            vec![1.0; n],
            vec![Sense::Le; n],
            vec![0.0; n],
            vec![1.0; n],
        )
        .unwrap();
        let g = encode_lcqp(&i).unwrap();
        assert_eq!(g.a_edges, (0..n).map(|k| (k, k, 1.0)).collect::<Vec<_>>());
    }

    #[test]
    fn integer_flags() {
        let base = inst();
        let none = encode_milcqp(&MilcqpInstance::new(base.clone(), BTreeSet::new()).unwrap()).unwrap();
        assert!(none.variables.iter().all(|w| w.integer == Some(false)));
        let lcqp = encode_lcqp(&base).unwrap();
        assert_eq!(none.a_edges, lcqp.a_edges);
        assert_eq!(none.q_edges, lcqp.q_edges);
        let all = encode_milcqp(&MilcqpInstance::new(base, (0..3).collect()).unwrap()).unwrap();
        assert!(all.variables.iter().all(|w| w.integer == Some(true)));
    }

    #[test]
    fn invalid_instance_rejected() {
        let mut i = inst();
        i.lower[0] = 9.0;
        assert!(encode_lcqp(&i).is_err());
    }

    #[test]
    fn permutation_identity_and_involution() {
        let g = encode_lcqp(&inst()).unwrap();
        assert_eq!(permute(&g, &VertexPermutation::identity(2, 3)).unwrap(), g);
        let swap = VertexPermutation::swap_variables(2, 3, 0, 1);
        let twice = permute(&permute(&g, &swap).unwrap(), &swap).unwrap();
        assert_eq!(twice, g);
        assert!(permute(&g, &VertexPermutation::identity(3, 3)).is_err());
    }

    #[test]
    fn non_bijection_rejected() {
        assert!(VertexPermutation::new(vec![0, 0], vec![0]).is_err());
        assert!(VertexPermutation::new(vec![1, 0], vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn decode_inverts_encode() {
        let g = encode_lcqp(&inst()).unwrap();
        assert_eq!(g.decode().unwrap(), QpInstance::Lcqp(inst()));
    }
}

//! Color refinement (1-WL) on QP graphs with exact signatures.
//!
//! Instead of hashing, every round builds a signature per node from its
//! previous color and its neighborhood, sorts the distinct signatures, and
//! uses the rank as the new color. Colors are therefore canonical: they do
//! not depend on node order, and two nodes share a color exactly when their
//! refinement histories agree. Weights and features are compared bit for
//! bit (with `-0.0` identified with `0.0`), unless a decimal quantization is
//! requested through [`WlOptions`].
//!
//! Two aggregation rules are provided:
//!
//! * [`WlVariant::LcqpSum`]: for each neighbor color, the sum of the edge
//!   weights into that color. This is the collision-free form of a weighted
//!   sum of hashed colors; classes whose weights cancel contribute nothing.
//! * [`WlVariant::MilcqpMultiset`]: the multiset of `(neighbor color,
//!   weight)` pairs over the nonzero neighbors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Adjacency, QpGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WlVariant {
    LcqpSum,
    MilcqpMultiset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WlOptions {
    /// Round features and weights to this many decimal digits before
    /// comparing. `None` compares stored values exactly.
    pub quantize_digits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub round: usize,
    pub v: Vec<usize>,
    pub w: Vec<usize>,
}

impl Coloring {
    pub fn num_v_classes(&self) -> usize {
        self.v.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn num_w_classes(&self) -> usize {
        self.w.iter().max().map_or(0, |&c| c + 1)
    }

    fn num_classes(&self) -> usize {
        self.num_v_classes() + self.num_w_classes()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StablePartition {
    /// Blocks of constraint nodes, each sorted, ordered by smallest member.
    pub constraint_blocks: Vec<Vec<usize>>,
    /// Blocks of variable nodes, each sorted, ordered by smallest member.
    pub variable_blocks: Vec<Vec<usize>>,
    /// First round whose partition equals the previous round's.
    pub rounds_to_stabilize: usize,
    /// Colors at the stable round.
    pub coloring: Coloring,
}

impl StablePartition {
    pub fn is_unfoldable(&self) -> bool {
        self.variable_blocks.iter().all(|b| b.len() == 1)
    }

    /// Block index of every variable node.
    pub fn variable_block_of(&self) -> Vec<usize> {
        block_index(&self.variable_blocks, self.coloring.w.len())
    }

    pub fn constraint_block_of(&self) -> Vec<usize> {
        block_index(&self.constraint_blocks, self.coloring.v.len())
    }
}

fn block_index(blocks: &[Vec<usize>], len: usize) -> Vec<usize> {
    let mut of = vec![0; len];
    for (b, block) in blocks.iter().enumerate() {
        for &k in block {
            of[k] = b;
        }
    }
    of
}

/// Bit pattern used as an exact comparison key for a real value.
fn key(value: f64, opts: &WlOptions) -> u64 {
    let v = match opts.quantize_digits {
        Some(d) if value.is_finite() => {
            let scale = 10f64.powi(d as i32);
            (value * scale).round() / scale
        }
        _ => value,
    };
    // +0.0 and -0.0 are the same number.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn dense_ids<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<&K> = keys.iter().collect();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(&k).expect("key present"))
        .collect()
}

struct Refiner<'g> {
    graph: &'g QpGraph,
    adj: Adjacency,
    variant: WlVariant,
    opts: WlOptions,
}

type Aggregate = Vec<(usize, u64)>;

impl<'g> Refiner<'g> {
    fn new(graph: &'g QpGraph, variant: WlVariant, opts: WlOptions) -> Self {
        Self {
            graph,
            adj: graph.adjacency(),
            variant,
            opts,
        }
    }

    fn initial(&self) -> Coloring {
        let o = &self.opts;
        let vkeys: Vec<(u64, usize)> = self
            .graph
            .constraints
            .iter()
            .map(|f| (key(f.rhs, o), f.sense.index()))
            .collect();
        let wkeys: Vec<(u64, u64, u64, u8)> = self
            .graph
            .variables
            .iter()
            .map(|f| {
                let flag = match f.integer {
                    None => 2,
                    Some(false) => 0,
                    Some(true) => 1,
                };
                (key(f.cost, o), key(f.lower, o), key(f.upper, o), flag)
            })
            .collect();
        Coloring {
            round: 0,
            v: dense_ids(&vkeys),
            w: dense_ids(&wkeys),
        }
    }

    fn aggregate(&self, neighbors: &[(usize, f64)], colors: &[usize]) -> Aggregate {
        match self.variant {
            WlVariant::MilcqpMultiset => {
                let mut items: Aggregate = neighbors
                    .iter()
                    .map(|&(k, wt)| (colors[k], key(wt, &self.opts)))
                    .collect();
                items.sort_unstable();
                items
            }
            WlVariant::LcqpSum => {
                let mut by_color: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for &(k, wt) in neighbors {
                    let wt = f64::from_bits(key(wt, &self.opts));
                    by_color.entry(colors[k]).or_default().push(wt);
                }
                by_color
                    .into_iter()
                    .filter_map(|(color, mut weights)| {
                        // Summing in a canonical order keeps the result
                        // independent of the node numbering.
                        weights.sort_by(f64::total_cmp);
                        let s: f64 = weights.iter().sum();
                        (s != 0.0).then(|| (color, key(s, &self.opts)))
                    })
                    .collect()
            }
        }
    }

    fn step(&self, prev: &Coloring) -> Coloring {
        let vsig: Vec<(usize, Aggregate)> = (0..self.graph.m())
            .map(|i| (prev.v[i], self.aggregate(&self.adj.v_to_w[i], &prev.w)))
            .collect();
        let wsig: Vec<(usize, Aggregate, Aggregate)> = (0..self.graph.n())
            .map(|j| {
                (
                    prev.w[j],
                    self.aggregate(&self.adj.w_to_v[j], &prev.v),
                    self.aggregate(&self.adj.w_to_w[j], &prev.w),
                )
            })
            .collect();
        Coloring {
            round: prev.round + 1,
            v: dense_ids(&vsig),
            w: dense_ids(&wsig),
        }
    }
}

/// Colorings for rounds `0..=max_rounds`.
pub fn refine(graph: &QpGraph, variant: WlVariant, max_rounds: usize) -> Vec<Coloring> {
    refine_with(graph, variant, max_rounds, WlOptions::default())
}

pub fn refine_with(
    graph: &QpGraph,
    variant: WlVariant,
    max_rounds: usize,
    opts: WlOptions,
) -> Vec<Coloring> {
    let refiner = Refiner::new(graph, variant, opts);
    let mut rounds = vec![refiner.initial()];
    for _ in 0..max_rounds {
        let next = refiner.step(rounds.last().expect("nonempty"));
        rounds.push(next);
    }
    rounds
}

pub fn stable_partition(graph: &QpGraph, variant: WlVariant) -> StablePartition {
    stable_partition_with(graph, variant, WlOptions::default())
}

pub fn stable_partition_with(
    graph: &QpGraph,
    variant: WlVariant,
    opts: WlOptions,
) -> StablePartition {
    let refiner = Refiner::new(graph, variant, opts);
    let mut current = refiner.initial();
    loop {
        let next = refiner.step(&current);
        // Signatures start with the previous color, so each round refines
        // the last one and equal class counts mean equal partitions.
        if next.num_classes() == current.num_classes() {
            return StablePartition {
                constraint_blocks: blocks(&current.v),
                variable_blocks: blocks(&current.w),
                rounds_to_stabilize: next.round,
                coloring: current,
            };
        }
        current = next;
    }
}

/// Groups indices by color; blocks ordered by smallest member.
pub fn blocks(colors: &[usize]) -> Vec<Vec<usize>> {
    let mut by_color: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &c) in colors.iter().enumerate() {
        by_color.entry(c).or_default().push(k);
    }
    let mut out: Vec<Vec<usize>> = by_color.into_values().collect();
    out.sort();
    out
}

fn joint_rounds(
    g1: &QpGraph,
    g2: &QpGraph,
    variant: WlVariant,
) -> Result<(Vec<Coloring>, usize, usize)> {
    if g1.m() != g2.m() || g1.n() != g2.n() {
        return Err(Error::Dimension(format!(
            "graphs have sizes ({}, {}) and ({}, {})",
            g1.m(),
            g1.n(),
            g2.m(),
            g2.n()
        )));
    }
    let union = g1.disjoint_union(g2)?;
    let stable = stable_partition(&union, variant);
    Ok((
        refine(&union, variant, stable.rounds_to_stabilize),
        g1.m(),
        g1.n(),
    ))
}

fn sorted(colors: &[usize]) -> Vec<usize> {
    let mut out = colors.to_vec();
    out.sort_unstable();
    out
}

/// True when the two graphs produce the same color multisets on both node
/// sets at every round.
pub fn wl_equivalent(g1: &QpGraph, g2: &QpGraph, variant: WlVariant) -> Result<bool> {
    let (rounds, m, n) = joint_rounds(g1, g2, variant)?;
    Ok(rounds.iter().all(|c| {
        sorted(&c.v[..m]) == sorted(&c.v[m..]) && sorted(&c.w[..n]) == sorted(&c.w[n..])
    }))
}

/// As [`wl_equivalent`], and additionally every variable node has the same
/// color as the variable node with the same index in the other graph.
pub fn wl_equivalent_w(g1: &QpGraph, g2: &QpGraph, variant: WlVariant) -> Result<bool> {
    let (rounds, m, n) = joint_rounds(g1, g2, variant)?;
    Ok(rounds.iter().all(|c| {
        sorted(&c.v[..m]) == sorted(&c.v[m..]) && c.w[..n] == c.w[n..]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::encode_lcqp;
    use crate::instance::{LcqpInstance, Sense};

    fn distinct_costs(n: usize) -> QpGraph {
        let inst = LcqpInstance::from_dense(
            &vec![vec![0.0; n]; n],
            &(0..n).map(|j| j as f64).collect::<Vec<_>>(),
            &[],
            &[],
            &[],
            &vec![0.0; n],
            &vec![1.0; n],
        )
        .unwrap();
        encode_lcqp(&inst).unwrap()
    }

    #[test]
    fn distinct_costs_give_singletons_at_round_zero() {
        let g = distinct_costs(5);
        let c0 = &refine(&g, WlVariant::MilcqpMultiset, 0)[0];
        assert_eq!(c0.num_w_classes(), 5);
        let sp = stable_partition(&g, WlVariant::LcqpSum);
        assert_eq!(sp.variable_blocks.len(), 5);
        assert_eq!(sp.rounds_to_stabilize, 1);
    }

    #[test]
    fn negative_zero_matches_zero() {
        assert_eq!(key(-0.0, &WlOptions::default()), key(0.0, &WlOptions::default()));
    }

    #[test]
    fn quantization_merges_nearby_values() {
        let mut inst = LcqpInstance::from_dense(
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &[0.1, 0.1 + 1e-12],
            &[vec![1.0, 1.0]],
            &[1.0],
            &[Sense::Le],
            &[0.0, 0.0],
            &[1.0, 1.0],
        )
        .unwrap();
        let exact = stable_partition(&encode_lcqp(&inst).unwrap(), WlVariant::LcqpSum);
        assert_eq!(exact.variable_blocks.len(), 2);
        let opts = WlOptions {
            quantize_digits: Some(8),
        };
        let coarse = stable_partition_with(&encode_lcqp(&inst).unwrap(), WlVariant::LcqpSum, opts);
        assert_eq!(coarse.variable_blocks, vec![vec![0, 1]]);
        inst.c[1] = 0.2;
        let apart = stable_partition_with(&encode_lcqp(&inst).unwrap(), WlVariant::LcqpSum, opts);
        assert_eq!(apart.variable_blocks.len(), 2);
    }

    #[test]
    fn sum_variant_cancels_weights_within_a_class() {
        // Constraints 0 and 1 each see +1 and -1 into one variable class, which
        // cancels to the same signature as the edgeless constraint 2.
        let inst = LcqpInstance::from_dense(
            &[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]],
            &[0.0, 0.0, 5.0],
            &[vec![1.0, -1.0, 0.0], vec![-1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]],
            &[0.0, 0.0, 0.0],
            &[Sense::Le, Sense::Le, Sense::Le],
            &[0.0; 3],
            &[1.0; 3],
        )
        .unwrap();
        let g = encode_lcqp(&inst).unwrap();
        let sum = stable_partition(&g, WlVariant::LcqpSum);
        assert_eq!(sum.constraint_blocks, vec![vec![0, 1, 2]]);
        assert_eq!(sum.variable_blocks, vec![vec![0, 1], vec![2]]);
        let multi = stable_partition(&g, WlVariant::MilcqpMultiset);
        assert_eq!(multi.constraint_blocks, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(wl_equivalent(&distinct_costs(2), &distinct_costs(3), WlVariant::LcqpSum).is_err());
    }
}

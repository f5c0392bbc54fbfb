//! MP-tractability and unfoldability of QP graphs, and block averaging.

use crate::error::{Error, Result};
use crate::graph::QpGraph;
use crate::wl::{stable_partition, StablePartition, WlVariant};

/// Two entries of one block of `A` or `Q` that differ.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// `A` restricted to constraint block `p` and variable block `q`.
    ABlock {
        p: usize,
        q: usize,
        first: (usize, usize, f64),
        second: (usize, usize, f64),
    },
    /// `Q` restricted to variable blocks `q` and `q2`.
    QBlock {
        q: usize,
        q2: usize,
        first: (usize, usize, f64),
        second: (usize, usize, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractabilityReport {
    pub mp_tractable: bool,
    pub unfoldable: bool,
    pub witness: Option<Witness>,
    pub partition: StablePartition,
}

/// Classifies a graph using the stable partition of the multiset WL test.
/// Absent edges count as zero entries, and entries are compared exactly.
pub fn classify(graph: &QpGraph) -> TractabilityReport {
    let partition = stable_partition(graph, WlVariant::MilcqpMultiset);
    let (m, n) = (graph.m(), graph.n());
    let mut a = vec![0.0; m * n];
    for &(i, j, v) in &graph.a_edges {
        a[i * n + j] = v;
    }
    let mut q = vec![0.0; n * n];
    for &(j, k, v) in &graph.q_edges {
        q[j * n + k] = v;
    }
    let same = |x: f64, y: f64| x == y;

    let mut witness = None;
    'a_blocks: for (p, rows) in partition.constraint_blocks.iter().enumerate() {
        for (qb, cols) in partition.variable_blocks.iter().enumerate() {
            if let Some((first, second)) = first_mismatch(rows, cols, |i, j| a[i * n + j], same) {
                witness = Some(Witness::ABlock {
                    p,
                    q: qb,
                    first,
                    second,
                });
                break 'a_blocks;
            }
        }
    }
    if witness.is_none() {
        'q_blocks: for (qb, rows) in partition.variable_blocks.iter().enumerate() {
            for (qb2, cols) in partition.variable_blocks.iter().enumerate() {
                if let Some((first, second)) =
                    first_mismatch(rows, cols, |j, k| q[j * n + k], same)
                {
                    witness = Some(Witness::QBlock {
                        q: qb,
                        q2: qb2,
                        first,
                        second,
                    });
                    break 'q_blocks;
                }
            }
        }
    }
    TractabilityReport {
        mp_tractable: witness.is_none(),
        unfoldable: partition.is_unfoldable(),
        witness,
        partition,
    }
}

type Entry = (usize, usize, f64);

fn first_mismatch(
    rows: &[usize],
    cols: &[usize],
    entry: impl Fn(usize, usize) -> f64,
    same: impl Fn(f64, f64) -> bool,
) -> Option<(Entry, Entry)> {
    let (r0, c0) = (rows[0], cols[0]);
    let reference = entry(r0, c0);
    for &r in rows {
        for &c in cols {
            let v = entry(r, c);
            if !same(v, reference) {
                return Some(((r0, c0, reference), (r, c, v)));
            }
        }
    }
    None
}

/// Replaces every coordinate by the mean of its block.
pub fn partition_average(x: &[f64], blocks: &[Vec<usize>]) -> Result<Vec<f64>> {
    let mut seen = vec![false; x.len()];
    for block in blocks {
        if block.is_empty() {
            return Err(Error::Partition("empty block".to_string()));
        }
        for &j in block {
            if j >= x.len() {
                return Err(Error::Partition(format!(
                    "index {j} outside 0..{}",
                    x.len()
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Partition(format!("index {j} appears twice")));
            }
        }
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Partition(format!("index {j} not covered")));
    }
    let mut out = vec![0.0; x.len()];
    for block in blocks {
        let mean = block.iter().map(|&j| x[j]).sum::<f64>() / block.len() as f64;
        for &j in block {
            out[j] = mean;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages() {
        assert_eq!(partition_average(&[1.0, 0.0], &[vec![0, 1]]).unwrap(), vec![0.5, 0.5]);
        let x = [3.0, -1.0, 2.5];
        assert_eq!(
            partition_average(&x, &[vec![0], vec![1], vec![2]]).unwrap(),
            x.to_vec()
        );
        let alt = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(
            partition_average(&alt, &[(0..6).collect()]).unwrap(),
            vec![0.5; 6]
        );
    }

    #[test]
    fn idempotent() {
        let x = [0.3, 1.7, -2.0, 4.0];
        let blocks = vec![vec![0, 3], vec![1, 2]];
        let once = partition_average(&x, &blocks).unwrap();
        assert_eq!(partition_average(&once, &blocks).unwrap(), once);
    }

    #[test]
    fn malformed_partitions() {
        assert!(partition_average(&[1.0, 2.0], &[vec![0]]).is_err());
        assert!(partition_average(&[1.0, 2.0], &[vec![0, 1], vec![1]]).is_err());
        assert!(partition_average(&[1.0, 2.0], &[vec![0, 2]]).is_err());
        assert!(partition_average(&[1.0], &[vec![0], vec![]]).is_err());
    }
}

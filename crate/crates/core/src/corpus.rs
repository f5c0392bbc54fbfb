//! Hand-built instances: the WL-indistinguishable counter-example pairs and
//! a small MP-tractable but not unfoldable instance.

use sha2::{Digest, Sha256};

use crate::instance::{LcqpInstance, MilcqpInstance, QpInstance, Sense, SparseMatrix};
use crate::io::instance_to_string;

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexamplePair {
    pub name: &'static str,
    pub first: MilcqpInstance,
    pub second: MilcqpInstance,
}

fn all_integer(base: LcqpInstance) -> MilcqpInstance {
    let n = base.n();
    MilcqpInstance::new(base, (0..n).collect()).expect("indices in range")
}

/// `min 1/2 |x|^2 + 1'x` over binary `x` with one `x_a + x_b (sense) 1` row
/// per listed pair.
fn binary_cover(pairs: &[(usize, usize, Sense)]) -> MilcqpInstance {
    let n = 6;
    let a = SparseMatrix::from_triplets(
        pairs.len(),
        n,
        pairs
            .iter()
            .enumerate()
            .flat_map(|(i, &(p, q, _))| [(i, p, 1.0), (i, q, 1.0)]),
    )
    .expect("valid triplets");
    let base = LcqpInstance::new(
        SparseMatrix::identity(n),
        vec![1.0; n],
        a,
        vec![1.0; pairs.len()],
        pairs.iter().map(|p| p.2).collect(),
        vec![0.0; n],
        vec![1.0; n],
    )
    .expect("consistent dimensions");
    all_integer(base)
}

/// Six-cycle of covering constraints; optimum 9/2 at (1,0,1,0,1,0).
pub fn cover_ring() -> MilcqpInstance {
    use Sense::Ge;
    binary_cover(&[(0, 1, Ge), (1, 2, Ge), (2, 3, Ge), (3, 4, Ge), (4, 5, Ge), (5, 0, Ge)])
}

/// Two triangles of covering constraints; optimum 6.
///
/// `last` is the sense of the final row `x_6 + x_4 (last) 1`. The
/// WL-equivalent partner of [`cover_ring`] uses `>=`. The `<=` form,
/// [`cover_triangles_le`], is not WL-equivalent to the ring.
pub fn cover_triangles_with(last: Sense) -> MilcqpInstance {
    use Sense::Ge;
    binary_cover(&[(0, 1, Ge), (1, 2, Ge), (2, 0, Ge), (3, 4, Ge), (4, 5, Ge), (5, 3, last)])
}

pub fn cover_triangles() -> MilcqpInstance {
    cover_triangles_with(Sense::Ge)
}

pub fn cover_triangles_le() -> MilcqpInstance {
    cover_triangles_with(Sense::Le)
}

/// Seven integer variables in `[0, 3]`, objective `1/2 (1'x)^2 + 1'x`,
/// difference equalities along the listed cycles and `1'x = 6`.
fn cycles_with_sum(cycles: &[&[usize]]) -> MilcqpInstance {
    let n = 7;
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for cycle in cycles {
        for k in 0..cycle.len() {
            rows.push((cycle[k], cycle[(k + 1) % cycle.len()]));
        }
    }
    let m = rows.len() + 1;
    let mut triplets: Vec<(usize, usize, f64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, &(p, q))| [(i, p, 1.0), (i, q, -1.0)])
        .collect();
    triplets.extend((0..n).map(|j| (m - 1, j, 1.0)));
    let a = SparseMatrix::from_triplets(m, n, triplets).expect("valid triplets");
    let ones = SparseMatrix::from_triplets(
        n,
        n,
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j, 1.0))),
    )
    .expect("valid triplets");
    let mut b = vec![0.0; m];
    b[m - 1] = 6.0;
    let base = LcqpInstance::new(
        ones,
        vec![1.0; n],
        a,
        b,
        vec![Sense::Eq; m],
        vec![0.0; n],
        vec![3.0; n],
    )
    .expect("consistent dimensions");
    all_integer(base)
}

/// Unique feasible point (3,3,0,0,0,0,0).
pub fn cycle_sum_first() -> MilcqpInstance {
    // x1 - x2 = 0 appears in both orientations, then the 5-cycle x3..x7.
    cycles_with_sum(&[&[0, 1], &[2, 3, 4, 5, 6]])
}

/// Unique feasible point (2,2,2,0,0,0,0).
pub fn cycle_sum_second() -> MilcqpInstance {
    cycles_with_sum(&[&[0, 1, 2], &[3, 4, 5, 6]])
}

/// Two constraints, three binary variables; variables 0 and 2 are
/// interchangeable. Stable partition `I = {{0},{1}}`, `J = {{0,2},{1}}`,
/// and every block of `A` and `Q` is constant.
pub fn symmetric_pair_instance() -> MilcqpInstance {
    let base = LcqpInstance::from_dense(
        &[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
        ],
        &[0.0, 1.0, 0.0],
        &[vec![1.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]],
        &[2.0, 1.0],
        &[Sense::Le, Sense::Le],
        &[0.0; 3],
        &[1.0; 3],
    )
    .expect("consistent dimensions");
    all_integer(base)
}

pub fn objective_pair() -> CounterexamplePair {
    CounterexamplePair {
        name: "cover-objective",
        first: cover_ring(),
        second: cover_triangles(),
    }
}

pub fn solution_pair() -> CounterexamplePair {
    CounterexamplePair {
        name: "cycle-solution",
        first: cycle_sum_first(),
        second: cycle_sum_second(),
    }
}

pub fn corpus() -> Vec<CounterexamplePair> {
    vec![objective_pair(), solution_pair()]
}

/// SHA-256 over the serialized corpus documents, for integrity checks.
pub fn corpus_digest(pairs: &[CounterexamplePair]) -> String {
    let mut hasher = Sha256::new();
    for pair in pairs {
        hasher.update(pair.name.as_bytes());
        for inst in [&pair.first, &pair.second] {
            let text = instance_to_string(&QpInstance::Milcqp(inst.clone()))
                .expect("corpus instances validate");
            hasher.update(text.as_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

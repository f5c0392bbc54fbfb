use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{corpus, cover_ring, cover_triangles, symmetric_pair_instance};
use crate::error::Result;
use crate::generator::{gen_lcqp_with, gen_milcqp_with, make_sparse_spd, stream_rng, GenConfig};
use crate::gnn::{
    forward_graph, forward_node, init_params, loss_and_grad, ActivationPattern, GnnConfig,
    GnnParams, GraphBatch, Head,
};
use crate::graph::{encode, encode_lcqp, encode_milcqp, permute, GraphKind, QpGraph, VertexPermutation};
use crate::instance::{LcqpInstance, QpInstance, Sense, SparseMatrix};
use crate::io::{instance_from_str, instance_to_string};
use crate::solver::active_set::{solve_strict_qp, ConstraintKind, LinearConstraint};
use crate::solver::{brute_force_milcqp, solve_lcqp, solve_milcqp, SolveResult, Status};
use crate::tractability::{classify, partition_average};
use crate::wl::{refine, stable_partition, wl_equivalent, WlVariant};

use super::counterexamples::verify_counterexamples;
use super::experiments::small_milcqp_config;
use super::Report;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// LCQP family with the usual distributions at size `(m, n)`, with `A`
/// at 20% density.
fn sized_lcqp(seed: u64, m: usize, n: usize) -> GenConfig {
    GenConfig { m, n, nnz_a: (m * n / 5).max(1), ..GenConfig::generic_lcqp(seed) }
}

/// The first `count` instances of the `(m, n)` family keyed by `seed` that
/// have an optimum, with their solver results.
pub fn optimal_lcqps(
    seed: u64,
    count: usize,
    m: usize,
    n: usize,
) -> Result<Vec<(LcqpInstance, SolveResult)>> {
    let cfg = sized_lcqp(seed, m, n);
    let mut out = Vec::with_capacity(count);
    let mut k = 0;
    while out.len() < count {
        let inst = gen_lcqp_with(&cfg, &mut stream_rng(seed, k))?;
        let r = solve_lcqp(&inst)?;
        if r.status == Status::Optimal {
            out.push((inst, r));
        }
        k += 1;
    }
    Ok(out)
}

/// A feasible LCQP whose optimal set is usually a face of positive
/// dimension: `Q = BB'` has rank 8 of 20, `c` lies in the range of `Q`,
/// and the constraints are slack at a random box point.
pub fn degenerate_lcqp(rng: &mut ChaCha8Rng) -> LcqpInstance {
    let (n, m, rank) = (20, 10, 8);
    let bm = DMatrix::from_fn(n, rank, |_, _| normal(rng) / (rank as f64).sqrt());
    let mut q = &bm * bm.transpose();
    q = (&q + q.transpose()) * 0.5;
    let w = DVector::from_fn(n, |_, _| normal(rng));
    let c = (&q * w).iter().copied().collect::<Vec<f64>>();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut a = vec![vec![0.0; n]; m];
    for row in a.iter_mut() {
        for &j in rand::seq::index::sample(rng, n, 4).iter().collect::<Vec<_>>().iter() {
            row[j] = normal(rng);
        }
    }
    let b: Vec<f64> = a
        .iter()
        .map(|row| row.iter().zip(&x0).map(|(p, v)| p * v).sum::<f64>() + rng.gen_range(0.1..1.0))
        .collect();
    let q_rows: Vec<Vec<f64>> = (0..n).map(|i| q.row(i).iter().copied().collect()).collect();
    LcqpInstance::from_dense(&q_rows, &c, &a, &b, &vec![Sense::Le; m], &vec![-3.0; n], &vec![3.0; n])
        .expect("consistent dimensions")
}

/// Orthonormal basis (as columns) of the null space of the rows `k`.
fn null_basis(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::identity(n, n);
    }
    let k = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let gram = k.transpose() * &k;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cols: Vec<usize> = (0..n).filter(|&j| eig.eigenvalues[j] <= 1e-10 * top.max(1.0)).collect();
    DMatrix::from_fn(n, cols.len(), |i, c| eig.eigenvectors[(i, cols[c])])
}

/// Perturbs `x_star` along random directions of the optimal face and
/// returns `(min over trials of |x + t d| - |x|, face dimension)`. The
/// first entry is `None` when no trial found a nonzero feasible step.
///
/// Directions keep `Qd = 0`, `c'd = 0`, equality rows and active bounds or
/// inequalities from being violated, so every step stays optimal. A random
/// Gaussian vector is projected onto that cone.
pub fn min_norm_perturbation(
    inst: &LcqpInstance,
    x: &[f64],
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Option<f64>, usize)> {
    let n = inst.n();
    let tol = |scale: f64| 1e-7 * (1.0 + scale.abs());
    let qd = inst.q.to_dense();
    let ad = inst.a.to_dense();
    let mut pinned: Vec<Vec<f64>> = (0..n).map(|i| qd.row(i).iter().copied().collect()).collect();
    pinned.push(inst.c.clone());
    // Each entry (normal, slack): feasibility needs normal.d * t <= slack.
    let mut limits: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..inst.m() {
        let row: Vec<f64> = ad.row(i).iter().copied().collect();
        let ax: f64 = row.iter().zip(x).map(|(p, v)| p * v).sum();
        match inst.senses[i] {
            Sense::Eq => pinned.push(row),
            Sense::Le => limits.push((row, inst.b[i] - ax)),
            Sense::Ge => limits.push((row.iter().map(|v| -v).collect(), ax - inst.b[i])),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if inst.upper[j].is_finite() {
            limits.push((e.clone(), inst.upper[j] - x[j]));
        }
        if inst.lower[j].is_finite() {
            e[j] = -1.0;
            limits.push((e, x[j] - inst.lower[j]));
        }
    }
    let basis = null_basis(&pinned, n);
    let r = basis.ncols();
    if r == 0 {
        return Ok((None, 0));
    }
    let base_norm = norm(x);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let g = DVector::from_fn(n, |_, _| normal(rng));
        let lin: Vec<f64> = (basis.transpose() * &g).iter().map(|v| -v).collect();
        let cone: Vec<LinearConstraint> = limits
            .iter()
            .filter(|(_, slack)| *slack <= tol(1.0))
            .map(|(a, _)| {
                let a = DVector::from_column_slice(a);
                LinearConstraint {
                    normal: (basis.transpose() * a).iter().map(|v| -v).collect(),
                    rhs: 0.0,
                    kind: ConstraintKind::Ge,
                }
            })
            .collect();
        let z = match solve_strict_qp(&DMatrix::identity(r, r), &lin, &cone)? {
            Some(sol) => sol.x,
            None => continue,
        };
        let d: Vec<f64> = (&basis * DVector::from_vec(z)).iter().copied().collect();
        let dn = norm(&d);
        if dn < 1e-9 {
            continue;
        }
        let d: Vec<f64> = d.iter().map(|v| v / dn).collect();
        let mut t = 1.0f64;
        for (a, slack) in &limits {
            let rate: f64 = a.iter().zip(&d).map(|(p, v)| p * v).sum();
            if rate > 1e-12 && *slack > tol(1.0) {
                t = t.min(slack / rate);
            }
        }
        let t = 0.5 * t;
        let moved: Vec<f64> = x.iter().zip(&d).map(|(v, dv)| v + t * dv).collect();
        worst = worst.min(norm(&moved) - base_norm);
    }
    Ok((worst.is_finite().then_some(worst), r))
}

/// A PSD matrix `M`, a partition `J` of its indices with constant
/// block row sums, and a Gaussian `x`.
pub fn averaging_triple(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<Vec<usize>>, Vec<f64>) {
    let n = rng.gen_range(3..=12);
    let p = rng.gen_range(1..=n.min(5));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (k, &j) in order.iter().enumerate() {
        let b = if k < p { k } else { rng.gen_range(0..p) };
        blocks[b].push(j);
    }
    for b in blocks.iter_mut() {
        b.sort_unstable();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    // Between blocks: constant entries from a PSD quotient matrix.
    let cq = DMatrix::from_fn(p, p, |_, _| normal(rng));
    let s = &cq * cq.transpose();
    for (qa, ba) in blocks.iter().enumerate() {
        for (qb, bb) in blocks.iter().enumerate() {
            for &i in ba {
                for &j in bb {
                    m[(i, j)] += s[(qa, qb)];
                }
            }
        }
    }
    // Within blocks: a PSD part with zero row sums plus a multiple of I.
    for block in &blocks {
        let k = block.len();
        let g = DMatrix::from_fn(k, k, |_, _| normal(rng));
        let centering = DMatrix::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
        let inner = &centering * (&g * g.transpose()) * &centering;
        let lam = rng.gen_range(0.0..2.0);
        for (a, &i) in block.iter().enumerate() {
            for (b, &j) in block.iter().enumerate() {
                m[(i, j)] += inner[(a, b)] + if a == b { lam } else { 0.0 };
            }
        }
    }
    let m = (&m + m.transpose()) * 0.5;
    let x: Vec<f64> = (0..n).map(|_| 3.0 * normal(rng)).collect();
    (m, blocks, x)
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    0.5 * (v.transpose() * m * &v)[(0, 0)]
}

/// Largest spread of `sum_{j' in J_b} M_{j j'}` over `j` in one block.
fn compatibility_gap(m: &DMatrix<f64>, blocks: &[Vec<usize>]) -> f64 {
    let mut gap = 0.0f64;
    for ba in blocks {
        for bb in blocks {
            let sums: Vec<f64> = ba.iter().map(|&j| bb.iter().map(|&k| m[(j, k)]).sum()).collect();
            let (lo, hi) = sums.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            gap = gap.max(hi - lo);
        }
    }
    gap
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub config: GnnConfig,
    pub checked: usize,
    /// Coordinates whose finite-difference stencil crosses a ReLU kink.
    pub skipped: usize,
    pub worst_rel_err: f64,
}

fn small_graphs(kind: GraphKind, rng: &mut ChaCha8Rng) -> Result<Vec<QpGraph>> {
    let mut out = Vec::new();
    for _ in 0..2 {
        let cfg = GenConfig { m: rng.gen_range(2..=4), n: rng.gen_range(3..=5), nnz_a: 6, ..small_milcqp_config(rng.gen()) };
        let inst = gen_milcqp_with(&cfg, rng)?;
        out.push(match kind {
            GraphKind::Lcqp => encode_lcqp(inst.relaxation())?,
            GraphKind::Milcqp => encode_milcqp(&inst)?,
        });
    }
    Ok(out)
}

/// Compares the analytic gradient of the training loss with five-point
/// central differences on random graphs, labels and parameters.
pub fn gradient_check(config: GnnConfig, seed: u64) -> Result<GradientCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = small_graphs(config.variant, &mut rng)?;
    let refs: Vec<&QpGraph> = graphs.iter().collect();
    let batch = GraphBatch::new(&refs)?;
    let labels: Vec<f64> = match config.head {
        Head::Graph => (0..graphs.len()).map(|_| 2.0 * normal(&mut rng)).collect(),
        Head::Node => (0..batch.num_variables()).map(|_| 2.0 * normal(&mut rng)).collect(),
    };
    let mut params = init_params(config, seed)?;
    for v in params.values.iter_mut() {
        *v += 0.1 * normal(&mut rng);
    }
    let (_, grad) = loss_and_grad(&params, &batch, &labels)?;
    let pattern = ActivationPattern::of(&params, &batch)?;
    let loss_at = |p: &GnnParams| -> Result<f64> { Ok(loss_and_grad(p, &batch, &labels)?.0.loss) };
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    #[allow(clippy::needless_range_loop)]
    for k in 0..params.len() {
        let h = 1e-4 * params.values[k].abs().max(1.0);
        let shifted = |t: f64| {
            let mut p = params.clone();
            p.values[k] += t;
            p
        };
        let stencil = [shifted(2.0 * h), shifted(h), shifted(-h), shifted(-2.0 * h)];
        let mut kink = false;
        for p in &stencil {
            kink |= ActivationPattern::of(p, &batch)? != pattern;
        }
        if kink {
            skipped += 1;
            continue;
        }
        let f: Vec<f64> = stencil.iter().map(&loss_at).collect::<Result<_>>()?;
        // Fourth-order central difference.
        let fd = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
        // Below 1e-6 the comparison is absolute: rounding noise in `fd` is
        // around 1e-11 there.
        let denom = grad[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[k] - fd).abs() / denom);
        checked += 1;
    }
    Ok(GradientCheck { config, checked, skipped, worst_rel_err: worst })
}

/// The ten configurations used by the gradient check: every variant and
/// head, one to three layers, widths three to six.
pub(crate) fn gradient_configs(seed: u64) -> Vec<(GnnConfig, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10u64)
        .map(|k| {
            let variant = if k % 2 == 0 { GraphKind::Lcqp } else { GraphKind::Milcqp };
            let head = if (k / 2) % 2 == 0 { Head::Graph } else { Head::Node };
            let cfg = GnnConfig::new(rng.gen_range(1..=3), rng.gen_range(3..=6), variant, head)
                .expect("positive sizes");
            (cfg, seed.wrapping_mul(100).wrapping_add(k))
        })
        .collect()
}

/// Instance with all `A` entries 1, `Q = 2I`, and costs and right-hand
/// sides from two values each, so stable partitions are coarse.
fn patterned_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> LcqpInstance {
    let a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect())
        .collect();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect();
    let c: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let b: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 2.0 }).collect();
    LcqpInstance::from_dense(&q, &c, &a, &b, &vec![Sense::Ge; m], &vec![0.0; n], &vec![1.0; n])
        .expect("consistent dimensions")
}

fn refines(finer: &[usize], coarser: &[usize]) -> bool {
    let mut map = std::collections::BTreeMap::new();
    finer.iter().zip(coarser).all(|(f, c)| *map.entry(*f).or_insert(*c) == *c)
}

fn instance_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let mut psd_bad = 0;
    let mut io_bad = 0;
    for k in 0..100u64 {
        let inst = if k % 2 == 0 {
            QpInstance::Lcqp(gen_lcqp_with(&sized_lcqp(seed, 5, 12), &mut stream_rng(seed, k))?)
        } else {
            QpInstance::Milcqp(gen_milcqp_with(&small_milcqp_config(seed), &mut stream_rng(seed, k))?)
        };
        if !inst.validate().ok() {
            psd_bad += 1;
            continue;
        }
        let q = inst.base().q.clone();
        for _ in 0..10 {
            let x: Vec<f64> = (0..q.cols()).map(|_| normal(&mut rng)).collect();
            let qx = q.mul_vec(&x);
            let xqx: f64 = x.iter().zip(&qx).map(|(a, b)| a * b).sum();
            if xqx < -1e-8 * norm(&x).powi(2) {
                psd_bad += 1;
            }
        }
        let text = instance_to_string(&inst)?;
        if instance_from_str(&text, Path::new("<memory>"))? != inst {
            io_bad += 1;
        }
    }
    r.push("instance/psd-probe", psd_bad == 0, format!("{psd_bad} failures over 100 instances"));
    r.push("instance/io-round-trip", io_bad == 0, format!("{io_bad} mismatches over 100 instances"));
    Ok(())
}

fn graph_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22);
    let (mut decode_bad, mut perm_bad) = (0, 0);
    for k in 0..100u64 {
        let mi = gen_milcqp_with(&small_milcqp_config(seed), &mut stream_rng(seed, k))?;
        let mut mi = mi;
        // Graphs carry no metadata.
        mi.base.metadata.clear();
        let inst = if k % 2 == 0 { QpInstance::Lcqp(mi.base.clone()) } else { QpInstance::Milcqp(mi) };
        let g = encode(&inst)?;
        if g.decode()? != inst {
            decode_bad += 1;
        }
        let p = VertexPermutation::random(g.m(), g.n(), &mut rng);
        let moved = match &inst {
            QpInstance::Lcqp(x) => QpInstance::Lcqp(x.permuted(p.constraint_map(), p.variable_map())),
            QpInstance::Milcqp(x) => QpInstance::Milcqp(x.permuted(p.constraint_map(), p.variable_map())),
        };
        if encode(&moved)? != permute(&g, &p)? {
            perm_bad += 1;
        }
    }
    r.push("graph/decode-inverts-encode", decode_bad == 0, format!("{decode_bad} mismatches"));
    r.push("graph/permutation-commutes", perm_bad == 0, format!("{perm_bad} mismatches"));
    Ok(())
}

fn wl_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33);
    let cfg = sized_lcqp(seed, 5, 12);
    let mut graphs = Vec::new();
    for k in 0..30u64 {
        graphs.push(encode_lcqp(&gen_lcqp_with(&cfg, &mut stream_rng(seed, k))?)?);
        let pat = patterned_instance(&mut rng, 5, 12);
        graphs.push(encode_lcqp(&pat)?);
    }
    let (mut mono_bad, mut rounds_bad, mut order_bad) = (0, 0, 0);
    for g in &graphs {
        for variant in [WlVariant::LcqpSum, WlVariant::MilcqpMultiset] {
            let stable = stable_partition(g, variant);
            if stable.rounds_to_stabilize > g.m() + g.n() + 1 {
                rounds_bad += 1;
            }
            let rounds = refine(g, variant, stable.rounds_to_stabilize + 5);
            for w in rounds.windows(2) {
                if !refines(&w[1].v, &w[0].v) || !refines(&w[1].w, &w[0].w) {
                    mono_bad += 1;
                }
            }
            let settled = &rounds[stable.rounds_to_stabilize..];
            if settled.iter().any(|c| {
                c.num_v_classes() != settled[0].num_v_classes()
                    || c.num_w_classes() != settled[0].num_w_classes()
            }) {
                mono_bad += 1;
            }
            let p = VertexPermutation::random(g.m(), g.n(), &mut rng);
            let other = stable_partition(&permute(g, &p)?, variant);
            let inv = p.inverse();
            let pull = |blocks: &[Vec<usize>], map: &[usize]| {
                let mut out: Vec<Vec<usize>> = blocks
                    .iter()
                    .map(|b| {
                        let mut v: Vec<usize> = b.iter().map(|&k| map[k]).collect();
                        v.sort_unstable();
                        v
                    })
                    .collect();
                out.sort();
                out
            };
            if pull(&other.variable_blocks, inv.variable_map()) != stable.variable_blocks
                || pull(&other.constraint_blocks, inv.constraint_map()) != stable.constraint_blocks
            {
                order_bad += 1;
            }
        }
    }
    r.push("wl/monotone-and-stable", mono_bad == 0, format!("{mono_bad} violations"));
    r.push("wl/rounds-bounded", rounds_bad == 0, format!("{rounds_bad} graphs need more than m+n+1 rounds"));
    r.push("wl/order-independent", order_bad == 0, format!("{order_bad} mismatches"));

    // Equivalence relation on triples drawn from graphs and relabeled copies.
    let mut pool = Vec::new();
    for g in graphs.iter().skip(1).step_by(2).take(6) {
        pool.push(g.clone());
        pool.push(permute(g, &VertexPermutation::random(g.m(), g.n(), &mut rng))?);
    }
    let mut eq_bad = 0;
    let mut positives = 0;
    for _ in 0..60 {
        let pick = |rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())].clone();
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let v = WlVariant::MilcqpMultiset;
        let ab = wl_equivalent(&a, &b, v)?;
        positives += usize::from(ab);
        if !wl_equivalent(&a, &a, v)? || ab != wl_equivalent(&b, &a, v)? {
            eq_bad += 1;
        }
        if ab && wl_equivalent(&b, &c, v)? && !wl_equivalent(&a, &c, v)? {
            eq_bad += 1;
        }
    }
    r.push(
        "wl/equivalence-relation",
        eq_bad == 0,
        format!("{eq_bad} violations, {positives} equivalent pairs among 60"),
    );

    let mut variant_bad = 0;
    let mut constant: Vec<QpGraph> = corpus()
        .iter()
        .flat_map(|p| [p.first.clone(), p.second.clone()])
        .filter(|i| i.base.q.entries().iter().all(|e| e.2 == i.base.q.entries()[0].2))
        .map(|i| encode_lcqp(&i.base))
        .collect::<Result<_>>()?;
    for _ in 0..20 {
        constant.push(encode_lcqp(&patterned_instance(&mut rng, 4, 8))?);
    }
    for g in &constant {
        let s = stable_partition(g, WlVariant::LcqpSum);
        let t = stable_partition(g, WlVariant::MilcqpMultiset);
        if s.variable_blocks != t.variable_blocks || s.constraint_blocks != t.constraint_blocks {
            variant_bad += 1;
        }
    }
    r.push(
        "wl/variant-consistency",
        variant_bad == 0,
        format!("{variant_bad} of {} constant-weight graphs differ", constant.len()),
    );
    Ok(())
}

fn tractability_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x44);
    let cfg = sized_lcqp(seed, 5, 10);
    let (mut violations, mut unfoldable, mut tractable) = (0, 0, 0);
    for k in 0..500u64 {
        let g = if k % 2 == 0 {
            encode_lcqp(&gen_lcqp_with(&cfg, &mut stream_rng(seed, k))?)?
        } else {
            encode_lcqp(&patterned_instance(&mut rng, 5, 10))?
        };
        let rep = classify(&g);
        unfoldable += usize::from(rep.unfoldable);
        tractable += usize::from(rep.mp_tractable);
        if rep.unfoldable && !rep.mp_tractable {
            violations += 1;
        }
    }
    r.push(
        "tractability/unfoldable-implies-tractable",
        violations == 0,
        format!("{violations} violations in 500 graphs ({unfoldable} unfoldable, {tractable} MP-tractable)"),
    );

    let generic = GenConfig::generic_lcqp(seed);
    let mut folded = 0;
    for k in 0..100u64 {
        let g = encode_lcqp(&gen_lcqp_with(&generic, &mut stream_rng(seed, k))?)?;
        if !classify(&g).unfoldable {
            folded += 1;
        }
    }
    r.push("tractability/generic-unfoldable", folded == 0, format!("{} of 100 unfoldable", 100 - folded));

    let rep = classify(&encode_milcqp(&symmetric_pair_instance())?);
    r.push(
        "tractability/constructed-instance",
        rep.mp_tractable && !rep.unfoldable,
        format!("mp_tractable = {}, unfoldable = {}", rep.mp_tractable, rep.unfoldable),
    );

    let (mut avg_bad, mut compat_bad, mut sum_bad) = (0, 0, 0);
    for _ in 0..1000 {
        let (m, blocks, x) = averaging_triple(&mut rng);
        if compatibility_gap(&m, &blocks) > 1e-9 {
            compat_bad += 1;
        }
        let xh = partition_average(&x, &blocks)?;
        if quad(&m, &xh) > quad(&m, &x) + 1e-10 {
            avg_bad += 1;
        }
        for b in &blocks {
            let (s, sh): (f64, f64) = (b.iter().map(|&j| x[j]).sum(), b.iter().map(|&j| xh[j]).sum());
            if (s - sh).abs() > 1e-12 * (1.0 + s.abs()) {
                sum_bad += 1;
            }
        }
    }
    r.push(
        "tractability/averaging-inequality",
        avg_bad == 0 && compat_bad == 0,
        format!("{avg_bad} violations, {compat_bad} incompatible triples, of 1000"),
    );
    r.push("tractability/block-sums-preserved", sum_bad == 0, format!("{sum_bad} violations"));
    Ok(())
}

fn solver_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    let solved = optimal_lcqps(seed, 50, 10, 20)?;
    let worst_kkt = solved.iter().map(|(_, s)| s.kkt_residual).fold(0.0, f64::max);
    r.push("solver/kkt-residual", worst_kkt <= 1e-6, format!("max residual {worst_kkt:e} over 50"));

    let mut worst_gain = f64::INFINITY;
    let mut faces = 0;
    for (inst, s) in &solved {
        let (gain, _) = min_norm_perturbation(inst, s.x_star.as_ref().expect("optimal"), 5, &mut rng)?;
        if let Some(gain) = gain {
            faces += 1;
            worst_gain = worst_gain.min(gain);
        }
    }
    for _ in 0..100 {
        let inst = degenerate_lcqp(&mut rng);
        let s = solve_lcqp(&inst)?;
        if s.status != Status::Optimal {
            worst_gain = f64::NEG_INFINITY;
            continue;
        }
        let (gain, _) = min_norm_perturbation(&inst, s.x_star.as_ref().expect("optimal"), 10, &mut rng)?;
        if let Some(gain) = gain {
            faces += 1;
            worst_gain = worst_gain.min(gain);
        }
    }
    r.push(
        "solver/min-norm",
        worst_gain >= -1e-8 && faces > 0,
        format!("smallest norm change {worst_gain:e} over {faces} of 150 optimal sets with a feasible move"),
    );

    let (mut bb_bad, mut statuses) = (0, BTreeSet::new());
    let cfg = small_milcqp_config(seed);
    for k in 0..50u64 {
        let inst = gen_milcqp_with(&cfg, &mut stream_rng(seed, k))?;
        let a = solve_milcqp(&inst, 100_000)?;
        let b = brute_force_milcqp(&inst)?;
        statuses.insert(b.status.name());
        let same = a.status == b.status
            && match (a.value, b.value) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-6 && inst.base.max_violation(a.x_star.as_ref().expect("point")) <= 1e-7,
                (None, None) => true,
                _ => false,
            };
        bb_bad += usize::from(!same);
    }
    r.push(
        "solver/branch-and-bound-matches-enumeration",
        bb_bad == 0,
        format!("{bb_bad} disagreements over 50; statuses seen {statuses:?}"),
    );

    // Equal optimal values on WL-equivalent pairs.
    let mut pairs: Vec<(LcqpInstance, LcqpInstance)> = vec![(cover_ring().base, cover_triangles().base)];
    for (inst, _) in solved.iter().take(10) {
        let p = VertexPermutation::random(inst.m(), inst.n(), &mut rng);
        pairs.push((inst.clone(), inst.permuted(p.constraint_map(), p.variable_map())));
    }
    let mut sep_bad = 0;
    for (a, b) in &pairs {
        let eq = wl_equivalent(&encode_lcqp(a)?, &encode_lcqp(b)?, WlVariant::LcqpSum)?;
        let (va, vb) = (solve_lcqp(a)?.value, solve_lcqp(b)?.value);
        let same = matches!((va, vb), (Some(x), Some(y)) if (x - y).abs() <= 1e-6);
        sep_bad += usize::from(!eq || !same);
    }
    r.push("solver/equal-objective-on-equivalent-pairs", sep_bad == 0, format!("{sep_bad} of {} pairs fail", pairs.len()));

    // The optimal point is constant on each stable variable block.
    let mut cases: Vec<LcqpInstance> = vec![cover_ring().base, cover_triangles().base, symmetric_pair_instance().base];
    for _ in 0..10 {
        cases.push(patterned_instance(&mut rng, 4, 8));
    }
    let (mut const_bad, mut nontrivial) = (0, 0);
    for inst in &cases {
        let s = solve_lcqp(inst)?;
        let Some(x) = s.x_star else { continue };
        let part = stable_partition(&encode_lcqp(inst)?, WlVariant::LcqpSum);
        for b in part.variable_blocks.iter().filter(|b| b.len() > 1) {
            nontrivial += 1;
            if b.iter().any(|&j| (x[j] - x[b[0]]).abs() > 1e-6) {
                const_bad += 1;
            }
        }
    }
    r.push(
        "solver/solution-constant-on-blocks",
        const_bad == 0 && nontrivial > 0,
        format!("{const_bad} of {nontrivial} non-singleton blocks vary"),
    );
    Ok(())
}

fn gnn_checks(seed: u64, r: &mut Report) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x66);
    let mut perm_gap = 0.0f64;
    for k in 0..10u64 {
        let mi = gen_milcqp_with(&small_milcqp_config(seed), &mut stream_rng(seed, k))?;
        for kind in [GraphKind::Lcqp, GraphKind::Milcqp] {
            let g = match kind {
                GraphKind::Lcqp => encode_lcqp(&mi.base)?,
                GraphKind::Milcqp => encode_milcqp(&mi)?,
            };
            let p = VertexPermutation::random(g.m(), g.n(), &mut rng);
            let pg = permute(&g, &p)?;
            let pg_params = |head| init_params(GnnConfig::new(2, 6, kind, head).expect("sizes"), seed + k);
            let gp = pg_params(Head::Graph)?;
            perm_gap = perm_gap.max((forward_graph(&gp, &g)? - forward_graph(&gp, &pg)?).abs());
            let np = pg_params(Head::Node)?;
            let (y, py) = (forward_node(&np, &g)?, forward_node(&np, &pg)?);
            for (j, &target) in p.variable_map().iter().enumerate() {
                perm_gap = perm_gap.max((y[j] - py[target]).abs());
            }
        }
    }
    r.push("gnn/permutation-symmetry", perm_gap <= 1e-10, format!("max deviation {perm_gap:e}"));

    let mut wl_gap = 0.0f64;
    for pair in corpus() {
        let (a, b) = (encode_milcqp(&pair.first)?, encode_milcqp(&pair.second)?);
        for draw in 0..20u64 {
            let p = init_params(GnnConfig::new(3, 8, GraphKind::Milcqp, Head::Graph)?, seed * 31 + draw)?;
            let (fa, fb) = (forward_graph(&p, &a)?, forward_graph(&p, &b)?);
            wl_gap = wl_gap.max((fa - fb).abs() / (1.0 + fa.abs()));
        }
    }
    r.push("gnn/wl-equivalent-equal-outputs", wl_gap <= 1e-8, format!("max scaled gap {wl_gap:e}"));

    let mut class_gap = 0.0f64;
    let mut graphs: Vec<QpGraph> = vec![encode_milcqp(&symmetric_pair_instance())?];
    for pair in corpus() {
        graphs.push(encode_milcqp(&pair.first)?);
        graphs.push(encode_milcqp(&pair.second)?);
    }
    for g in &graphs {
        let part = stable_partition(g, WlVariant::MilcqpMultiset);
        for draw in 0..5u64 {
            let p = init_params(GnnConfig::new(2, 8, GraphKind::Milcqp, Head::Node)?, seed * 17 + draw)?;
            let y = forward_node(&p, g)?;
            for b in &part.variable_blocks {
                for &j in b {
                    class_gap = class_gap.max((y[j] - y[b[0]]).abs());
                }
            }
        }
    }
    r.push("gnn/node-outputs-constant-on-classes", class_gap <= 1e-8, format!("max spread {class_gap:e}"));

    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0, 0);
    for (cfg, s) in gradient_configs(seed) {
        let g = gradient_check(cfg, s)?;
        worst = worst.max(g.worst_rel_err);
        checked += g.checked;
        skipped += g.skipped;
    }
    r.push(
        "gnn/gradient-check",
        worst < 1e-4 && checked > 0,
        format!("max relative error {worst:e} over 10 configurations ({checked} coordinates, {skipped} skipped at kinks)"),
    );
    Ok(())
}

fn generator_checks(seed: u64, r: &mut Report) -> Result<()> {
    let cfg = GenConfig::generic_lcqp(seed);
    let again = gen_lcqp_with(&cfg, &mut stream_rng(seed, 3))?;
    r.push(
        "generator/deterministic",
        again == gen_lcqp_with(&cfg, &mut stream_rng(seed, 3))?,
        "",
    );

    let (mut cs, mut avals, mut bs) = (Vec::new(), Vec::new(), Vec::new());
    let mut k = 0u64;
    while bs.len() < 10_000 {
        let inst = gen_lcqp_with(&cfg, &mut stream_rng(seed, k))?;
        if cs.len() < 10_000 {
            cs.extend(inst.c.iter().copied());
        }
        if avals.len() < 10_000 {
            avals.extend(inst.a.entries().iter().map(|e| e.2));
        }
        bs.extend(inst.b.iter().copied());
        k += 1;
    }
    let mut moment_detail = Vec::new();
    let mut moments_ok = true;
    for (name, vals, sigma) in [("c", &cs, cfg.c_sigma), ("A", &avals, cfg.a_sigma), ("b", &bs, cfg.b_sigma)] {
        let vals = &vals[..10_000];
        let nn = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / nn;
        let var = vals.iter().map(|v| v * v).sum::<f64>() / nn;
        let ok = mean.abs() <= 3.0 * sigma / nn.sqrt()
            && (var - sigma * sigma).abs() <= 3.0 * sigma * sigma * (2.0 / nn).sqrt();
        moments_ok &= ok;
        moment_detail.push(format!("{name}: mean {mean:.4}, second moment {var:.4}"));
    }
    r.push("generator/moments", moments_ok, moment_detail.join("; "));

    let mi = GenConfig::generic_milcqp(seed);
    let (mut ints, mut total) = (0usize, 0usize);
    for k in 0..500u64 {
        let inst = gen_milcqp_with(&mi, &mut stream_rng(seed, k))?;
        ints += inst.integers.len();
        total += inst.n();
    }
    let ratio = ints as f64 / total as f64;
    let band = 3.0 * (0.25 / total as f64).sqrt();
    r.push(
        "generator/integer-ratio",
        (ratio - 0.5).abs() <= band,
        format!("{ratio:.4} over {total} variables (band {band:.4})"),
    );

    let mut density = 0.0;
    for s in 0..20u64 {
        let q: SparseMatrix = make_sparse_spd(50, 0.95, seed * 1000 + s);
        density += q.nnz() as f64 / 2500.0;
    }
    density /= 20.0;
    r.push(
        "generator/q-density",
        (0.04..=0.16).contains(&density),
        format!("mean density {density:.4} over 20 seeds"),
    );
    Ok(())
}

/// Every property check, each as one report entry.
pub fn run_property_suite(seed: u64) -> Result<Report> {
    let mut r = Report::default();
    instance_checks(seed, &mut r)?;
    graph_checks(seed, &mut r)?;
    wl_checks(seed, &mut r)?;
    tractability_checks(seed, &mut r)?;
    solver_checks(seed, &mut r)?;
    gnn_checks(seed, &mut r)?;
    generator_checks(seed, &mut r)?;
    r.extend(verify_counterexamples(seed)?);
    Ok(r)
}

//! Random instance families.
//!
//! All sampling uses ChaCha8 seeded from a `u64`; instance `k` of a dataset
//! draws from stream `k` of the same key, so datasets are reproducible on
//! every platform and any prefix of a dataset is itself a dataset.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{LcqpInstance, MilcqpInstance, Sense, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub m: usize,
    pub n: usize,
    /// Probability that an off-diagonal entry of the Cholesky factor is zero.
    pub alpha: f64,
    pub nnz_a: usize,
    pub c_sigma: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub bound_sigma: f64,
    pub eq_prob: f64,
    pub integer_prob: f64,
    /// Bounds are clipped to `[-clip, clip]` when set.
    pub bound_clip: Option<f64>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::generic_lcqp(0)
    }
}

impl GenConfig {
    pub fn generic_lcqp(seed: u64) -> Self {
        Self {
            m: 10,
            n: 50,
            alpha: 0.95,
            nnz_a: 100,
            c_sigma: 0.1,
            a_sigma: 1.0,
            b_sigma: 1.0,
            bound_sigma: 10.0,
            eq_prob: 0.3,
            integer_prob: 0.0,
            bound_clip: None,
            seed,
        }
    }

    /// Mixed-integer family sized for the exact solvers: `m = 10, n = 20`,
    /// bounds clipped to `[-3, 3]`.
    pub fn generic_milcqp(seed: u64) -> Self {
        Self {
            n: 20,
            nnz_a: 40,
            integer_prob: 0.5,
            bound_clip: Some(3.0),
            ..Self::generic_lcqp(seed)
        }
    }

    /// Rescaled distributions used when only `c` varies.
    pub fn fixed_c(seed: u64) -> Self {
        let n = 50;
        let s = (1.0 / n as f64).sqrt();
        Self {
            c_sigma: s,
            a_sigma: s,
            b_sigma: s,
            bound_sigma: 1.0,
            ..Self::generic_lcqp(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("eq_prob", self.eq_prob)?;
        unit("integer_prob", self.integer_prob)?;
        if self.n == 0 {
            return Err(Error::Config("n must be positive".to_string()));
        }
        if self.nnz_a > self.m * self.n {
            return Err(Error::Config(format!(
                "nnz_a = {} exceeds m * n = {}",
                self.nnz_a,
                self.m * self.n
            )));
        }
        for (name, v) in [
            ("c_sigma", self.c_sigma),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("bound_sigma", self.bound_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if let Some(clip) = self.bound_clip {
            if !(clip >= 0.0 && clip.is_finite()) {
                return Err(Error::Config(format!("bound_clip = {clip} must be finite")));
            }
        }
        Ok(())
    }
}

/// Generator for item `index` of the dataset keyed by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated")
}

/// `B B'` with `B` unit lower triangular; each off-diagonal entry of `B` is
/// zero with probability `alpha` and otherwise uniform on
/// `[-1, -0.25] U [0.25, 1]`.
pub fn make_sparse_spd_with<R: Rng>(n: usize, alpha: f64, rng: &mut R) -> SparseMatrix {
    let mut b = vec![vec![0.0; n]; n];
    for (i, row) in b.iter_mut().enumerate() {
        row[i] = 1.0;
        for v in row.iter_mut().take(i) {
            if rng.gen::<f64>() >= alpha {
                let mag = rng.gen_range(0.25..=1.0);
                *v = if rng.gen::<bool>() { mag } else { -mag };
            }
        }
    }
    // Row i of B has support {k <= i}; (B B')_{ij} = sum_k B_ik B_jk.
    let support: Vec<Vec<usize>> = b
        .iter()
        .map(|row| (0..n).filter(|&k| row[k] != 0.0).collect())
        .collect();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (short, other) = if support[i].len() <= support[j].len() { (i, j) } else { (j, i) };
            let v: f64 = support[short].iter().map(|&k| b[short][k] * b[other][k]).sum();
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
    }
    let q = SparseMatrix::from_triplets(n, n, triplets).expect("valid triplets");
    // Sums are evaluated in the same order for (i, j) and (j, i), so the
    // result is exactly symmetric.
    debug_assert!(q.is_symmetric());
    q
}

pub fn make_sparse_spd(n: usize, alpha: f64, seed: u64) -> SparseMatrix {
    make_sparse_spd_with(n, alpha, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_bounds<R: Rng>(cfg: &GenConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let dist = normal(cfg.bound_sigma);
    let mut lower = Vec::with_capacity(cfg.n);
    let mut upper = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let (mut l, mut u) = (dist.sample(rng), dist.sample(rng));
        if l > u {
            std::mem::swap(&mut l, &mut u);
        }
        if let Some(clip) = cfg.bound_clip {
            l = l.clamp(-clip, clip);
            u = u.clamp(-clip, clip);
        }
        lower.push(l);
        upper.push(u);
    }
    (lower, upper)
}

fn sample_a<R: Rng>(cfg: &GenConfig, rng: &mut R) -> SparseMatrix {
    let dist = normal(cfg.a_sigma);
    let mut positions: Vec<usize> = sample(rng, cfg.m * cfg.n, cfg.nnz_a).into_vec();
    positions.sort_unstable();
    let triplets: Vec<(usize, usize, f64)> = positions
        .into_iter()
        .map(|p| (p / cfg.n, p % cfg.n, dist.sample(rng)))
        .collect();
    SparseMatrix::from_triplets(cfg.m, cfg.n, triplets).expect("distinct positions")
}

fn sample_senses<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Vec<Sense> {
    (0..cfg.m)
        .map(|_| if rng.gen::<f64>() < cfg.eq_prob { Sense::Eq } else { Sense::Le })
        .collect()
}

fn sample_vec<R: Rng>(len: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let dist = normal(sigma);
    (0..len).map(|_| dist.sample(rng)).collect()
}

fn lcqp_from_rng<R: Rng>(cfg: &GenConfig, rng: &mut R) -> LcqpInstance {
    let q = make_sparse_spd_with(cfg.n, cfg.alpha, rng);
    let c = sample_vec(cfg.n, cfg.c_sigma, rng);
    let a = sample_a(cfg, rng);
    let b = sample_vec(cfg.m, cfg.b_sigma, rng);
    let senses = sample_senses(cfg, rng);
    let (lower, upper) = sample_bounds(cfg, rng);
    let mut inst = LcqpInstance::new(q, c, a, b, senses, lower, upper).expect("consistent sizes");
    if let Some(clip) = cfg.bound_clip {
        inst.metadata.insert("bounds_clipped".to_string(), format!("{clip}"));
    }
    inst
}

pub fn gen_lcqp_with<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Result<LcqpInstance> {
    cfg.validate()?;
    Ok(lcqp_from_rng(cfg, rng))
}

/// Single instance drawn from stream 0 of `cfg.seed`.
pub fn gen_lcqp(cfg: &GenConfig) -> Result<LcqpInstance> {
    gen_lcqp_with(cfg, &mut stream_rng(cfg.seed, 0))
}

pub fn gen_milcqp_with<R: Rng>(cfg: &GenConfig, rng: &mut R) -> Result<MilcqpInstance> {
    cfg.validate()?;
    let base = lcqp_from_rng(cfg, rng);
    let integers: BTreeSet<usize> =
        (0..cfg.n).filter(|_| rng.gen::<f64>() < cfg.integer_prob).collect();
    MilcqpInstance::new(base, integers)
}

pub fn gen_milcqp(cfg: &GenConfig) -> Result<MilcqpInstance> {
    gen_milcqp_with(cfg, &mut stream_rng(cfg.seed, 0))
}

/// Instances `0..count` of the dataset keyed by `cfg.seed`.
pub fn gen_lcqp_dataset(cfg: &GenConfig, count: usize) -> Result<Vec<LcqpInstance>> {
    cfg.validate()?;
    Ok((0..count as u64)
        .map(|k| lcqp_from_rng(cfg, &mut stream_rng(cfg.seed, k)))
        .collect())
}

pub fn gen_milcqp_dataset(cfg: &GenConfig, count: usize) -> Result<Vec<MilcqpInstance>> {
    (0..count as u64)
        .map(|k| gen_milcqp_with(cfg, &mut stream_rng(cfg.seed, k)))
        .collect()
}

/// `Q, A, b`, senses and bounds come from stream 0; instance `k` replaces
/// `c` with a draw from stream `k + 1`.
pub fn gen_fixed_structure(cfg: &GenConfig, count: usize) -> Result<Vec<LcqpInstance>> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".to_string()));
    }
    cfg.validate()?;
    let template = lcqp_from_rng(cfg, &mut stream_rng(cfg.seed, 0));
    Ok((0..count as u64)
        .map(|k| {
            let mut inst = template.clone();
            inst.c = sample_vec(cfg.n, cfg.c_sigma, &mut stream_rng(cfg.seed, k + 1));
            inst
        })
        .collect())
}

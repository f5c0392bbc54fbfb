use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{gen_fixed_structure, gen_lcqp_with, gen_milcqp_with, stream_rng, GenConfig};
use crate::gnn::{
    evaluate, init_params, train, write_checkpoint, write_history_csv, Checkpoint, EpochRecord,
    GnnConfig, Head, LabeledSet, Schedule,
};
use crate::graph::{encode, GraphKind};
use crate::instance::{LcqpInstance, MilcqpInstance, QpInstance};
use crate::solver::{solve_lcqp, solve_milcqp, Status, DEFAULT_NODE_BUDGET};

use super::output::{write_rows, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Optimal objective value, one scalar per instance.
    FitObj,
    /// Minimum-norm optimal solution, one scalar per variable.
    FitSol,
}

impl Task {
    pub fn head(self) -> Head {
        match self {
            Task::FitObj => Head::Graph,
            Task::FitSol => Head::Node,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Solves every instance and keeps the ones with an optimum, labeled for
/// `task`. Also returns the indices that were kept.
pub fn label_instances(instances: &[QpInstance], task: Task) -> Result<(LabeledSet, Vec<usize>)> {
    let mut set = LabeledSet { graphs: Vec::new(), labels: Vec::new() };
    let mut kept = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let r = match inst {
            QpInstance::Lcqp(lp) => solve_lcqp(lp)?,
            QpInstance::Milcqp(mi) => solve_milcqp(mi, DEFAULT_NODE_BUDGET)?,
        };
        if r.status != Status::Optimal {
            continue;
        }
        let label = match task {
            Task::FitObj => vec![r.value.expect("optimal value")],
            Task::FitSol => r.x_star.expect("optimal point"),
        };
        set.graphs.push(encode(inst)?);
        set.labels.push(label);
        kept.push(k);
    }
    Ok((set, kept))
}

/// The first `count` instances of the LCQP family keyed by `seed` whose
/// optimum exists; infeasible streams are skipped.
pub fn desk_fit_instances(seed: u64, count: usize) -> Result<Vec<LcqpInstance>> {
    let cfg = GenConfig::generic_lcqp(seed);
    take_optimal(count, |k| {
        let inst = gen_lcqp_with(&cfg, &mut stream_rng(seed, k))?;
        Ok(solve_lcqp(&inst)?.status.eq(&Status::Optimal).then_some(inst))
    })
}

/// As [`desk_fit_instances`] for the mixed-integer family, also skipping
/// instances with more than 12 integer variables so that labels stay
/// cheap to compute exactly.
pub fn desk_milcqp_instances(seed: u64, count: usize) -> Result<Vec<MilcqpInstance>> {
    let cfg = GenConfig::generic_milcqp(seed);
    take_optimal(count, |k| {
        let inst = gen_milcqp_with(&cfg, &mut stream_rng(seed, k))?;
        if inst.integers.len() > 12 {
            return Ok(None);
        }
        let ok = solve_milcqp(&inst, DEFAULT_NODE_BUDGET)?.status == Status::Optimal;
        Ok(ok.then_some(inst))
    })
}

fn take_optimal<T>(count: usize, mut draw: impl FnMut(u64) -> Result<Option<T>>) -> Result<Vec<T>> {
    let limit = 100 * count as u64 + 1000;
    let mut out = Vec::with_capacity(count);
    let mut k = 0;
    while out.len() < count {
        if k == limit {
            return Err(Error::Config(format!(
                "only {} of {count} instances had an optimum after {limit} draws",
                out.len()
            )));
        }
        if let Some(inst) = draw(k)? {
            out.push(inst);
        }
        k += 1;
    }
    Ok(out)
}

/// Small mixed-integer family whose integer box is cheap to enumerate
/// (at most 5^6 points). About half of its instances have an optimum, the
/// rest are infeasible.
pub fn small_milcqp_config(seed: u64) -> GenConfig {
    GenConfig {
        m: 2,
        n: 6,
        alpha: 0.7,
        nnz_a: 6,
        c_sigma: 1.0,
        a_sigma: 1.0,
        b_sigma: 1.0,
        bound_sigma: 3.0,
        eq_prob: 0.1,
        integer_prob: 0.5,
        bound_clip: Some(2.0),
        seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub task: Task,
    pub problem: GraphKind,
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub layers: usize,
    pub schedule: Schedule,
}

impl FitSpec {
    pub fn desk(task: Task, problem: GraphKind) -> Self {
        Self {
            task,
            problem,
            widths: vec![16, 32, 64],
            seeds: vec![0, 1, 2],
            layers: 2,
            schedule: Schedule::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitRun {
    pub width: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_rel_err: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct FitRow {
    width: usize,
    seed: u64,
    best_epoch: usize,
    best_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
struct MedianRow {
    width: usize,
    median_best_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub runs: Vec<FitRun>,
    /// `(width, median best error over seeds)` in the order of the spec.
    pub medians: Vec<(usize, f64)>,
}

impl FitReport {
    pub fn medians_non_increasing(&self) -> bool {
        self.medians.windows(2).all(|w| w[1].1 <= w[0].1)
    }
}

/// Trains one model per width and seed on `data`. With `out_dir`, writes
/// per-run history CSVs and best checkpoints plus summary tables.
pub fn run_fit(
    spec: &FitSpec,
    data: &LabeledSet,
    out_dir: Option<&Path>,
    format: Format,
) -> Result<FitReport> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut runs = Vec::new();
    for &width in &spec.widths {
        for &seed in &spec.seeds {
            let cfg = GnnConfig::new(spec.layers, width, spec.problem, spec.task.head())?;
            let schedule = Schedule {
                shuffle_seed: spec.schedule.shuffle_seed.map(|s| s ^ seed),
                ..spec.schedule.clone()
            };
            let out = train(init_params(cfg, seed)?, data, None, &schedule)?;
            if let Some(dir) = out_dir {
                write_history_csv(&out.history, dir.join(format!("fit_w{width}_s{seed}.csv")))?;
                write_checkpoint(
                    &Checkpoint::new(&out.params, seed, out.best_epoch),
                    dir.join(format!("fit_w{width}_s{seed}.ckpt.json")),
                )?;
            }
            runs.push(FitRun {
                width,
                seed,
                best_epoch: out.best_epoch,
                best_rel_err: out.best_rel_err,
                history: out.history,
            });
        }
    }
    let medians: Vec<(usize, f64)> = spec
        .widths
        .iter()
        .map(|&w| {
            let errs: Vec<f64> =
                runs.iter().filter(|r| r.width == w).map(|r| r.best_rel_err).collect();
            (w, median(&errs))
        })
        .collect();
    if let Some(dir) = out_dir {
        let rows: Vec<FitRow> = runs
            .iter()
            .map(|r| FitRow {
                width: r.width,
                seed: r.seed,
                best_epoch: r.best_epoch,
                best_rel_err: r.best_rel_err,
            })
            .collect();
        let ext = format.extension();
        write_rows(&rows, format, Some(&dir.join(format!("fit_summary.{ext}"))))?;
        let med: Vec<MedianRow> = medians
            .iter()
            .map(|&(width, median_best_rel_err)| MedianRow { width, median_best_rel_err })
            .collect();
        write_rows(&med, format, Some(&dir.join(format!("fit_medians.{ext}"))))?;
    }
    Ok(FitReport { runs, medians })
}

/// Where the training and validation instances of a fixed-structure split
/// come from. Instance `k` uses stream `k + 1` of `dataset_seed` for `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitManifest {
    pub requested_seed: u64,
    /// First seed at or after `requested_seed` whose shared structure is
    /// feasible.
    pub dataset_seed: u64,
    pub train_instances: Vec<usize>,
    pub validation_instances: Vec<usize>,
}

impl SplitManifest {
    pub fn disjoint(&self) -> bool {
        let last_train = self.train_instances.iter().max();
        let first_val = self.validation_instances.iter().min();
        match (last_train, first_val) {
            (Some(t), Some(v)) => t < v,
            _ => true,
        }
    }
}

/// Instances sharing `Q, A, b` and bounds, differing in `c`: the first
/// `train` for training, the next `validation` held out.
pub fn fixed_structure_split(
    seed: u64,
    train: usize,
    validation: usize,
) -> Result<(Vec<LcqpInstance>, Vec<LcqpInstance>, SplitManifest)> {
    for offset in 0..1000 {
        let cfg = GenConfig::fixed_c(seed + offset);
        let template = gen_fixed_structure(&cfg, 1)?.remove(0);
        if solve_lcqp(&template)?.status != Status::Optimal {
            continue;
        }
        let mut all = gen_fixed_structure(&cfg, train + validation)?;
        let held = all.split_off(train);
        let manifest = SplitManifest {
            requested_seed: seed,
            dataset_seed: cfg.seed,
            train_instances: (0..train).collect(),
            validation_instances: (train..train + validation).collect(),
        };
        return Ok((all, held, manifest));
    }
    Err(Error::Config(format!("no feasible fixed structure near seed {seed}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationSpec {
    pub task: Task,
    pub sizes: Vec<usize>,
    pub validation: usize,
    pub width: usize,
    pub layers: usize,
    pub seeds: Vec<u64>,
    pub schedule: Schedule,
}

impl GeneralizationSpec {
    pub fn desk() -> Self {
        Self {
            task: Task::FitObj,
            sizes: vec![100, 500, 2000],
            validation: 200,
            width: 16,
            layers: 2,
            seeds: vec![0, 1, 2],
            schedule: Schedule {
                epochs: 40,
                batch_size: 100,
                shuffle_seed: Some(0),
                ..Schedule::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizationRow {
    pub train_size: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub train_err: f64,
    pub val_err: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GeneralizationMedian {
    train_size: usize,
    median_train_err: f64,
    median_val_err: f64,
}

#[derive(Debug, Clone)]
pub struct GeneralizationReport {
    pub rows: Vec<GeneralizationRow>,
    /// `(train_size, median train error, median validation error)`.
    pub medians: Vec<(usize, f64, f64)>,
    pub manifest: SplitManifest,
}

impl GeneralizationReport {
    /// Median validation error at the largest size is below the smallest's.
    pub fn improves(&self) -> bool {
        match (self.medians.first(), self.medians.last()) {
            (Some(a), Some(b)) if self.medians.len() > 1 => b.2 < a.2,
            _ => false,
        }
    }
}

/// Trains one width on growing prefixes of a fixed-structure dataset and
/// measures the error on a held-out set of the same structure.
pub fn run_generalization(
    spec: &GeneralizationSpec,
    data_seed: u64,
    out_dir: Option<&Path>,
    format: Format,
) -> Result<GeneralizationReport> {
    let largest = spec.sizes.iter().copied().max().unwrap_or(0);
    if largest == 0 || spec.validation == 0 {
        return Err(Error::Config("sizes and validation count must be positive".to_string()));
    }
    let (train_all, held, manifest) = fixed_structure_split(data_seed, largest, spec.validation)?;
    let wrap = |v: Vec<LcqpInstance>| v.into_iter().map(QpInstance::Lcqp).collect::<Vec<_>>();
    let (train_set, kept) = label_instances(&wrap(train_all), spec.task)?;
    let (val_set, _) = label_instances(&wrap(held), spec.task)?;
    if kept.len() != largest {
        return Err(Error::Numerical(format!(
            "{} of {largest} fixed-structure instances lack an optimum",
            largest - kept.len()
        )));
    }

    let mut rows = Vec::new();
    for &size in &spec.sizes {
        let prefix = LabeledSet {
            graphs: train_set.graphs[..size].to_vec(),
            labels: train_set.labels[..size].to_vec(),
        };
        for &seed in &spec.seeds {
            let cfg = GnnConfig::new(spec.layers, spec.width, GraphKind::Lcqp, spec.task.head())?;
            let schedule = Schedule {
                shuffle_seed: spec.schedule.shuffle_seed.map(|s| s ^ seed),
                ..spec.schedule.clone()
            };
            let out = train(init_params(cfg, seed)?, &prefix, None, &schedule)?;
            let val_err = evaluate(&out.params, &val_set, schedule.batch_size)?;
            rows.push(GeneralizationRow {
                train_size: size,
                seed,
                best_epoch: out.best_epoch,
                train_err: out.best_rel_err,
                val_err,
            });
        }
    }
    let medians: Vec<(usize, f64, f64)> = spec
        .sizes
        .iter()
        .map(|&s| {
            let of = |f: fn(&GeneralizationRow) -> f64| {
                median(&rows.iter().filter(|r| r.train_size == s).map(f).collect::<Vec<_>>())
            };
            (s, of(|r| r.train_err), of(|r| r.val_err))
        })
        .collect();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ext = format.extension();
        write_rows(&rows, format, Some(&dir.join(format!("generalization.{ext}"))))?;
        let med: Vec<GeneralizationMedian> = medians
            .iter()
            .map(|&(train_size, median_train_err, median_val_err)| GeneralizationMedian {
                train_size,
                median_train_err,
                median_val_err,
            })
            .collect();
        write_rows(&med, format, Some(&dir.join(format!("generalization_medians.{ext}"))))?;
        let path = dir.join("split_manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(GeneralizationReport { rows, medians, manifest })
}

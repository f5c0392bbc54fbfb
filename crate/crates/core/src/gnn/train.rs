//! Adam training with the plateau rule, checkpoints and history files.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::model::{forward_batch, loss_and_grad, relative_errors};
use super::{GnnConfig, GnnParams, Head};
use crate::error::{Error, Result};
use crate::graph::QpGraph;

/// Graphs with one label vector each: length 1 for the graph head, `n` for
/// the node head.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub graphs: Vec<QpGraph>,
    pub labels: Vec<Vec<f64>>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    fn check(&self, head: Head) -> Result<()> {
        if self.graphs.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} graphs but {} labels",
                self.graphs.len(),
                self.labels.len()
            )));
        }
        for (k, (g, l)) in self.graphs.iter().zip(&self.labels).enumerate() {
            let want = match head {
                Head::Graph => 1,
                Head::Node => g.n(),
            };
            if l.len() != want {
                return Err(Error::Dimension(format!(
                    "instance {k}: label length {}, expected {want}",
                    l.len()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("instance {k}: non-finite label")));
            }
        }
        Ok(())
    }

    fn batch(&self, idx: &[usize]) -> Result<(GraphBatch, Vec<f64>)> {
        let graphs: Vec<&QpGraph> = idx.iter().map(|&k| &self.graphs[k]).collect();
        let labels = idx.iter().flat_map(|&k| self.labels[k].iter().copied()).collect();
        Ok((GraphBatch::new(&graphs)?, labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub lr: f64,
    /// Epochs without improvement before the learning rate is halved and
    /// the best parameters restored.
    pub patience: usize,
    pub batch_size: usize,
    /// Reshuffle the training set every epoch (only matters with several
    /// batches).
    pub shuffle_seed: Option<u64>,
    /// Evaluate the validation set every this many epochs.
    pub eval_every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 5e-4,
            patience: 50,
            batch_size: 2500,
            shuffle_seed: None,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_rel_err: f64,
    pub val_rel_err: Option<f64>,
    pub best_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest training error seen.
    pub params: GnnParams,
    pub best_epoch: usize,
    pub best_rel_err: f64,
    pub history: Vec<EpochRecord>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean relative error of `params` on `set`.
pub fn evaluate(params: &GnnParams, set: &LabeledSet, batch_size: usize) -> Result<f64> {
    set.check(params.config.head)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (batch, labels) = set.batch(chunk)?;
        let out = forward_batch(params, &batch)?;
        let (preds, labs): (Vec<&[f64]>, Vec<&[f64]>) = match params.config.head {
            Head::Graph => (out.chunks(1).collect(), labels.chunks(1).collect()),
            Head::Node => (0..batch.num_graphs)
                .map(|g| (&out[batch.variable_range(g)], &labels[batch.variable_range(g)]))
                .unzip(),
        };
        total += relative_errors(&preds, &labs).iter().sum::<f64>();
    }
    Ok(total / set.len() as f64)
}

pub fn train(
    init: GnnParams,
    train_set: &LabeledSet,
    validation: Option<&LabeledSet>,
    schedule: &Schedule,
) -> Result<TrainOutcome> {
    train_set.check(init.config.head)?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".to_string()));
    }
    let bs = schedule.batch_size.max(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffler = schedule.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    // Without shuffling the batches never change, so build them once.
    let fixed: Option<Vec<(GraphBatch, Vec<f64>)>> = if shuffler.is_none() {
        Some(order.chunks(bs).map(|c| train_set.batch(c)).collect::<Result<_>>()?)
    } else {
        None
    };

    let mut params = init;
    let mut adam = Adam::new(params.len());
    let mut lr = schedule.lr;
    let mut best = params.clone();
    let mut best_err = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::with_capacity(schedule.epochs);

    for epoch in 1..=schedule.epochs {
        let start = params.clone();
        let mut err_sum = 0.0;
        let mut run = |batch: &GraphBatch, labels: &[f64], params: &mut GnnParams| -> Result<()> {
            let (report, grad) = loss_and_grad(params, batch, labels)?;
            if !report.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss = {}", report.loss),
                });
            }
            err_sum += report.rel_err * batch.num_graphs as f64;
            adam.step(&mut params.values, &grad, lr);
            Ok(())
        };
        match (&fixed, shuffler.as_mut()) {
            (Some(batches), _) => {
                for (b, l) in batches {
                    run(b, l, &mut params)?;
                }
            }
            (None, Some(rng)) => {
                order.shuffle(rng);
                for chunk in order.chunks(bs) {
                    let (b, l) = train_set.batch(chunk)?;
                    run(&b, &l, &mut params)?;
                }
            }
            (None, None) => unreachable!("batches are fixed when not shuffling"),
        }
        let err = err_sum / train_set.len() as f64;
        if err < best_err {
            best_err = err;
            best = start;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.patience {
                lr *= 0.5;
                params = best.clone();
                adam = Adam::new(params.len());
                stale = 0;
            }
        }
        let val_rel_err = match validation {
            Some(v) if schedule.eval_every > 0 && epoch % schedule.eval_every == 0 => {
                Some(evaluate(&best, v, bs)?)
            }
            _ => None,
        };
        history.push(EpochRecord { epoch, lr, train_rel_err: err, val_rel_err, best_rel_err: best_err });
    }
    Ok(TrainOutcome { params: best, best_epoch, best_rel_err: best_err, history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: GnnConfig,
    pub values: Vec<f64>,
    pub seed: u64,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn new(params: &GnnParams, seed: u64, epoch: usize) -> Self {
        Self { config: params.config, values: params.values.clone(), seed, epoch }
    }

    pub fn params(&self) -> Result<GnnParams> {
        let p = GnnParams { config: self.config, values: self.values.clone() };
        if p.layout().total != p.values.len() {
            return Err(Error::Dimension(format!(
                "checkpoint holds {} values, configuration needs {}",
                p.values.len(),
                p.layout().total
            )));
        }
        Ok(p)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(ckpt).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Rows `epoch,lr,train_rel_err,val_rel_err`; the last column is empty on
/// epochs without validation.
pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["epoch", "lr", "train_rel_err", "val_rel_err"])
        .map_err(|e| csv_error(path, e))?;
    for r in history {
        let val = r.val_rel_err.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.epoch.to_string(), r.lr.to_string(), r.train_rel_err.to_string(), val])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::gnn::init_params;
    use crate::graph::{encode_lcqp, GraphKind};

    #[test]
    fn plateau_halves_rate_and_best_is_monotone() {
        let g = encode_lcqp(corpus::cover_ring().relaxation()).unwrap();
        let set = LabeledSet { graphs: vec![g], labels: vec![vec![3.75]] };
        let cfg = GnnConfig::new(1, 4, GraphKind::Lcqp, Head::Graph).unwrap();
        let schedule = Schedule { epochs: 300, lr: 0.05, patience: 5, ..Schedule::default() };
        let out = train(init_params(cfg, 1).unwrap(), &set, None, &schedule).unwrap();
        let best: Vec<f64> = out.history.iter().map(|r| r.best_rel_err).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.history.iter().any(|r| r.lr < 0.05));
        assert_eq!(out.best_rel_err, evaluate(&out.params, &set, 1).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = GnnConfig::new(1, 3, GraphKind::Milcqp, Head::Node).unwrap();
        let p = init_params(cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        write_checkpoint(&Checkpoint::new(&p, 5, 0), &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap().params().unwrap(), p);
    }
}

//! Message-passing GNN on QP graphs, with hand-written backpropagation.
//!
//! Every learnable map is stored in one flat parameter vector; [`Layout`]
//! records where each weight matrix and bias lives. The embedding maps are
//! a linear layer followed by ReLU, every other map is a two-layer MLP with
//! a ReLU hidden layer of the embedding width and a linear output.

mod batch;
mod model;
mod train;

pub use batch::{GraphBatch, CONSTRAINT_FEATURES};
pub use model::{
    forward_batch, forward_graph, forward_node, loss_and_grad, loss_msre, relative_errors,
    ActivationPattern, LossReport,
};
pub use train::{
    evaluate, read_checkpoint, train, write_checkpoint, write_history_csv, Checkpoint, EpochRecord,
    LabeledSet, Schedule, TrainOutcome,
};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// One scalar per graph.
    Graph,
    /// One scalar per variable node.
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub width: usize,
    pub variant: GraphKind,
    pub head: Head,
}

impl GnnConfig {
    pub fn new(layers: usize, width: usize, variant: GraphKind, head: Head) -> Result<Self> {
        let cfg = Self { layers, width, variant, head };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "GNN needs at least one layer and positive width (got L = {}, d = {})",
                self.layers, self.width
            )));
        }
        Ok(())
    }

    pub fn variable_features(&self) -> usize {
        match self.variant {
            GraphKind::Lcqp => 5,
            GraphKind::Milcqp => 6,
        }
    }

    /// Input width of the message maps `g`: the MI-LCQP variant also sees
    /// the edge weight.
    fn message_input(&self) -> usize {
        match self.variant {
            GraphKind::Lcqp => self.width,
            GraphKind::Milcqp => self.width + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LinearSlot {
    pub offset: usize,
    pub out: usize,
    pub inp: usize,
}

impl LinearSlot {
    pub fn weight(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.out * self.inp
    }

    pub fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.out * self.inp;
        start..start + self.out
    }

    fn end(&self) -> usize {
        self.bias().end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MlpSlot {
    pub hidden: LinearSlot,
    pub output: LinearSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerSlots {
    pub f_v: MlpSlot,
    pub f_w: MlpSlot,
    pub g_v: MlpSlot,
    pub g_w: MlpSlot,
    pub g_q: MlpSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub embed_v: LinearSlot,
    pub embed_w: LinearSlot,
    pub layers: Vec<LayerSlots>,
    pub head: MlpSlot,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &GnnConfig) -> Self {
        let d = cfg.width;
        let mut next = 0;
        let mut linear = |out: usize, inp: usize| {
            let slot = LinearSlot { offset: next, out, inp };
            next = slot.end();
            slot
        };
        let embed_v = linear(d, CONSTRAINT_FEATURES);
        let embed_w = linear(d, cfg.variable_features());
        let mut mlp = |inp: usize, out: usize| MlpSlot {
            hidden: linear(d, inp),
            output: linear(out, d),
        };
        let gin = cfg.message_input();
        let layers = (0..cfg.layers)
            .map(|_| LayerSlots {
                f_v: mlp(2 * d, d),
                f_w: mlp(3 * d, d),
                g_v: mlp(gin, d),
                g_w: mlp(gin, d),
                g_q: mlp(gin, d),
            })
            .collect();
        let head = match cfg.head {
            Head::Graph => mlp(2 * d, 1),
            Head::Node => mlp(3 * d, 1),
        };
        Self { embed_v, embed_w, layers, head, total: next }
    }

    fn linears(&self) -> Vec<LinearSlot> {
        let mut out = vec![self.embed_v, self.embed_w];
        for l in &self.layers {
            for m in [l.f_v, l.f_w, l.g_v, l.g_w, l.g_q] {
                out.extend([m.hidden, m.output]);
            }
        }
        out.extend([self.head.hidden, self.head.output]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub config: GnnConfig,
    pub values: Vec<f64>,
}

impl GnnParams {
    pub fn zeros(config: GnnConfig) -> Result<Self> {
        config.validate()?;
        let total = Layout::new(&config).total;
        Ok(Self { config, values: vec![0.0; total] })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Weight matrix of the `k`-th linear map in storage order, as
    /// `(out, in, row-major entries)`.
    pub fn linear_weights(&self) -> Vec<(usize, usize, &[f64])> {
        self.layout()
            .linears()
            .into_iter()
            .map(|s| (s.out, s.inp, &self.values[s.weight()]))
            .collect()
    }
}

/// (Semi-)orthogonal `out x inp` matrix, row-major: orthonormal columns when
/// `out >= inp`, orthonormal rows otherwise.
fn orthogonal(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (rows, cols) = (out.max(inp), out.min(inp));
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..cols {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    let mut w = Vec::with_capacity(out * inp);
    for i in 0..out {
        for j in 0..inp {
            w.push(if out >= inp { q[(i, j)] } else { q[(j, i)] });
        }
    }
    w
}

/// Orthogonal weights with gain 1 and zero biases; deterministic in `seed`.
pub fn init_params(config: GnnConfig, seed: u64) -> Result<GnnParams> {
    let mut params = GnnParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slot in params.layout().linears() {
        let w = orthogonal(slot.out, slot.inp, &mut rng);
        params.values[slot.weight()].copy_from_slice(&w);
    }
    Ok(params)
}

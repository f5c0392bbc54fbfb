//! Numeric node features and block-diagonal batching.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{GraphKind, QpGraph};
use crate::instance::Sense;

/// `(b_i, [sense = <=], [sense = =], [sense = >=])`.
pub const CONSTRAINT_FEATURES: usize = 4;

/// Directed edge list: `dst` receives from `src` with weight `w`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Edges {
    pub dst: Vec<usize>,
    pub src: Vec<usize>,
    pub w: Vec<f64>,
}

impl Edges {
    fn push(&mut self, dst: usize, src: usize, w: f64) {
        self.dst.push(dst);
        self.src.push(src);
        self.w.push(w);
    }

    pub fn len(&self) -> usize {
        self.dst.len()
    }
}

/// Several graphs merged into one block-diagonal graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub kind: GraphKind,
    pub num_graphs: usize,
    pub(crate) xv: Array2<f64>,
    pub(crate) xw: Array2<f64>,
    pub(crate) v_graph: Vec<usize>,
    pub(crate) w_graph: Vec<usize>,
    /// Variable-node range of each graph.
    pub(crate) w_ranges: Vec<std::ops::Range<usize>>,
    /// Messages variable -> constraint along `A`.
    pub(crate) a_to_v: Edges,
    /// Messages constraint -> variable along `A`.
    pub(crate) a_to_w: Edges,
    /// Messages variable -> variable along `Q`.
    pub(crate) q_to_w: Edges,
}

/// Infinite bounds become value 0 with flag 0; finite ones keep their value
/// with flag 1.
fn bound_channels(v: f64) -> (f64, f64) {
    if v.is_finite() {
        (v, 1.0)
    } else {
        (0.0, 0.0)
    }
}

impl GraphBatch {
    pub fn new(graphs: &[&QpGraph]) -> Result<Self> {
        let kind = graphs
            .first()
            .ok_or_else(|| Error::Config("empty batch".to_string()))?
            .kind;
        if let Some(g) = graphs.iter().find(|g| g.kind != kind) {
            return Err(Error::VariantMismatch { expected: kind.name(), found: g.kind.name() });
        }
        let m: usize = graphs.iter().map(|g| g.m()).sum();
        let n: usize = graphs.iter().map(|g| g.n()).sum();
        let wf = match kind {
            GraphKind::Lcqp => 5,
            GraphKind::Milcqp => 6,
        };
        let mut xv = Array2::zeros((m, CONSTRAINT_FEATURES));
        let mut xw = Array2::zeros((n, wf));
        let mut batch = Self {
            kind,
            num_graphs: graphs.len(),
            xv: Array2::zeros((0, 0)),
            xw: Array2::zeros((0, 0)),
            v_graph: Vec::with_capacity(m),
            w_graph: Vec::with_capacity(n),
            w_ranges: Vec::with_capacity(graphs.len()),
            a_to_v: Edges::default(),
            a_to_w: Edges::default(),
            q_to_w: Edges::default(),
        };
        let (mut vo, mut wo) = (0, 0);
        for (g_idx, g) in graphs.iter().enumerate() {
            for (i, c) in g.constraints.iter().enumerate() {
                xv[(vo + i, 0)] = c.rhs;
                let k = match c.sense {
                    Sense::Le => 1,
                    Sense::Eq => 2,
                    Sense::Ge => 3,
                };
                xv[(vo + i, k)] = 1.0;
                batch.v_graph.push(g_idx);
            }
            for (j, v) in g.variables.iter().enumerate() {
                let (l, lf) = bound_channels(v.lower);
                let (u, uf) = bound_channels(v.upper);
                let row = [v.cost, l, lf, u, uf];
                for (k, x) in row.into_iter().enumerate() {
                    xw[(wo + j, k)] = x;
                }
                if kind == GraphKind::Milcqp {
                    xw[(wo + j, 5)] = if v.integer == Some(true) { 1.0 } else { 0.0 };
                }
                batch.w_graph.push(g_idx);
            }
            for &(i, j, a) in &g.a_edges {
                batch.a_to_v.push(vo + i, wo + j, a);
                batch.a_to_w.push(wo + j, vo + i, a);
            }
            for &(j, k, q) in &g.q_edges {
                batch.q_to_w.push(wo + j, wo + k, q);
            }
            batch.w_ranges.push(wo..wo + g.n());
            vo += g.m();
            wo += g.n();
        }
        batch.xv = xv;
        batch.xw = xw;
        Ok(batch)
    }

    pub fn single(graph: &QpGraph) -> Result<Self> {
        Self::new(&[graph])
    }

    pub fn num_constraints(&self) -> usize {
        self.v_graph.len()
    }

    pub fn num_variables(&self) -> usize {
        self.w_graph.len()
    }

    pub fn variable_range(&self, g: usize) -> std::ops::Range<usize> {
        self.w_ranges[g].clone()
    }
}

//! Forward pass, loss and reverse-mode gradients.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use super::batch::{Edges, GraphBatch};
use super::{GnnParams, Head, LinearSlot, MlpSlot};
use crate::error::{Error, Result};
use crate::graph::{GraphKind, QpGraph};

fn weight<'a>(p: &'a [f64], s: &LinearSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((s.out, s.inp), &p[s.weight()]).expect("slot shape")
}

fn bias<'a>(p: &'a [f64], s: &LinearSlot) -> ArrayView1<'a, f64> {
    ArrayView1::from(&p[s.bias()])
}

fn weight_mut<'a>(g: &'a mut [f64], s: &LinearSlot) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((s.out, s.inp), &mut g[s.weight()]).expect("slot shape")
}

fn bias_mut<'a>(g: &'a mut [f64], s: &LinearSlot) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut g[s.bias()])
}

/// Row-major copy unless already row-major; the edge loops index raw slices.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn linear(x: &ArrayView2<f64>, p: &[f64], s: &LinearSlot) -> Array2<f64> {
    let mut y = standard(x.dot(&weight(p, s).t()));
    y += &bias(p, s);
    y
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask(dx: &mut Array2<f64>, pre: &Array2<f64>) {
    dx.zip_mut_with(pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Accumulates `dW += dy' x` and `db += sum_rows dy`.
fn accumulate_linear(grad: &mut [f64], s: &LinearSlot, dy: &Array2<f64>, x: &ArrayView2<f64>) {
    general_mat_mul(1.0, &dy.t(), x, 1.0, &mut weight_mut(grad, s));
    bias_mut(grad, s).scaled_add(1.0, &dy.sum_axis(Axis(0)));
}

struct MlpCache {
    input: Array2<f64>,
    pre: Array2<f64>,
}

fn mlp_forward(x: Array2<f64>, p: &[f64], m: &MlpSlot) -> (Array2<f64>, MlpCache) {
    let pre = linear(&x.view(), p, &m.hidden);
    let y = linear(&relu(&pre).view(), p, &m.output);
    (y, MlpCache { input: x, pre })
}

fn mlp_backward(
    dy: &Array2<f64>,
    c: &MlpCache,
    p: &[f64],
    m: &MlpSlot,
    grad: &mut [f64],
) -> Array2<f64> {
    accumulate_linear(grad, &m.output, dy, &relu(&c.pre).view());
    let mut dpre = dy.dot(&weight(p, &m.output));
    relu_mask(&mut dpre, &c.pre);
    accumulate_linear(grad, &m.hidden, &dpre, &c.input.view());
    dpre.dot(&weight(p, &m.hidden))
}

/// Cache of one aggregated message `sum_e g(x_src(e) [, w_e])`.
///
/// The output layer of `g` is linear, so it is applied once per receiving
/// node to the aggregated hidden activations.
enum MessageCache {
    /// LCQP form: `sum_e w_e g(x_src)`.
    Weighted { input: Array2<f64>, pre: Array2<f64>, agg: Array2<f64>, weight_sum: Array1<f64> },
    /// MI-LCQP form: `sum_e g(x_src, w_e)`.
    PerEdge { input: Array2<f64>, pre: Array2<f64>, agg: Array2<f64>, degree: Array1<f64> },
}

fn message_forward(
    kind: GraphKind,
    x: &Array2<f64>,
    edges: &Edges,
    n_dst: usize,
    p: &[f64],
    m: &MlpSlot,
) -> (Array2<f64>, MessageCache) {
    let d = m.hidden.out;
    let mut agg = Array2::<f64>::zeros((n_dst, d));
    let mut counts = Array1::<f64>::zeros(n_dst);
    let cache = match kind {
        GraphKind::Lcqp => {
            let pre = linear(&x.view(), p, &m.hidden);
            let h = relu(&pre);
            let (hs, out) = (h.as_slice().unwrap(), agg.as_slice_mut().unwrap());
            for e in 0..edges.len() {
                let (dst, src, w) = (edges.dst[e], edges.src[e], edges.w[e]);
                let row = &hs[src * d..(src + 1) * d];
                for (o, v) in out[dst * d..(dst + 1) * d].iter_mut().zip(row) {
                    *o += w * v;
                }
                counts[dst] += w;
            }
            MessageCache::Weighted { input: x.clone(), pre, agg, weight_sum: counts }
        }
        GraphKind::Milcqp => {
            let w1 = weight(p, &m.hidden);
            let y = standard(x.dot(&w1.slice(s![.., ..d]).t()));
            let wa = w1.column(d).to_vec();
            let b1 = &p[m.hidden.bias()];
            let mut pre = Array2::<f64>::zeros((edges.len(), d));
            let (ys, ps, out) = (y.as_slice().unwrap(), pre.as_slice_mut().unwrap(), agg.as_slice_mut().unwrap());
            for e in 0..edges.len() {
                let (dst, src, w) = (edges.dst[e], edges.src[e], edges.w[e]);
                let z = &mut ps[e * d..(e + 1) * d];
                let yr = &ys[src * d..(src + 1) * d];
                let o = &mut out[dst * d..(dst + 1) * d];
                for k in 0..d {
                    z[k] = yr[k] + w * wa[k] + b1[k];
                    o[k] += z[k].max(0.0);
                }
                counts[dst] += 1.0;
            }
            MessageCache::PerEdge { input: x.clone(), pre, agg, degree: counts }
        }
    };
    let (agg, counts) = match &cache {
        MessageCache::Weighted { agg, weight_sum, .. } => (agg, weight_sum),
        MessageCache::PerEdge { agg, degree, .. } => (agg, degree),
    };
    let mut msg = agg.dot(&weight(p, &m.output).t());
    let b2 = bias(p, &m.output);
    for (mut row, &c) in msg.rows_mut().into_iter().zip(counts) {
        row.scaled_add(c, &b2);
    }
    (msg, cache)
}

/// Returns the gradient with respect to the source features.
fn message_backward(
    dmsg: &Array2<f64>,
    cache: &MessageCache,
    edges: &Edges,
    p: &[f64],
    m: &MlpSlot,
    grad: &mut [f64],
) -> Array2<f64> {
    let d = m.hidden.out;
    let (agg, counts) = match cache {
        MessageCache::Weighted { agg, weight_sum, .. } => (agg, weight_sum),
        MessageCache::PerEdge { agg, degree, .. } => (agg, degree),
    };
    general_mat_mul(1.0, &dmsg.t(), agg, 1.0, &mut weight_mut(grad, &m.output));
    bias_mut(grad, &m.output).scaled_add(1.0, &dmsg.t().dot(counts));
    let dagg = standard(dmsg.dot(&weight(p, &m.output)));
    let da = dagg.as_slice().unwrap();
    match cache {
        MessageCache::Weighted { input, pre, .. } => {
            let mut dpre = Array2::<f64>::zeros(pre.raw_dim());
            let dp = dpre.as_slice_mut().unwrap();
            for e in 0..edges.len() {
                let (dst, src, w) = (edges.dst[e], edges.src[e], edges.w[e]);
                let from = &da[dst * d..(dst + 1) * d];
                for (t, v) in dp[src * d..(src + 1) * d].iter_mut().zip(from) {
                    *t += w * v;
                }
            }
            relu_mask(&mut dpre, pre);
            accumulate_linear(grad, &m.hidden, &dpre, &input.view());
            dpre.dot(&weight(p, &m.hidden))
        }
        MessageCache::PerEdge { input, pre, .. } => {
            let n_src = input.nrows();
            let mut dy = Array2::<f64>::zeros((n_src, d));
            let mut dwa = vec![0.0; d];
            let mut db1 = vec![0.0; d];
            {
                let (dys, ps) = (dy.as_slice_mut().unwrap(), pre.as_slice().unwrap());
                for e in 0..edges.len() {
                    let (dst, src, w) = (edges.dst[e], edges.src[e], edges.w[e]);
                    let z = &ps[e * d..(e + 1) * d];
                    let from = &da[dst * d..(dst + 1) * d];
                    let to = &mut dys[src * d..(src + 1) * d];
                    for k in 0..d {
                        if z[k] > 0.0 {
                            let g = from[k];
                            to[k] += g;
                            dwa[k] += w * g;
                            db1[k] += g;
                        }
                    }
                }
            }
            let mut gw = weight_mut(grad, &m.hidden);
            general_mat_mul(1.0, &dy.t(), input, 1.0, &mut gw.slice_mut(s![.., ..d]));
            for k in 0..d {
                gw[(k, d)] += dwa[k];
            }
            for (g, v) in grad[m.hidden.bias()].iter_mut().zip(&db1) {
                *g += v;
            }
            dy.dot(&weight(p, &m.hidden).slice(s![.., ..d]))
        }
    }
}

struct LayerCache {
    to_v: MessageCache,
    a_to_w: MessageCache,
    q_to_w: MessageCache,
    f_v: MlpCache,
    f_w: MlpCache,
}

struct ForwardCache {
    embed_v_pre: Array2<f64>,
    embed_w_pre: Array2<f64>,
    layers: Vec<LayerCache>,
    head: MlpCache,
}

/// Per-graph row sums of node embeddings.
fn graph_sums(x: &Array2<f64>, owner: &[usize], graphs: usize) -> Array2<f64> {
    let mut out = Array2::zeros((graphs, x.ncols()));
    for (row, &g) in x.rows().into_iter().zip(owner) {
        out.row_mut(g).scaled_add(1.0, &row);
    }
    out
}

fn check_variant(params: &GnnParams, batch: &GraphBatch) -> Result<()> {
    if params.config.variant != batch.kind {
        return Err(Error::VariantMismatch {
            expected: params.config.variant.name(),
            found: batch.kind.name(),
        });
    }
    Ok(())
}

fn forward_cached(params: &GnnParams, batch: &GraphBatch) -> Result<(Vec<f64>, ForwardCache)> {
    check_variant(params, batch)?;
    let p = &params.values[..];
    let layout = params.layout();
    let kind = batch.kind;
    let (m, n) = (batch.num_constraints(), batch.num_variables());

    let embed_v_pre = linear(&batch.xv.view(), p, &layout.embed_v);
    let embed_w_pre = linear(&batch.xw.view(), p, &layout.embed_w);
    let mut sv = relu(&embed_v_pre);
    let mut tw = relu(&embed_w_pre);
    let mut layers = Vec::with_capacity(layout.layers.len());
    for l in &layout.layers {
        let (mv, to_v) = message_forward(kind, &tw, &batch.a_to_v, m, p, &l.g_w);
        let (mwa, a_to_w) = message_forward(kind, &sv, &batch.a_to_w, n, p, &l.g_v);
        let (mwq, q_to_w) = message_forward(kind, &tw, &batch.q_to_w, n, p, &l.g_q);
        let in_v = concatenate![Axis(1), sv, mv];
        let in_w = concatenate![Axis(1), tw, mwa, mwq];
        let (s_next, f_v) = mlp_forward(in_v, p, &l.f_v);
        let (t_next, f_w) = mlp_forward(in_w, p, &l.f_w);
        sv = s_next;
        tw = t_next;
        layers.push(LayerCache { to_v, a_to_w, q_to_w, f_v, f_w });
    }

    let sum_s = graph_sums(&sv, &batch.v_graph, batch.num_graphs);
    let sum_t = graph_sums(&tw, &batch.w_graph, batch.num_graphs);
    let head_in = match params.config.head {
        Head::Graph => concatenate![Axis(1), sum_s, sum_t],
        Head::Node => {
            let rows_s = sum_s.select(Axis(0), &batch.w_graph);
            let rows_t = sum_t.select(Axis(0), &batch.w_graph);
            concatenate![Axis(1), rows_s, rows_t, tw]
        }
    };
    let (out, head) = mlp_forward(head_in, p, &layout.head);
    let cache = ForwardCache { embed_v_pre, embed_w_pre, layers, head };
    Ok((out.column(0).to_vec(), cache))
}

fn backward(
    params: &GnnParams,
    batch: &GraphBatch,
    cache: &ForwardCache,
    dout: &[f64],
) -> Vec<f64> {
    let p = &params.values[..];
    let layout = params.layout();
    let d = params.config.width;
    let mut grad = vec![0.0; params.len()];

    let dy = Array2::from_shape_vec((dout.len(), 1), dout.to_vec()).expect("column");
    let dhead = mlp_backward(&dy, &cache.head, p, &layout.head, &mut grad);
    let (dsum_s, dsum_t, mut dt) = match params.config.head {
        Head::Graph => (
            dhead.slice(s![.., ..d]).to_owned(),
            dhead.slice(s![.., d..]).to_owned(),
            Array2::zeros((batch.num_variables(), d)),
        ),
        Head::Node => {
            let rows = dhead.slice(s![.., ..2 * d]).to_owned();
            let sums = graph_sums(&rows, &batch.w_graph, batch.num_graphs);
            (
                sums.slice(s![.., ..d]).to_owned(),
                sums.slice(s![.., d..]).to_owned(),
                dhead.slice(s![.., 2 * d..]).to_owned(),
            )
        }
    };
    let mut ds = dsum_s.select(Axis(0), &batch.v_graph);
    dt += &dsum_t.select(Axis(0), &batch.w_graph);

    for (l, c) in layout.layers.iter().zip(&cache.layers).rev() {
        let din_v = mlp_backward(&ds, &c.f_v, p, &l.f_v, &mut grad);
        let din_w = mlp_backward(&dt, &c.f_w, p, &l.f_w, &mut grad);
        let dmv = din_v.slice(s![.., d..]).to_owned();
        let dmwa = din_w.slice(s![.., d..2 * d]).to_owned();
        let dmwq = din_w.slice(s![.., 2 * d..]).to_owned();
        let mut ds_prev = din_v.slice(s![.., ..d]).to_owned();
        let mut dt_prev = din_w.slice(s![.., ..d]).to_owned();
        dt_prev += &message_backward(&dmv, &c.to_v, &batch.a_to_v, p, &l.g_w, &mut grad);
        dt_prev += &message_backward(&dmwq, &c.q_to_w, &batch.q_to_w, p, &l.g_q, &mut grad);
        ds_prev += &message_backward(&dmwa, &c.a_to_w, &batch.a_to_w, p, &l.g_v, &mut grad);
        ds = ds_prev;
        dt = dt_prev;
    }

    relu_mask(&mut ds, &cache.embed_v_pre);
    relu_mask(&mut dt, &cache.embed_w_pre);
    accumulate_linear(&mut grad, &layout.embed_v, &ds, &batch.xv.view());
    accumulate_linear(&mut grad, &layout.embed_w, &dt, &batch.xw.view());
    grad
}

/// Raw outputs: one per graph for the graph head, one per variable node for
/// the node head.
pub fn forward_batch(params: &GnnParams, batch: &GraphBatch) -> Result<Vec<f64>> {
    Ok(forward_cached(params, batch)?.0)
}

pub fn forward_graph(params: &GnnParams, graph: &QpGraph) -> Result<f64> {
    if params.config.head != Head::Graph {
        return Err(Error::Config("forward_graph needs a graph-level head".to_string()));
    }
    Ok(forward_batch(params, &GraphBatch::single(graph)?)?[0])
}

pub fn forward_node(params: &GnnParams, graph: &QpGraph) -> Result<Vec<f64>> {
    if params.config.head != Head::Node {
        return Err(Error::Config("forward_node needs a node-level head".to_string()));
    }
    forward_batch(params, &GraphBatch::single(graph)?)
}

/// Sign pattern of every ReLU pre-activation; finite differences are only
/// meaningful between parameter vectors sharing one pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern(Vec<bool>);

impl ActivationPattern {
    pub fn of(params: &GnnParams, batch: &GraphBatch) -> Result<Self> {
        let (_, c) = forward_cached(params, batch)?;
        let mut bits = Vec::new();
        let mut push = |a: &Array2<f64>| bits.extend(a.iter().map(|&v| v > 0.0));
        push(&c.embed_v_pre);
        push(&c.embed_w_pre);
        for l in &c.layers {
            for m in [&l.to_v, &l.a_to_w, &l.q_to_w] {
                match m {
                    MessageCache::Weighted { pre, .. } | MessageCache::PerEdge { pre, .. } => push(pre),
                }
            }
            push(&l.f_v.pre);
            push(&l.f_w.pre);
        }
        push(&c.head.pre);
        Ok(Self(bits))
    }
}

/// Splits batch outputs (or labels aligned with them) per graph.
fn per_graph<'a>(params: &GnnParams, batch: &GraphBatch, flat: &'a [f64]) -> Vec<&'a [f64]> {
    match params.config.head {
        Head::Graph => flat.chunks(1).collect(),
        Head::Node => (0..batch.num_graphs).map(|g| &flat[batch.variable_range(g)]).collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|pred - label| / max(|label|, 1)` per instance.
pub fn relative_errors(preds: &[&[f64]], labels: &[&[f64]]) -> Vec<f64> {
    preds
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let diff: Vec<f64> = p.iter().zip(*l).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(l).max(1.0)
        })
        .collect()
}

/// Mean over instances of `|pred - label|^2 / max(|label|, 1)^2`.
pub fn loss_msre(preds: &[&[f64]], labels: &[&[f64]]) -> f64 {
    let errs = relative_errors(preds, labels);
    errs.iter().map(|e| e * e).sum::<f64>() / errs.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// Mean relative error over the batch.
    pub rel_err: f64,
}

/// Loss, mean relative error and the exact gradient for one batch; `labels`
/// is aligned with [`forward_batch`]'s output.
pub fn loss_and_grad(
    params: &GnnParams,
    batch: &GraphBatch,
    labels: &[f64],
) -> Result<(LossReport, Vec<f64>)> {
    let (out, cache) = forward_cached(params, batch)?;
    if labels.len() != out.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} outputs",
            labels.len(),
            out.len()
        )));
    }
    let preds = per_graph(params, batch, &out);
    let labs = per_graph(params, batch, labels);
    let errs = relative_errors(&preds, &labs);
    let count = errs.len() as f64;
    let report = LossReport {
        loss: errs.iter().map(|e| e * e).sum::<f64>() / count,
        rel_err: errs.iter().sum::<f64>() / count,
    };
    let mut dout = vec![0.0; out.len()];
    let mut offset = 0;
    for (p, l) in preds.iter().zip(&labs) {
        let scale = 2.0 / (norm(l).max(1.0).powi(2) * count);
        for k in 0..p.len() {
            dout[offset + k] = scale * (p[k] - l[k]);
        }
        offset += p.len();
    }
    let grad = backward(params, batch, &cache, &dout);
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::gnn::{init_params, GnnConfig};
    use crate::graph::{encode_lcqp, encode_milcqp};

    #[test]
    fn msre_guard() {
        assert_eq!(loss_msre(&[&[1.5]], &[&[0.5]]), 1.0);
        assert_eq!(loss_msre(&[&[3.0]], &[&[2.0]]), 0.25);
        assert_eq!(loss_msre(&[&[2.0, 1.0]], &[&[2.0, 1.0]]), 0.0);
    }

    #[test]
    fn head_bias_gradient() {
        // With all weights zero the output is the head bias; d loss / d bias = 2 (y - phi).
        let cfg = GnnConfig::new(1, 3, GraphKind::Milcqp, Head::Graph).unwrap();
        let mut p = GnnParams::zeros(cfg).unwrap();
        let slot = p.layout().head.output;
        p.values[slot.bias()][0] = 0.7;
        let g = encode_milcqp(&corpus::cover_ring()).unwrap();
        let b = GraphBatch::single(&g).unwrap();
        let (r, grad) = loss_and_grad(&p, &b, &[0.2]).unwrap();
        assert!((r.loss - 0.25).abs() < 1e-15);
        assert!((grad[slot.bias()][0] - 1.0).abs() < 1e-15);
        let nonzero = grad.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn variant_mismatch() {
        let cfg = GnnConfig::new(1, 3, GraphKind::Lcqp, Head::Graph).unwrap();
        let p = init_params(cfg, 0).unwrap();
        let g = encode_milcqp(&corpus::cover_ring()).unwrap();
        assert!(matches!(forward_graph(&p, &g), Err(Error::VariantMismatch { .. })));
        let lg = encode_lcqp(corpus::cover_ring().relaxation()).unwrap();
        assert!(forward_graph(&p, &lg).is_ok());
        assert!(forward_node(&p, &lg).is_err());
    }

    #[test]
    fn batch_equals_individual() {
        for kind in [GraphKind::Lcqp, GraphKind::Milcqp] {
            let cfg = GnnConfig::new(2, 5, kind, Head::Node).unwrap();
            let p = init_params(cfg, 9).unwrap();
            let encode = |mi: crate::instance::MilcqpInstance| match kind {
                GraphKind::Lcqp => encode_lcqp(mi.relaxation()).unwrap(),
                GraphKind::Milcqp => encode_milcqp(&mi).unwrap(),
            };
            let g1 = encode(corpus::cover_ring());
            let g2 = encode(corpus::cycle_sum_first());
            let both = forward_batch(&p, &GraphBatch::new(&[&g1, &g2]).unwrap()).unwrap();
            let mut sep = forward_node(&p, &g1).unwrap();
            sep.extend(forward_node(&p, &g2).unwrap());
            for (a, b) in both.iter().zip(&sep) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

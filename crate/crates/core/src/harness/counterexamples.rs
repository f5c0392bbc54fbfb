use crate::corpus::{corpus, corpus_digest, CounterexamplePair};
use crate::error::{Error, Result};
use crate::gnn::{forward_graph, forward_node, init_params, GnnConfig, Head};
use crate::graph::{encode_milcqp, GraphKind};
use crate::instance::MilcqpInstance;
use crate::solver::{brute_force_milcqp, Status};
use crate::wl::{wl_equivalent, wl_equivalent_w, WlVariant};

use super::Report;

/// SHA-256 of the shipped corpus, see [`corpus_digest`].
pub const CORPUS_DIGEST: &str = "0417c9997ac5846be278336c755aa81f617d4ddf73049dc12649557ee9cab4c6";

/// Random parameter draws per GNN identity check.
pub const GNN_DRAWS: usize = 20;

const GNN_TOL: f64 = 1e-8;
const VALUE_TOL: f64 = 1e-8;

/// What the exact optima of a named pair must look like.
enum Expected {
    DifferentValues(f64, f64),
    DisjointSolutions {
        value: f64,
        first: Vec<f64>,
        second: Vec<f64>,
    },
}

fn expected(name: &str) -> Option<Expected> {
    match name {
        "cover-objective" => Some(Expected::DifferentValues(4.5, 6.0)),
        "cycle-solution" => Some(Expected::DisjointSolutions {
            value: 24.0,
            first: vec![3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            second: vec![2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0],
        }),
        _ => None,
    }
}

/// Every integer point of an all-integer instance with finite bounds that
/// satisfies the constraints to 1e-9.
pub fn enumerate_feasible(inst: &MilcqpInstance) -> Result<Vec<Vec<f64>>> {
    let base = inst.relaxation();
    let n = base.n();
    if inst.integers.len() != n {
        return Err(Error::Config("enumeration needs every variable integer".to_string()));
    }
    let mut ranges = Vec::with_capacity(n);
    let mut count = 1.0f64;
    for j in 0..n {
        let (l, u) = (base.lower[j].ceil(), base.upper[j].floor());
        if !l.is_finite() || !u.is_finite() {
            return Err(Error::Config(format!("variable {j} has an infinite bound")));
        }
        if l > u {
            return Ok(Vec::new());
        }
        count *= u - l + 1.0;
        ranges.push((l, u));
    }
    if count > 1e6 {
        return Err(Error::EnumerationBound { count, limit: 1e6 });
    }
    let mut x: Vec<f64> = ranges.iter().map(|r| r.0).collect();
    let mut found = Vec::new();
    loop {
        if base.max_violation(&x) <= 1e-9 {
            found.push(x.clone());
        }
        let mut j = 0;
        loop {
            if j == n {
                return Ok(found);
            }
            if x[j] < ranges[j].1 {
                x[j] += 1.0;
                break;
            }
            x[j] = ranges[j].0;
            j += 1;
        }
    }
}

fn gnn_gap(pair: &CounterexamplePair, head: Head, seed: u64) -> Result<f64> {
    let (g1, g2) = (encode_milcqp(&pair.first)?, encode_milcqp(&pair.second)?);
    let mut worst = 0.0f64;
    for draw in 0..GNN_DRAWS as u64 {
        let cfg = GnnConfig::new(3, 8, GraphKind::Milcqp, head)?;
        let params = init_params(cfg, seed.wrapping_mul(1000).wrapping_add(draw))?;
        let (a, b) = match head {
            Head::Graph => (vec![forward_graph(&params, &g1)?], vec![forward_graph(&params, &g2)?]),
            Head::Node => (forward_node(&params, &g1)?, forward_node(&params, &g2)?),
        };
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(","))
}

/// Checks one pair: both instances valid, WL-equivalent, identical GNN
/// outputs over [`GNN_DRAWS`] parameter draws, and the expected exact
/// optima when the pair name is known.
pub fn verify_pair(pair: &CounterexamplePair, seed: u64) -> Result<Report> {
    let name = pair.name;
    let mut r = Report::default();
    let valid = pair.first.validate().ok() && pair.second.validate().ok();
    r.push(format!("{name}/valid"), valid, "");
    if !valid {
        return Ok(r);
    }
    let (g1, g2) = (encode_milcqp(&pair.first)?, encode_milcqp(&pair.second)?);
    let eq = wl_equivalent(&g1, &g2, WlVariant::MilcqpMultiset)?;
    r.push(
        format!("{name}/wl-equivalent"),
        eq,
        if eq { "" } else { "corpus integrity failure: pair is distinguishable" },
    );
    let graph_gap = gnn_gap(pair, Head::Graph, seed)?;
    r.push(
        format!("{name}/gnn-graph-identical"),
        graph_gap <= GNN_TOL,
        format!("max |delta| = {graph_gap:e} over {GNN_DRAWS} draws"),
    );

    let first = brute_force_milcqp(&pair.first)?;
    let second = brute_force_milcqp(&pair.second)?;
    let values = (first.value, second.value);
    match expected(name) {
        Some(Expected::DifferentValues(v1, v2)) => {
            let ok = first.status == Status::Optimal
                && second.status == Status::Optimal
                && (values.0.unwrap_or(f64::NAN) - v1).abs() <= VALUE_TOL
                && (values.1.unwrap_or(f64::NAN) - v2).abs() <= VALUE_TOL;
            r.push(
                format!("{name}/optima"),
                ok,
                format!("{:?} vs {:?}, expected {v1} and {v2}", values.0, values.1),
            );
        }
        Some(Expected::DisjointSolutions { value, first: s1, second: s2 }) => {
            let eqw = wl_equivalent_w(&g1, &g2, WlVariant::MilcqpMultiset)?;
            r.push(format!("{name}/wl-equivalent-nodewise"), eqw, "");
            let node_gap = gnn_gap(pair, Head::Node, seed)?;
            r.push(
                format!("{name}/gnn-node-identical"),
                node_gap <= GNN_TOL,
                format!("max |delta| = {node_gap:e} over {GNN_DRAWS} draws"),
            );
            let ok = (values.0.unwrap_or(f64::NAN) - value).abs() <= VALUE_TOL
                && (values.1.unwrap_or(f64::NAN) - value).abs() <= VALUE_TOL;
            r.push(
                format!("{name}/optima"),
                ok,
                format!("{:?} and {:?}, expected {value} for both", values.0, values.1),
            );
            let f1 = enumerate_feasible(&pair.first)?;
            let f2 = enumerate_feasible(&pair.second)?;
            let ok = f1 == vec![s1.clone()] && f2 == vec![s2.clone()] && s1 != s2;
            let shown = |f: &[Vec<f64>]| f.iter().map(|x| fmt_point(x)).collect::<Vec<_>>().join(" ");
            r.push(
                format!("{name}/feasible-sets"),
                ok,
                format!("{{{}}} and {{{}}}", shown(&f1), shown(&f2)),
            );
        }
        None => {
            r.push(
                format!("{name}/optima"),
                first.status == Status::Optimal && second.status == Status::Optimal,
                format!("{:?} and {:?}", values.0, values.1),
            );
        }
    }
    Ok(r)
}

/// Runs [`verify_pair`] on the shipped corpus and checks its digest.
pub fn verify_counterexamples(seed: u64) -> Result<Report> {
    let pairs = corpus();
    let mut r = Report::default();
    let digest = corpus_digest(&pairs);
    r.push("corpus/digest", digest == CORPUS_DIGEST, digest);
    for pair in &pairs {
        r.extend(verify_pair(pair, seed)?);
    }
    Ok(r)
}

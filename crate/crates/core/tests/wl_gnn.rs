use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpgnn::corpus::objective_pair;
use qpgnn::generator::{gen_lcqp_with, gen_milcqp_with, stream_rng, GenConfig};
use qpgnn::gnn::{evaluate, forward_graph, forward_node, init_params, train, GnnConfig, Head, LabeledSet, Schedule};
use qpgnn::graph::{encode_lcqp, encode_milcqp, permute, GraphKind, VertexPermutation};
use qpgnn::harness::{small_milcqp_config, verify_pair};
use qpgnn::instance::Sense;
use qpgnn::solver::solve_lcqp;
use qpgnn::wl::{stable_partition, wl_equivalent, wl_equivalent_w, WlVariant};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuted_graphs_are_equivalent_and_indistinguishable(seed in 0u64..1000, pseed in 0u64..1000) {
        let cfg = GenConfig { m: 4, n: 7, nnz_a: 10, ..GenConfig::generic_milcqp(seed) };
        let inst = gen_milcqp_with(&cfg, &mut stream_rng(seed, 0)).unwrap();
        let g = encode_milcqp(&inst).unwrap();
        let perm = VertexPermutation::random(g.m(), g.n(), &mut ChaCha8Rng::seed_from_u64(pseed));
        let h = permute(&g, &perm).unwrap();
        prop_assert!(wl_equivalent(&g, &h, WlVariant::MilcqpMultiset).unwrap());
        // Index-wise equivalence holds once the permutation is undone.
        let back = permute(&h, &perm.inverse()).unwrap();
        prop_assert!(wl_equivalent_w(&g, &back, WlVariant::MilcqpMultiset).unwrap());

        let p = init_params(GnnConfig::new(2, 6, GraphKind::Milcqp, Head::Graph).unwrap(), seed).unwrap();
        let (a, b) = (forward_graph(&p, &g).unwrap(), forward_graph(&p, &h).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));

        let p = init_params(GnnConfig::new(2, 6, GraphKind::Milcqp, Head::Node).unwrap(), seed).unwrap();
        let (ya, yb) = (forward_node(&p, &g).unwrap(), forward_node(&p, &h).unwrap());
        for (j, &target) in perm.variable_map().iter().enumerate() {
            prop_assert!((ya[j] - yb[target]).abs() <= 1e-9 * (1.0 + ya[j].abs()));
        }
    }
}

#[test]
fn generic_instances_separated_from_cost_perturbation() {
    let cfg = GenConfig::generic_lcqp(2);
    let inst = gen_lcqp_with(&cfg, &mut stream_rng(2, 0)).unwrap();
    let mut other = inst.clone();
    other.c[3] += 0.5;
    let (g, h) = (encode_lcqp(&inst).unwrap(), encode_lcqp(&other).unwrap());
    assert!(!wl_equivalent(&g, &h, WlVariant::LcqpSum).unwrap());
    assert!(stable_partition(&g, WlVariant::LcqpSum).is_unfoldable());
}

#[test]
fn node_outputs_constant_on_stable_blocks() {
    let inst = qpgnn::corpus::symmetric_pair_instance();
    let g = encode_milcqp(&inst).unwrap();
    let part = stable_partition(&g, WlVariant::MilcqpMultiset);
    assert!(!part.is_unfoldable());
    for seed in 0..5 {
        let p = init_params(GnnConfig::new(3, 5, GraphKind::Milcqp, Head::Node).unwrap(), seed).unwrap();
        let y = forward_node(&p, &g).unwrap();
        for block in &part.variable_blocks {
            for &j in block {
                assert!((y[j] - y[block[0]]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn corrupted_pair_is_reported() {
    let mut pair = objective_pair();
    pair.second.base.senses[0] = Sense::Le;
    let report = verify_pair(&pair, 0).unwrap();
    let check = report.get("cover-objective/wl-equivalent").expect("check present");
    assert!(!check.passed);
    assert!(check.detail.contains("distinguishable"));
}

#[test]
fn memorizes_a_single_instance() {
    let cfg = small_milcqp_config(5);
    let inst = gen_milcqp_with(&GenConfig { n: 5, m: 2, ..cfg }, &mut stream_rng(5, 0)).unwrap();
    let lp = inst.relaxation().clone();
    let r = solve_lcqp(&lp).unwrap();
    let value = r.value.unwrap_or(1.0);
    let set = LabeledSet { graphs: vec![encode_lcqp(&lp).unwrap()], labels: vec![vec![value]] };
    let model = GnnConfig::new(2, 8, GraphKind::Lcqp, Head::Graph).unwrap();
    let schedule = Schedule { epochs: 600, lr: 1e-2, ..Schedule::default() };
    let out = train(init_params(model, 0).unwrap(), &set, None, &schedule).unwrap();
    let err = evaluate(&out.params, &set, 1).unwrap();
    assert!(err < 1e-3, "relative error {err}");
    assert!((err - out.best_rel_err).abs() <= 1e-12);
}

#[test]
fn le_triangle_variant_is_distinguishable() {
    use qpgnn::corpus::{cover_ring, cover_triangles, cover_triangles_le};
    let ring = encode_milcqp(&cover_ring()).unwrap();
    assert!(wl_equivalent(&ring, &encode_milcqp(&cover_triangles()).unwrap(), WlVariant::MilcqpMultiset).unwrap());
    assert!(!wl_equivalent(&ring, &encode_milcqp(&cover_triangles_le()).unwrap(), WlVariant::MilcqpMultiset).unwrap());
}

mod common;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgnn_explain::diffmath::{ParamSet, Tape};
use sgnn_explain::esan::*;
use sgnn_explain::policies::PolicyConfig;
use sgnn_explain::{Graph, Matrix, PolicyTag, SubgraphBag};

use common::*;

fn model(encoder: EncoderKind, dim: usize, seed: u64) -> EsanModel {
    let mut cfg = EsanConfig::new(encoder, dim, 3);
    cfg.hidden = 8;
    cfg.set_hidden = 8;
    let mut m = EsanModel::new(cfg, seed).unwrap();
    // nonzero eps so the self term is exercised
    let ids: Vec<_> = m.params().names().iter().enumerate().filter(|(_, n)| n.ends_with(".eps")).map(|(i, _)| i).collect();
    for i in ids {
        m.params_mut().tensors_mut()[i].set(0, 0, 0.1 * (i as f64 + 1.0));
    }
    m
}

fn logits(m: &EsanModel, bag: &SubgraphBag, masks: Option<&[Vec<f64>]>) -> Vec<f64> {
    m.forward_graph(bag.parent(), bag, masks).unwrap().0
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn full_bag(kind: PolicyTag, g: &Arc<Graph>) -> SubgraphBag {
    PolicyConfig::new(kind).full_bag(g).unwrap()
}

#[test]
fn unit_weights_match_plain_gin() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..10);
        let g = random_graph(&mut rng, n, 0.4, 3);
        let mut params = ParamSet::new();
        let eps = rng.random_range(-0.5..0.5);
        let e = params.add("eps", Matrix::filled(1, 1, eps));
        let w1 = params.add("w1", random_matrix(&mut rng, 3, 5, 1.0));
        let b1 = params.add("b1", random_matrix(&mut rng, 1, 5, 1.0));
        let w2 = params.add("w2", random_matrix(&mut rng, 5, 4, 1.0));
        let b2 = params.add("b2", random_matrix(&mut rng, 1, 4, 1.0));
        let p = GinParams { eps: Some(e), w1, b1, w2, b2 };
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut slot = Vec::new();
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            src.extend([i, j]);
            dst.extend([j, i]);
            slot.extend([k, k]);
        }
        let (src, dst, slot): (Arc<[usize]>, Arc<[usize]>, Arc<[usize]>) = (src.into(), dst.into(), slot.into());
        let msgs = Messages { src: &src, dst: &dst, weight_index: &slot, num_rows: n };
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let x = tape.constant(g.features().clone());
        let w = tape.column(vec![1.0; g.num_edges()]);
        let out = gin_layer(&mut tape, &bound, &p, x, &msgs, w).unwrap();
        let expect = gin_oracle(&g, g.features(), eps, params.get(w1), params.get(b1), params.get(w2), params.get(b2));
        assert!(max_abs_diff(tape.value(out), expect.data()) < 1e-12);
    }
}

#[test]
fn zero_weights_identity_mlp_passes_input_through() {
    let g = Graph::new(3, [(0, 1), (1, 2)], Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(), 0).unwrap();
    let mut params = ParamSet::new();
    let w1 = params.add("w1", Matrix::identity(2));
    let b1 = params.add("b1", Matrix::zeros(1, 2));
    let w2 = params.add("w2", Matrix::identity(2));
    let b2 = params.add("b2", Matrix::zeros(1, 2));
    let p = GinParams { eps: None, w1, b1, w2, b2 };
    let (src, dst, slot): (Arc<[usize]>, Arc<[usize]>, Arc<[usize]>) =
        (vec![0, 1, 1, 2].into(), vec![1, 0, 2, 1].into(), vec![0, 0, 1, 1].into());
    let msgs = Messages { src: &src, dst: &dst, weight_index: &slot, num_rows: 3 };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let x = tape.constant(g.features().clone());
    let w = tape.column(vec![0.0, 0.0]);
    let out = gin_layer(&mut tape, &bound, &p, x, &msgs, w).unwrap();
    assert_eq!(tape.value(out), g.features().data());
}

#[test]
fn dss_with_zero_shared_term_equals_ds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        let g = Arc::new(random_graph(&mut rng, 7, 0.4, 4));
        let mut dss = model(EncoderKind::Dss, 4, seed);
        for id in dss.shared_param_ids() {
            let (r, c) = dss.params().get(id).shape();
            *dss.params_mut().get_mut(id) = Matrix::zeros(r, c);
        }
        let mut ds = model(EncoderKind::Ds, 4, seed + 100);
        let names = ds.params().names().to_vec();
        for (i, name) in names.iter().enumerate() {
            let src = dss.params().id(name).unwrap();
            ds.params_mut().tensors_mut()[i] = dss.params().get(src).clone();
        }
        for kind in [PolicyTag::EdgeDeletion, PolicyTag::NodeDeletion, PolicyTag::EgoNetwork] {
            let bag = full_bag(kind, &g);
            assert!(max_abs_diff(&logits(&dss, &bag, None), &logits(&ds, &bag, None)) < 1e-12);
        }
    }
}

#[test]
fn bag_of_one_ds_equals_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Arc::new(random_graph(&mut rng, 8, 0.3, 3));
    let ds = model(EncoderKind::Ds, 3, 5);
    let mut base = model(EncoderKind::GinBaseline, 3, 9);
    base.params_mut().load_from(ds.params()).unwrap();
    let bag = SubgraphBag::whole(g);
    assert_eq!(logits(&ds, &bag, None), logits(&base, &bag, None));
}

#[test]
fn single_member_dss_bag_uses_the_member_for_both_terms() {
    // with one subgraph the bag averages are that subgraph
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Arc::new(random_graph(&mut rng, 6, 0.5, 3));
    let dss = model(EncoderKind::Dss, 3, 1);
    let bag = SubgraphBag::whole(g.clone());
    let a = logits(&dss, &bag, None);
    let b = logits(&dss, &SubgraphBag::new(g, vec![bag.subgraphs()[0].clone()], PolicyTag::EdgeDeletion).unwrap(), None);
    assert_eq!(a, b);
}

#[test]
fn bag_and_node_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for enc in [EncoderKind::Ds, EncoderKind::Dss] {
        for _ in 0..10 {
            let g = Arc::new(random_graph(&mut rng, 8, 0.35, 3));
            for kind in [PolicyTag::EdgeDeletion, PolicyTag::NodeDeletion, PolicyTag::EgoNetworkPlus] {
                let m = model(enc, PolicyConfig::new(kind).output_feature_dim(3), 7);
                let bag = full_bag(kind, &g);
                let base = logits(&m, &bag, None);
                let mut order: Vec<usize> = (0..bag.len()).collect();
                order.shuffle(&mut rng);
                let shuffled = bag.reordered(&order).unwrap();
                assert!(max_abs_diff(&base, &logits(&m, &shuffled, None)) < 1e-9);

                let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
                perm.shuffle(&mut rng);
                let h = Arc::new(g.relabel(&perm).unwrap());
                let relabelled = full_bag(kind, &h);
                assert!(max_abs_diff(&base, &logits(&m, &relabelled, None)) < 1e-9);
            }
        }
    }
}

#[test]
fn all_ones_masks_equal_no_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = Arc::new(random_graph(&mut rng, 9, 0.3, 2));
    for enc in [EncoderKind::Ds, EncoderKind::Dss] {
        let m = model(enc, 2, 3);
        let bag = full_bag(PolicyTag::NodeDeletion, &g);
        let ones: Vec<Vec<f64>> = bag.subgraphs().iter().map(|s| vec![1.0; s.num_edges()]).collect();
        assert_eq!(logits(&m, &bag, None), logits(&m, &bag, Some(&ones)));
        let short: Vec<Vec<f64>> = bag.subgraphs().iter().map(|s| vec![1.0; s.num_edges() + 1]).collect();
        assert!(m.forward_graph(&g, &bag, Some(&short)).is_err());
    }
}

#[test]
fn output_shape_and_bag_graph_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = Arc::new(random_graph(&mut rng, 5, 0.5, 2));
    let other = Arc::new(random_graph(&mut rng, 6, 0.5, 2));
    let m = model(EncoderKind::Dss, 2, 0);
    let bag = full_bag(PolicyTag::EdgeDeletion, &g);
    let (l, emb) = m.forward_graph(&g, &bag, None).unwrap();
    assert_eq!(l.len(), 3);
    for (e, s) in emb.iter().zip(bag.subgraphs()) {
        assert_eq!(e.shape(), (s.num_nodes(), 8));
    }
    assert!(m.forward_graph(&other, &bag, None).is_err());
}

#[test]
fn mask_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for enc in [EncoderKind::Ds, EncoderKind::Dss] {
        let m = model(enc, 3, 11);
        for _ in 0..5 {
            let g = Arc::new(random_graph(&mut rng, 7, 0.45, 3));
            let bag = full_bag(PolicyTag::EdgeDeletion, &g);
            let batch = BagBatch::new(&[&bag]).unwrap();
            let w0: Vec<f64> = (0..batch.num_slots()).map(|_| rng.random_range(0.1..0.9)).collect();
            let loss_at = |w: &[f64]| {
                let mut tape = Tape::new();
                let b = m.params().bind(&mut tape, false);
                let wv = tape.var(Matrix::from_vec(w.len(), 1, w.to_vec()).unwrap());
                let out = m.forward(&mut tape, &b, &batch, Some(wv)).unwrap();
                let l = tape.softmax_cross_entropy(out.logits, vec![1].into()).unwrap();
                let v = tape.scalar(l);
                (v, tape.backward(l).unwrap().get(wv).unwrap().to_vec())
            };
            let analytic = loss_at(&w0).1;
            let numeric = numeric_grad(&w0, &|w| loss_at(w).0);
            assert!(rel_err(&analytic, &numeric) < 1e-4);
        }
    }
}

#[test]
fn training_changes_with_lr_but_not_without() {
    let graphs = index_graphs(sgnn_explain::datasets::generate_ba2motifs_n(16, 3).unwrap());
    let policy = {
        let mut p = PolicyConfig::new(PolicyTag::EdgeDeletion);
        p.max_bag_size = Some(3);
        p
    };
    let cfg = EsanConfig::new(EncoderKind::Dss, 10, 2);
    let init = EsanModel::new(cfg.clone(), 4).unwrap();
    let hyper = TrainConfig { epochs: 2, lr: 0.0, batch_size: 4, seed: 4, target_train_acc: None };
    let out = train_classifier(&graphs, &[], &cfg, &policy, &hyper).unwrap();
    assert_eq!(out.model.params(), init.params());
    assert_eq!(out.history.len(), 2);
    assert!(out.history_csv().starts_with("epoch,train_loss,train_acc,val_acc\n"));

    let hyper = TrainConfig { lr: 1e-2, ..hyper };
    let a = train_classifier(&graphs, &[], &cfg, &policy, &hyper).unwrap();
    let b = train_classifier(&graphs, &[], &cfg, &policy, &hyper).unwrap();
    assert_ne!(a.model.params(), init.params());
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn coin_flip_labels_give_chance_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let make = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Graph> {
        (0..n)
            .map(|_| {
                let g = random_graph(rng, 6, 0.4, 2);
                let edges = g.edges().to_vec();
                Graph::new(6, edges, Matrix::filled(6, 2, 1.0), rng.random_range(0..2)).unwrap()
            })
            .collect()
    };
    let train = index_graphs(make(&mut rng, 60));
    let test: Vec<IndexedGraph> = index_graphs(make(&mut rng, 400));
    let policy = PolicyConfig::new(PolicyTag::Whole);
    let cfg = EsanConfig::new(EncoderKind::GinBaseline, 2, 2);
    let hyper = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let out = train_classifier(&train, &[], &cfg, &policy, &hyper).unwrap();
    let acc = accuracy(&out.model, &test, &policy, 64).unwrap();
    assert!((acc - 0.5).abs() < 0.1, "{acc}");
}

#[test]
fn zeroing_every_mask_changes_trained_logits() {
    let graphs = index_graphs(sgnn_explain::datasets::generate_ba2motifs_n(24, 5).unwrap());
    let mut policy = PolicyConfig::new(PolicyTag::EdgeDeletion);
    policy.max_bag_size = Some(4);
    let cfg = EsanConfig::new(EncoderKind::Dss, 10, 2);
    let hyper = TrainConfig { epochs: 5, lr: 1e-2, ..TrainConfig::default() };
    let m = train_classifier(&graphs, &[], &cfg, &policy, &hyper).unwrap().model;
    let changed = graphs.iter().any(|it| {
        let bag = policy.bag(&it.graph, eval_stream(it.id)).unwrap();
        let zeros: Vec<Vec<f64>> = bag.subgraphs().iter().map(|s| vec![0.0; s.num_edges()]).collect();
        logits(&m, &bag, None) != logits(&m, &bag, Some(&zeros))
    });
    assert!(changed);
}

#[test]
fn policy_encoder_pairing_and_checkpoints() {
    let whole = PolicyConfig::new(PolicyTag::Whole);
    let ed = PolicyConfig::new(PolicyTag::EdgeDeletion);
    assert!(check_policy(EncoderKind::GinBaseline, &whole).is_ok());
    assert!(check_policy(EncoderKind::GinBaseline, &ed).is_err());
    assert!(check_policy(EncoderKind::Dss, &whole).is_err());
    let m = model(EncoderKind::Dss, 3, 2);
    let text = m.to_checkpoint().to_text();
    let back = EsanModel::from_checkpoint(&sgnn_explain::diffmath::Checkpoint::from_text(&text, "m").unwrap()).unwrap();
    assert_eq!(back.params(), m.params());
    assert_eq!(back.config(), m.config());
}

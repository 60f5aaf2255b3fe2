mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgnn_explain::datasets::generate_ba2motifs_n;
use sgnn_explain::diffmath::{Checkpoint, Tape};
use sgnn_explain::esan::*;
use sgnn_explain::explainer::*;
use sgnn_explain::policies::PolicyConfig;
use sgnn_explain::{Matrix, PolicyTag, SubgraphBag};

use common::grad::explainer_loss_at;
use common::*;

fn ed_policy(max: usize) -> PolicyConfig {
    let mut p = PolicyConfig::new(PolicyTag::EdgeDeletion);
    p.max_bag_size = Some(max);
    p
}

fn small_classifier() -> (EsanModel, Vec<IndexedGraph>, PolicyConfig) {
    let graphs = index_graphs(generate_ba2motifs_n(24, 11).unwrap());
    let policy = ed_policy(4);
    let cfg = EsanConfig::new(EncoderKind::Dss, 10, 2);
    let hyper = TrainConfig { epochs: 4, lr: 1e-2, ..TrainConfig::default() };
    let m = train_classifier(&graphs, &[], &cfg, &policy, &hyper).unwrap().model;
    (m, graphs, policy)
}

fn bags_of(graphs: &[IndexedGraph], policy: &PolicyConfig) -> Vec<SubgraphBag> {
    graphs.iter().map(|it| policy.bag(&it.graph, eval_stream(it.id)).unwrap()).collect()
}

#[test]
fn loss_reduces_to_cross_entropy_and_mask_mean() {
    let (m, graphs, policy) = small_classifier();
    let bags = bags_of(&graphs[..5], &policy);
    let refs: Vec<&SubgraphBag> = bags.iter().collect();
    let batch = BagBatch::new(&refs).unwrap();
    let targets: Arc<[usize]> = vec![0, 1, 1, 0, 1].into();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let masks: Vec<f64> = (0..batch.num_slots()).map(|_| rng.random_range(0.0..1.0)).collect();

    // oracle sparsity: mean over graphs of the mean over non-empty subgraphs
    let per_sub = batch.split_slots(&masks);
    let mut k = 0;
    let mut graph_means = Vec::new();
    for bag in &bags {
        let subs: Vec<f64> = per_sub[k..k + bag.len()]
            .iter()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        k += bag.len();
        graph_means.push(subs.iter().sum::<f64>() / subs.len() as f64);
    }
    let size = graph_means.iter().sum::<f64>() / graph_means.len() as f64;

    for lambda in [0.0, 1.0, 2.5] {
        let mut tape = Tape::new();
        let b = m.params().bind(&mut tape, false);
        let out = m.forward(&mut tape, &b, &batch, None).unwrap();
        let ce = tape.softmax_cross_entropy(out.logits, targets.clone()).unwrap();
        let mv = tape.column(masks.clone());
        let terms = explainer_loss(&mut tape, &batch, out.logits, targets.clone(), mv, lambda).unwrap();
        assert!((tape.scalar(terms.fidelity) - tape.scalar(ce)).abs() < 1e-15);
        assert!((tape.scalar(terms.sparsity) - size).abs() < 1e-12);
        assert!((tape.scalar(terms.total) - tape.scalar(ce) - lambda * size).abs() < 1e-12);

        let ones = tape.column(vec![1.0; batch.num_slots()]);
        let terms = explainer_loss(&mut tape, &batch, out.logits, targets.clone(), ones, lambda).unwrap();
        assert!((tape.scalar(terms.sparsity) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn straight_through_gradient_matches_surrogate() {
    let (m, graphs, policy) = small_classifier();
    let cfg = ExplainerConfig { l1_coeff: 0.7, ..ExplainerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for chunk in graphs.chunks(6).take(3) {
        let bags = bags_of(chunk, &policy);
        let refs: Vec<&SubgraphBag> = bags.iter().collect();
        let batch = BagBatch::new(&refs).unwrap();
        let (logits, _) = m.evaluate(&batch, None).unwrap();
        let targets: Arc<[usize]> = predictions(&logits).into();
        let n = batch.num_slots();
        let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let uniforms: Vec<f64> = (0..n).map(|_| open_uniform(&mut rng)).collect();

        let (_, analytic) = explainer_loss_at(&m, &batch, &targets, &omega, &uniforms, 1.5, &cfg, None);
        assert!(analytic.iter().any(|&g| g != 0.0));

        let soft0: Vec<f64> = omega
            .iter()
            .zip(&uniforms)
            .map(|(&w, &u)| sample_soft(w, 1.5, u, cfg.noise).unwrap())
            .collect();
        let hard0 = harden(&soft0, cfg.threshold).unwrap();
        let offset: Vec<f64> = hard0.iter().zip(&soft0).map(|(h, s)| h - s).collect();
        let numeric = numeric_grad(&omega, &|w| explainer_loss_at(&m, &batch, &targets, w, &uniforms, 1.5, &cfg, Some(&offset)).0);
        assert!(rel_err(&analytic, &numeric) < 1e-4, "{}", rel_err(&analytic, &numeric));
    }
}

#[test]
fn soft_mask_increases_with_omega() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [NoiseKind::Gumbel, NoiseKind::Logistic] {
        for _ in 0..200 {
            let u = open_uniform(&mut rng);
            let tau = rng.random_range(0.1..5.0);
            let a = rng.random_range(-5.0..5.0);
            let b = a + rng.random_range(1e-3..2.0);
            assert!(sample_soft(a, tau, u, kind).unwrap() <= sample_soft(b, tau, u, kind).unwrap());
        }
    }
}

#[test]
fn heavy_sparsity_step_shrinks_masks() {
    let (m, graphs, policy) = small_classifier();
    let cfg = ExplainerConfig { l1_coeff: 1e6, epochs: 1, batch_size: graphs.len(), lr: 1e-2, seed: 3, ..ExplainerConfig::default() };
    let mean_soft = |e: &Explainer| -> f64 {
        let masks = e.explain(&m, &graphs, &policy).unwrap();
        let all: Vec<f64> = masks.iter().flat_map(|g| g.soft().into_iter().flatten()).collect();
        all.iter().sum::<f64>() / all.len() as f64
    };
    let init = Explainer { scorer: EdgeScorer::new(m.config().hidden, cfg.mlp_hidden, cfg.seed).unwrap(), config: cfg.clone() };
    let trained = train_explainer(&m, &graphs, &policy, &cfg).unwrap();
    assert_eq!(trained.history.len(), 1);
    assert!(mean_soft(&trained.explainer) < mean_soft(&init));
}

#[test]
fn training_is_deterministic_and_leaves_classifier_alone() {
    let (m, graphs, policy) = small_classifier();
    let before = m.params().clone();
    let cfg = ExplainerConfig { epochs: 3, seed: 9, ..ExplainerConfig::default() };
    let a = train_explainer(&m, &graphs, &policy, &cfg).unwrap();
    let b = train_explainer(&m, &graphs, &policy, &cfg).unwrap();
    assert_eq!(m.params(), &before);
    assert_eq!(a.history, b.history);
    assert_eq!(a.explainer.scorer.params(), b.explainer.scorer.params());
    assert!(a.history_csv().starts_with("epoch,tau,loss,fidelity,sparsity\n"));
    assert!((a.history[0].tau - cfg.tau_init).abs() < 1e-12);
    assert!((a.history[2].tau - cfg.tau_final).abs() < 1e-12);

    let other = train_explainer(&m, &graphs, &policy, &ExplainerConfig { seed: 10, ..cfg.clone() }).unwrap();
    assert_ne!(other.explainer.scorer.params(), a.explainer.scorer.params());
}

#[test]
fn explain_output_shapes_and_checkpoint() {
    let (m, graphs, policy) = small_classifier();
    let cfg = ExplainerConfig { epochs: 2, noise: NoiseKind::Logistic, ..ExplainerConfig::default() };
    let e = train_explainer(&m, &graphs, &policy, &cfg).unwrap().explainer;
    let masks = e.explain(&m, &graphs, &policy).unwrap();
    assert_eq!(masks.len(), graphs.len());
    for (gm, it) in masks.iter().zip(&graphs) {
        assert_eq!(gm.id, it.id);
        assert_eq!(gm.masks.len(), gm.bag.len());
        for (mask, sub) in gm.masks.iter().zip(gm.bag.subgraphs()) {
            assert_eq!(mask.soft.len(), sub.num_edges());
            for ((&w, &s), &h) in mask.omega.iter().zip(&mask.soft).zip(&mask.hard) {
                assert!((s - sigmoid(w)).abs() < 1e-15);
                assert_eq!(h, if s > 0.5 { 1.0 } else { 0.0 });
            }
        }
        assert!(gm.csv_rows().lines().count() >= gm.bag.subgraphs().iter().map(|s| s.num_edges()).sum::<usize>());
    }
    let text = e.to_checkpoint().to_text();
    let back = Explainer::from_checkpoint(&Checkpoint::from_text(&text, "e").unwrap()).unwrap();
    assert_eq!(back.config, e.config);
    assert_eq!(back.scorer.params(), e.scorer.params());
    assert!(MASK_CSV_HEADER.starts_with("graph,subgraph,parent_edge"));
}

#[test]
fn explainer_rejects_bad_inputs() {
    let (m, graphs, policy) = small_classifier();
    let bad = ExplainerConfig { tau_init: 0.0, ..ExplainerConfig::default() };
    assert!(train_explainer(&m, &graphs, &policy, &bad).is_err());
    assert!(train_explainer(&m, &[], &policy, &ExplainerConfig::default()).is_err());
    assert!(train_explainer(&m, &graphs, &PolicyConfig::new(PolicyTag::Whole), &ExplainerConfig::default()).is_err());
    let mut tape = Tape::new();
    let om = tape.var(Matrix::zeros(2, 1));
    let cfg = ExplainerConfig::default();
    assert!(relaxed_masks(&mut tape, om, &[0.5, 1.0], 1.0, &cfg).is_err());
    assert!(relaxed_masks(&mut tape, om, &[0.5, 0.5], 0.0, &cfg).is_err());
}

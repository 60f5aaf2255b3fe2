//! Oracles and helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sgnn_explain::datasets::{generate_ba2motifs_n, split};
use sgnn_explain::diffmath::{Tape, Var};
use sgnn_explain::esan::{
    accuracy, index_graphs, train_classifier, EncoderKind, EsanConfig, IndexedGraph, Readout, TrainConfig,
};
use sgnn_explain::explainer::{train_explainer, ExplainerConfig};
use sgnn_explain::merge::{merge_masks, MergeMode};
use sgnn_explain::metrics::{graph_metrics, summarize};
use sgnn_explain::policies::PolicyConfig;
use sgnn_explain::{Graph, Matrix, PolicyTag};

pub mod grad;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Matrix whose entries are bounded away from zero (for relu / abs kinks).
pub fn random_nonzero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m: f64 = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Erdos-Renyi graph with `n` nodes, edge probability `p`, random features.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, dim: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let feats = random_matrix(rng, n, dim, 1.0);
    Graph::new(n, edges, feats, rng.random_range(0..2)).unwrap()
}

/// `||a - b|| / (||a|| + ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na + nb < 1e-12 {
        0.0
    } else {
        diff / (na + nb)
    }
}

/// `sum(y * r)` for a fixed matrix `r`; a scalar that depends on every
/// output entry.
pub fn contract(tape: &mut Tape, y: Var, r: &Matrix) -> Var {
    let rv = tape.constant(r.clone());
    let p = tape.mul(y, rv).unwrap();
    let s = tape.sum_rows(p);
    let ones = tape.constant(Matrix::filled(r.cols(), 1, 1.0));
    tape.matmul(s, ones).unwrap()
}

/// Compares reverse-mode gradients of `sum(op(inputs) * r)` with central
/// differences. `op` must be a pure function of its inputs. Returns the
/// largest relative error over inputs.
pub fn check_op(rng: &mut ChaCha8Rng, inputs: &[Matrix], op: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Matrix], r: Option<&Matrix>| -> (f64, Vec<Vec<f64>>, (usize, usize)) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|m| tape.var(m.clone())).collect();
        let y = op(&mut tape, &vars);
        let shape = tape.shape(y);
        let Some(r) = r else {
            return (0.0, Vec::new(), shape);
        };
        let l = contract(&mut tape, y, r);
        let v = tape.scalar(l);
        let g = tape.backward(l).unwrap();
        let grads = vars
            .iter()
            .zip(xs)
            .map(|(&x, m)| g.get(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; m.data().len()]))
            .collect();
        (v, grads, shape)
    };
    let (_, _, (rr, rc)) = eval(inputs, None);
    let r = random_matrix(rng, rr, rc, 1.0);
    let (_, analytic, _) = eval(inputs, Some(&r));
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        let mut numeric = vec![0.0; inputs[k].data().len()];
        for (idx, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= h;
            *slot = (eval(&plus, Some(&r)).0 - eval(&minus, Some(&r)).0) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    worst
}

/// Central-difference gradient of a scalar function.
pub fn numeric_grad(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] += h;
            let mut m = x.to_vec();
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Exhaustive pairwise AUC: wins plus half ties over positive/negative pairs.
pub fn brute_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Hop distances by plain BFS over an adjacency list.
pub fn hop_distances(g: &Graph, s: usize) -> Vec<Option<usize>> {
    let mut adj = vec![Vec::new(); g.num_nodes()];
    for &(i, j) in g.edges() {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut dist = vec![None; g.num_nodes()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(dist[v].unwrap() + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// Unmodified GIN layer written out with loops:
/// `mlp((1 + eps) x_i + sum_{j in N(i)} x_j)`.
pub fn gin_oracle(g: &Graph, x: &Matrix, eps: f64, w1: &Matrix, b1: &Matrix, w2: &Matrix, b2: &Matrix) -> Matrix {
    let n = g.num_nodes();
    let d = x.cols();
    let mut agg = vec![vec![0.0; d]; n];
    for (i, a) in agg.iter_mut().enumerate() {
        for c in 0..d {
            a[c] = (1.0 + eps) * x.get(i, c);
        }
    }
    for &(i, j) in g.edges() {
        for c in 0..d {
            agg[i][c] += x.get(j, c);
            agg[j][c] += x.get(i, c);
        }
    }
    let lin = |v: &[f64], w: &Matrix, b: &Matrix| -> Vec<f64> {
        (0..w.cols())
            .map(|o| b.get(0, o) + (0..w.rows()).map(|k| v[k] * w.get(k, o)).sum::<f64>())
            .collect()
    };
    let rows: Vec<Vec<f64>> = agg
        .iter()
        .map(|a| {
            let h: Vec<f64> = lin(a, w1, b1).into_iter().map(|v| v.max(0.0)).collect();
            lin(&h, w2, b2)
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Settings of the desk-scale BA-2motifs runs.
pub const DESK_GRAPHS: usize = 200;
pub const DESK_DATA_SEED: u64 = 0;
pub const DESK_MAX_BAG: usize = 10;

pub fn desk_graphs() -> Vec<IndexedGraph> {
    index_graphs(generate_ba2motifs_n(DESK_GRAPHS, DESK_DATA_SEED).unwrap())
}

pub fn desk_policy(encoder: EncoderKind) -> PolicyConfig {
    if encoder == EncoderKind::GinBaseline {
        PolicyConfig::new(PolicyTag::Whole)
    } else {
        let mut p = PolicyConfig::new(PolicyTag::EdgeDeletion);
        p.max_bag_size = Some(DESK_MAX_BAG);
        p
    }
}

/// Classifier settings for the desk runs: subgraph encoders use a sum
/// readout, the baseline a mean readout and more epochs.
pub fn desk_classifier(encoder: EncoderKind, seed: u64) -> (EsanConfig, TrainConfig) {
    let mut cfg = EsanConfig::new(encoder, 10, 2);
    let mut hyper = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if encoder == EncoderKind::GinBaseline {
        cfg.readout = Readout::Mean;
        hyper.epochs = 200;
    } else {
        cfg.readout = Readout::Sum;
    }
    (cfg, hyper)
}

#[derive(Debug, Clone)]
pub struct DeskRun {
    pub seed: u64,
    pub train_acc: f64,
    pub auc: f64,
    pub mask_size: f64,
    pub seconds: f64,
}

/// Trains the classifier and the explainer on the train split and scores the
/// merged explanations of all desk graphs.
pub fn desk_run(encoder: EncoderKind, seed: u64) -> DeskRun {
    let start = Instant::now();
    let graphs = desk_graphs();
    let labels: Vec<usize> = graphs.iter().map(|g| g.graph.label()).collect();
    let parts = split(&labels, [0.8, 0.1, 0.1], seed).unwrap();
    let pick = |ix: &[usize]| ix.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    let (train, val) = (pick(&parts.train), pick(&parts.val));
    let policy = desk_policy(encoder);
    let (cfg, hyper) = desk_classifier(encoder, seed);
    let model = train_classifier(&train, &val, &cfg, &policy, &hyper).unwrap().model;
    let train_acc = accuracy(&model, &train, &policy, 64).unwrap();

    let ec = ExplainerConfig {
        seed,
        ..ExplainerConfig::default()
    };
    let explainer = train_explainer(&model, &train, &policy, &ec).unwrap().explainer;
    let masks = explainer.explain(&model, &graphs, &policy).unwrap();
    let per_graph: Vec<_> = masks
        .iter()
        .map(|m| {
            let ex = merge_masks(&m.bag, &m.soft(), MergeMode::SumRescale).unwrap();
            graph_metrics(m.id, &ex.scores, ex.graph.ground_truth(), ec.threshold).unwrap()
        })
        .collect();
    let s = summarize("ba2motifs", encoder.as_str(), policy.kind.as_str(), seed, &per_graph);
    DeskRun {
        seed,
        train_acc,
        auc: s.auc.unwrap(),
        mask_size: s.mask_size,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn arc(g: Graph) -> Arc<Graph> {
    Arc::new(g)
}

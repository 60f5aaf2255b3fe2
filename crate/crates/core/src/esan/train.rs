use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Adam, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::esan::batch::BagBatch;
use crate::esan::model::{predictions, EncoderKind, EsanConfig, EsanModel};
use crate::graph::{Graph, PolicyTag, SubgraphBag};
use crate::policies::{mix_seed, PolicyConfig};

/// A graph together with its position in the full dataset; the id keys the
/// per-graph bag sampling streams.
#[derive(Debug, Clone)]
pub struct IndexedGraph {
    pub id: usize,
    pub graph: Arc<Graph>,
}

pub fn index_graphs(graphs: Vec<Graph>) -> Vec<IndexedGraph> {
    graphs
        .into_iter()
        .enumerate()
        .map(|(id, g)| IndexedGraph {
            id,
            graph: Arc::new(g),
        })
        .collect()
}

/// Sampling stream for evaluation-time bags (fixed per graph).
pub fn eval_stream(id: usize) -> u64 {
    id as u64
}

/// Sampling stream for training-time bags (fresh per epoch).
pub fn train_stream(epoch: usize, id: usize) -> u64 {
    mix_seed(epoch as u64 + 1, id as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after the first epoch whose train accuracy reaches this value.
    pub target_train_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch_size: 8,
            seed: 0,
            target_train_acc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EsanModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_acc\n");
        for h in &self.history {
            s.push_str(&format!(
                "{},{},{},{}\n",
                h.epoch, h.train_loss, h.train_acc, h.val_acc
            ));
        }
        s
    }
}

/// Policy check: the baseline only runs on whole-graph bags, and subgraph
/// encoders never do.
pub fn check_policy(encoder: EncoderKind, policy: &PolicyConfig) -> Result<()> {
    policy.validate()?;
    match (encoder, policy.kind) {
        (EncoderKind::GinBaseline, PolicyTag::Whole) => Ok(()),
        (EncoderKind::GinBaseline, k) => Err(Error::arg(format!("gin-baseline cannot use policy {k}"))),
        (_, PolicyTag::Whole) => Err(Error::arg("subgraph encoders need a subgraph policy")),
        _ => Ok(()),
    }
}

pub fn build_bags(items: &[IndexedGraph], policy: &PolicyConfig, stream: impl Fn(usize) -> u64) -> Result<Vec<SubgraphBag>> {
    items
        .iter()
        .map(|it| policy.bag(&it.graph, stream(it.id)))
        .collect()
}

pub fn build_batches(bags: &[SubgraphBag], batch_size: usize) -> Result<Vec<BagBatch>> {
    bags.chunks(batch_size.max(1))
        .map(|chunk| {
            let refs: Vec<&SubgraphBag> = chunk.iter().collect();
            BagBatch::new(&refs)
        })
        .collect()
}

/// Fraction of correct predictions over prebuilt batches.
pub fn batch_accuracy(model: &EsanModel, batches: &[BagBatch]) -> Result<f64> {
    let mut correct = 0;
    let mut total = 0;
    for b in batches {
        let (logits, _) = model.evaluate(b, None)?;
        let preds = predictions(&logits);
        correct += preds.iter().zip(b.labels()).filter(|(p, l)| p == l).count();
        total += b.num_graphs();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Accuracy with evaluation-time bags.
pub fn accuracy(model: &EsanModel, items: &[IndexedGraph], policy: &PolicyConfig, batch_size: usize) -> Result<f64> {
    let bags = build_bags(items, policy, eval_stream)?;
    batch_accuracy(model, &build_batches(&bags, batch_size)?)
}

/// Minimises softmax cross-entropy with Adam. Returns the parameters of the
/// epoch with the best `(val acc, train acc)`, later epochs winning ties;
/// with an empty validation set only train accuracy counts. Epochs that reach
/// `target_train_acc` are preferred over those that do not.
pub fn train_classifier(
    train: &[IndexedGraph],
    val: &[IndexedGraph],
    config: &EsanConfig,
    policy: &PolicyConfig,
    hyper: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    check_policy(config.encoder, policy)?;
    let mut model = EsanModel::new(config.clone(), hyper.seed)?;
    let mut adam = Adam::new(
        model.params(),
        AdamConfig {
            lr: hyper.lr,
            ..AdamConfig::default()
        },
    );
    let train_eval = build_batches(&build_bags(train, policy, eval_stream)?, 64)?;
    let val_eval = build_batches(&build_bags(val, policy, eval_stream)?, 64)?;

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, 0x7261_696e));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<((bool, f64, f64), usize, EsanModel)> = None;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let bags = chunk
                .iter()
                .map(|&i| policy.bag(&train[i].graph, train_stream(epoch, train[i].id)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SubgraphBag> = bags.iter().collect();
            let batch = BagBatch::new(&refs)?;

            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape, true);
            let out = model.forward(&mut tape, &bound, &batch, None)?;
            let loss = tape.softmax_cross_entropy(out.logits, batch.labels().into())?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("loss is {value}"),
                });
            }
            let grads = tape.backward(loss)?;
            let g = bound.collect(model.params(), &grads);
            adam.step(model.params_mut(), &g)?;
            loss_sum += value * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_acc = batch_accuracy(&model, &train_eval)?;
        let val_acc = if val.is_empty() {
            train_acc
        } else {
            batch_accuracy(&model, &val_eval)?
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc,
            val_acc,
        });
        let reached = hyper.target_train_acc.is_none_or(|t| train_acc >= t);
        let key = (reached, val_acc, train_acc);
        if best.as_ref().is_none_or(|(k, _, _)| key >= *k) {
            best = Some((key, epoch, model.clone()));
        }
        if reached && hyper.target_train_acc.is_some() {
            break;
        }
    }
    let (best_model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, 0),
    };
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
    })
}

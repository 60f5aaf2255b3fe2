use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Adam, AdamConfig, Tape, Var};
use crate::error::{Error, Result};
use crate::esan::{build_batches, check_policy, eval_stream, predictions, train_stream, BagBatch, EsanModel, IndexedGraph};
use crate::explainer::sampler::{check_threshold, open_uniform, sigmoid, temperature, NoiseKind};
use crate::explainer::scorer::EdgeScorer;
use crate::graph::SubgraphBag;
use crate::policies::{mix_seed, PolicyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub mlp_hidden: usize,
    pub tau_init: f64,
    pub tau_final: f64,
    pub threshold: f64,
    pub l1_coeff: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Graphs per optimiser step.
    pub batch_size: usize,
    pub seed: u64,
    pub noise: NoiseKind,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            mlp_hidden: 64,
            tau_init: 5.0,
            tau_final: 1.0,
            threshold: 0.5,
            l1_coeff: 3.0,
            epochs: 50,
            lr: 3e-3,
            batch_size: 8,
            seed: 0,
            noise: NoiseKind::Gumbel,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mlp_hidden == 0 {
            return Err(Error::arg("mlp_hidden must be positive"));
        }
        if !(self.tau_init > 0.0 && self.tau_final > 0.0 && self.tau_init.is_finite() && self.tau_final.is_finite()) {
            return Err(Error::arg(format!(
                "temperatures must be positive, got {} -> {}",
                self.tau_init, self.tau_final
            )));
        }
        check_threshold(self.threshold)?;
        if !(self.l1_coeff >= 0.0) {
            return Err(Error::arg(format!("l1_coeff {} must be nonnegative", self.l1_coeff)));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::arg(format!("lr {} must be nonnegative", self.lr)));
        }
        Ok(())
    }

    pub fn temperature(&self, epoch: usize) -> f64 {
        temperature(self.tau_init, self.tau_final, epoch, self.epochs)
    }
}

/// Per-subgraph mask aligned with the subgraph's retained edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub omega: Vec<f64>,
    pub soft: Vec<f64>,
    pub hard: Vec<f64>,
}

/// Output of the explainer on one graph.
#[derive(Debug, Clone)]
pub struct GraphMasks {
    pub id: usize,
    pub bag: SubgraphBag,
    pub masks: Vec<EdgeMask>,
    /// Classifier prediction on the unmasked bag.
    pub prediction: usize,
}

impl GraphMasks {
    pub fn soft(&self) -> Vec<Vec<f64>> {
        self.masks.iter().map(|m| m.soft.clone()).collect()
    }

    pub fn hard(&self) -> Vec<Vec<f64>> {
        self.masks.iter().map(|m| m.hard.clone()).collect()
    }

    /// CSV rows `graph,subgraph,parent_edge,omega,soft,hard`, no header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for (k, (sub, m)) in self.bag.subgraphs().iter().zip(&self.masks).enumerate() {
            for (i, &e) in sub.parent_edges().iter().enumerate() {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    self.id, k, e, m.omega[i], m.soft[i], m.hard[i]
                ));
            }
        }
        s
    }
}

pub const MASK_CSV_HEADER: &str = "graph,subgraph,parent_edge,omega,soft,hard\n";

/// Pieces of one explainer objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub fidelity: Var,
    pub sparsity: Var,
}

/// `CE(masked logits, targets) + l1_coeff * size`, where `size` averages,
/// over graphs, the mean over non-empty subgraphs of the mean absolute mask.
/// `masks` is a slot-ordered column.
pub fn explainer_loss(
    tape: &mut Tape,
    batch: &BagBatch,
    masked_logits: Var,
    targets: Arc<[usize]>,
    masks: Var,
    l1_coeff: f64,
) -> Result<LossTerms> {
    let fidelity = tape.softmax_cross_entropy(masked_logits, targets)?;
    let mut inv_slots = vec![0.0; batch.num_subgraphs()];
    let mut nonempty = vec![0usize; batch.num_graphs()];
    for (s, r) in batch.subgraph_slots.iter().enumerate() {
        if !r.is_empty() {
            inv_slots[s] = 1.0 / r.len() as f64;
            nonempty[batch.subgraph_graph[s]] += 1;
        }
    }
    let inv_nonempty: Vec<f64> = nonempty
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
        .collect();
    let a = tape.abs(masks);
    let per_sub = tape.scatter_add_rows(a, batch.slot_subgraph.clone(), batch.num_subgraphs())?;
    let col = tape.column(inv_slots);
    let per_sub = tape.mul_col(per_sub, col)?;
    let per_graph = tape.scatter_add_rows(per_sub, batch.subgraph_graph.clone(), batch.num_graphs())?;
    let col = tape.column(inv_nonempty);
    let per_graph = tape.mul_col(per_graph, col)?;
    let sparsity = tape.mean_rows(per_graph)?;
    let weighted = tape.scale(sparsity, l1_coeff);
    let total = tape.add(fidelity, weighted)?;
    Ok(LossTerms {
        total,
        fidelity,
        sparsity,
    })
}

#[derive(Debug, Clone)]
pub struct Explainer {
    pub scorer: EdgeScorer,
    pub config: ExplainerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerEpoch {
    pub epoch: usize,
    pub tau: f64,
    pub loss: f64,
    pub fidelity: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct ExplainerOutcome {
    pub explainer: Explainer,
    pub history: Vec<ExplainerEpoch>,
}

impl ExplainerOutcome {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,tau,loss,fidelity,sparsity\n");
        for h in &self.history {
            s.push_str(&format!("{},{},{},{},{}\n", h.epoch, h.tau, h.loss, h.fidelity, h.sparsity));
        }
        s
    }
}

/// Tape handles of one explainer step.
pub struct StepGraph {
    pub omega: Var,
    pub soft: Var,
    pub hard: Var,
    pub loss: LossTerms,
}

/// Soft masks `sigma((omega + xi(u)) / tau)` and their straight-through
/// hardening.
pub fn relaxed_masks(tape: &mut Tape, omega: Var, uniforms: &[f64], tau: f64, config: &ExplainerConfig) -> Result<(Var, Var)> {
    if !(tau > 0.0) {
        return Err(Error::arg(format!("temperature {tau} must be positive")));
    }
    if uniforms.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::arg("uniform draws must lie in (0,1)"));
    }
    let xi = tape.column(uniforms.iter().map(|&u| config.noise.noise(u)).collect());
    let z = tape.add(omega, xi)?;
    let z = tape.scale(z, 1.0 / tau);
    let soft = tape.sigmoid(z);
    let hard = tape.straight_through_threshold(soft, config.threshold)?;
    Ok((soft, hard))
}

#[allow(clippy::too_many_arguments)]
/// Scores, relaxed masks and the loss for one batch; `uniforms` holds one
/// draw per slot.
pub fn explainer_step_graph(
    tape: &mut Tape,
    classifier: &EsanModel,
    scorer: &EdgeScorer,
    scorer_bound: &crate::diffmath::Bound,
    batch: &BagBatch,
    embeddings: Var,
    targets: Arc<[usize]>,
    uniforms: &[f64],
    tau: f64,
    config: &ExplainerConfig,
) -> Result<StepGraph> {
    if uniforms.len() != batch.num_slots() {
        return Err(Error::arg(format!(
            "{} uniform draws for {} edges",
            uniforms.len(),
            batch.num_slots()
        )));
    }
    let omega = scorer.omega(tape, scorer_bound, embeddings, batch.slot_src_row.clone(), batch.slot_dst_row.clone())?;
    let (soft, hard) = relaxed_masks(tape, omega, uniforms, tau, config)?;
    let frozen = classifier.params().bind(tape, false);
    let out = classifier.forward(tape, &frozen, batch, Some(hard))?;
    let loss = explainer_loss(tape, batch, out.logits, targets, soft, config.l1_coeff)?;
    Ok(StepGraph {
        omega,
        soft,
        hard,
        loss,
    })
}

/// Trains the edge scorer against a frozen classifier. Each epoch draws fresh
/// bags and fresh noise; only the scorer is updated.
pub fn train_explainer(
    classifier: &EsanModel,
    graphs: &[IndexedGraph],
    policy: &PolicyConfig,
    config: &ExplainerConfig,
) -> Result<ExplainerOutcome> {
    config.validate()?;
    check_policy(classifier.config().encoder, policy)?;
    if graphs.is_empty() {
        return Err(Error::arg("no graphs to train the explainer on"));
    }
    let frozen_before = classifier.params().clone();
    let mut scorer = EdgeScorer::new(classifier.config().hidden, config.mlp_hidden, config.seed)?;
    let mut adam = Adam::new(
        scorer.params(),
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x6578_706c));
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let tau = config.temperature(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut fid_sum, mut sp_sum, mut seen) = (0.0, 0.0, 0.0, 0);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let bags = chunk
                .iter()
                .map(|&i| {
                    let it = &graphs[i];
                    policy.bag(&it.graph, mix_seed(config.seed, train_stream(epoch, it.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SubgraphBag> = bags.iter().collect();
            let batch = BagBatch::new(&refs)?;
            if batch.num_slots() == 0 {
                continue;
            }
            let (logits, emb) = classifier.evaluate(&batch, None)?;
            let targets: Arc<[usize]> = predictions(&logits).into();
            let uniforms: Vec<f64> = (0..batch.num_slots()).map(|_| open_uniform(&mut rng)).collect();

            let mut tape = Tape::new();
            let bound = scorer.params().bind(&mut tape, true);
            let e = tape.constant(emb);
            let step = explainer_step_graph(&mut tape, classifier, &scorer, &bound, &batch, e, targets, &uniforms, tau, config)?;
            let value = tape.scalar(step.loss.total);
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("explainer loss is {value}"),
                });
            }
            let grads = tape.backward(step.loss.total)?;
            let g = bound.collect(scorer.params(), &grads);
            adam.step(scorer.params_mut(), &g)?;

            let n = chunk.len() as f64;
            loss_sum += value * n;
            fid_sum += tape.scalar(step.loss.fidelity) * n;
            sp_sum += tape.scalar(step.loss.sparsity) * n;
            seen += chunk.len();
        }
        let denom = seen.max(1) as f64;
        history.push(ExplainerEpoch {
            epoch,
            tau,
            loss: loss_sum / denom,
            fidelity: fid_sum / denom,
            sparsity: sp_sum / denom,
        });
    }
    if classifier.params() != &frozen_before {
        return Err(Error::Invariant("classifier parameters changed during explainer training".into()));
    }
    Ok(ExplainerOutcome {
        explainer: Explainer {
            scorer,
            config: config.clone(),
        },
        history,
    })
}

impl Explainer {
    /// Noise-free masks on evaluation bags: `soft = sigma(omega)`,
    /// `hard = soft > threshold`.
    pub fn explain(&self, classifier: &EsanModel, graphs: &[IndexedGraph], policy: &PolicyConfig) -> Result<Vec<GraphMasks>> {
        check_policy(classifier.config().encoder, policy)?;
        let bags = graphs
            .iter()
            .map(|it| policy.bag(&it.graph, eval_stream(it.id)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(graphs.len());
        let batch_size = 32;
        for (chunk_idx, batch) in build_batches(&bags, batch_size)?.iter().enumerate() {
            let (logits, emb) = classifier.evaluate(batch, None)?;
            let preds = predictions(&logits);
            let omega = self
                .scorer
                .omega_values(&emb, batch.slot_src_row.clone(), batch.slot_dst_row.clone())?;
            let per_sub = batch.split_slots(&omega);
            let mut s = 0;
            for (k, pred) in preds.into_iter().enumerate() {
                let gi = chunk_idx * batch_size + k;
                let bag = bags[gi].clone();
                let masks = per_sub[s..s + bag.len()]
                    .iter()
                    .map(|om| {
                        let soft: Vec<f64> = om.iter().map(|&w| sigmoid(w)).collect();
                        let hard = soft
                            .iter()
                            .map(|&v| if v > self.config.threshold { 1.0 } else { 0.0 })
                            .collect();
                        EdgeMask {
                            omega: om.clone(),
                            soft,
                            hard,
                        }
                    })
                    .collect();
                s += bag.len();
                out.push(GraphMasks {
                    id: graphs[gi].id,
                    bag,
                    masks,
                    prediction: pred,
                });
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> crate::diffmath::Checkpoint {
        let c = &self.config;
        self.scorer
            .to_checkpoint()
            .with_meta("tau_init", c.tau_init)
            .with_meta("tau_final", c.tau_final)
            .with_meta("threshold", c.threshold)
            .with_meta("l1_coeff", c.l1_coeff)
            .with_meta("epochs", c.epochs)
            .with_meta("lr", c.lr)
            .with_meta("batch_size", c.batch_size)
            .with_meta("seed", c.seed)
            .with_meta("noise", c.noise)
    }

    pub fn from_checkpoint(ck: &crate::diffmath::Checkpoint) -> Result<Self> {
        let scorer = EdgeScorer::from_checkpoint(ck)?;
        fn get<T: std::str::FromStr>(ck: &crate::diffmath::Checkpoint, k: &str) -> Result<T> {
            ck.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::arg(format!("explainer checkpoint lacks valid '{k}'")))
        }
        let config = ExplainerConfig {
            mlp_hidden: scorer.hidden(),
            tau_init: get(ck, "tau_init")?,
            tau_final: get(ck, "tau_final")?,
            threshold: get(ck, "threshold")?,
            l1_coeff: get(ck, "l1_coeff")?,
            epochs: get(ck, "epochs")?,
            lr: get(ck, "lr")?,
            batch_size: get(ck, "batch_size")?,
            seed: get(ck, "seed")?,
            noise: get(ck, "noise")?,
        };
        config.validate()?;
        Ok(Self { scorer, config })
    }
}

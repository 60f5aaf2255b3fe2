//! DS / DSS subgraph networks built from edge-weighted GIN layers, and the
//! plain GIN baseline (a DS network over the one-member bag `{G}`).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Bound, Checkpoint, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::esan::batch::BagBatch;
use crate::graph::{Graph, SubgraphBag};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    /// Subgraphs encoded independently.
    Ds,
    /// Each layer adds a term computed on the bag-summed graph.
    Dss,
    /// Plain GIN on the whole graph.
    GinBaseline,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Ds => "ds",
            EncoderKind::Dss => "dss",
            EncoderKind::GinBaseline => "gin-baseline",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ds" => Ok(EncoderKind::Ds),
            "dss" => Ok(EncoderKind::Dss),
            "gin-baseline" | "gin" | "baseline" => Ok(EncoderKind::GinBaseline),
            other => Err(Error::arg(format!("unknown encoder '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Mean,
    Sum,
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Readout::Mean),
            "sum" => Ok(Readout::Sum),
            other => Err(Error::arg(format!("unknown readout '{other}'"))),
        }
    }
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Mean => "mean",
            Readout::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsanConfig {
    pub encoder: EncoderKind,
    pub input_dim: usize,
    pub num_layers: usize,
    pub hidden: usize,
    pub readout: Readout,
    pub set_hidden: usize,
    pub num_classes: usize,
    pub epsilon_learnable: bool,
}

impl EsanConfig {
    pub fn new(encoder: EncoderKind, input_dim: usize, num_classes: usize) -> Self {
        Self {
            encoder,
            input_dim,
            num_layers: 3,
            hidden: 32,
            readout: Readout::Mean,
            set_hidden: 32,
            num_classes,
            epsilon_learnable: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("set_hidden", self.set_hidden),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn to_meta(&self) -> Vec<(String, String)> {
        vec![
            ("encoder".into(), self.encoder.to_string()),
            ("input_dim".into(), self.input_dim.to_string()),
            ("num_layers".into(), self.num_layers.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("readout".into(), self.readout.to_string()),
            ("set_hidden".into(), self.set_hidden.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            ("epsilon_learnable".into(), self.epsilon_learnable.to_string()),
        ]
    }

    fn from_meta(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ck.meta(k)
                .ok_or_else(|| Error::arg(format!("checkpoint lacks '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::arg(format!("checkpoint '{k}' is not an integer")))
        };
        Ok(Self {
            encoder: get("encoder")?.parse()?,
            input_dim: num("input_dim")?,
            num_layers: num("num_layers")?,
            hidden: num("hidden")?,
            readout: get("readout")?.parse()?,
            set_hidden: num("set_hidden")?,
            num_classes: num("num_classes")?,
            epsilon_learnable: get("epsilon_learnable")? == "true",
        })
    }
}

/// Parameters of one edge-weighted GIN layer:
/// `x_i <- mlp((1 + eps) x_i + sum_j w_ij x_j)`, `mlp = lin2(relu(lin1(.)))`.
#[derive(Debug, Clone)]
pub struct GinParams {
    pub eps: Option<ParamId>,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl GinParams {
    fn init(params: &mut ParamSet, prefix: &str, d_in: usize, d_out: usize, eps: bool, rng: &mut ChaCha8Rng) -> Self {
        let eps = eps.then(|| params.add(format!("{prefix}.eps"), Matrix::zeros(1, 1)));
        let w1 = params.add_uniform(format!("{prefix}.w1"), d_in, d_out, d_in, rng);
        let b1 = params.add_uniform(format!("{prefix}.b1"), d_in, d_out, 1, rng);
        let w2 = params.add_uniform(format!("{prefix}.w2"), d_out, d_out, d_out, rng);
        let b2 = params.add_uniform(format!("{prefix}.b2"), d_out, d_out, 1, rng);
        Self { eps, w1, b1, w2, b2 }
    }

    fn ids(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.eps.into_iter().collect();
        v.extend([self.w1, self.b1, self.w2, self.b2]);
        v
    }
}

/// Message passing structure for one GIN application.
pub struct Messages<'a> {
    pub src: &'a Arc<[usize]>,
    pub dst: &'a Arc<[usize]>,
    /// Message `k` is scaled by row `weight_index[k]` of the weight column.
    pub weight_index: &'a Arc<[usize]>,
    pub num_rows: usize,
}

/// Two-layer perceptron with relu in between.
pub(crate) fn mlp2(tape: &mut Tape, bound: &Bound, x: Var, w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId) -> Result<Var> {
    let h = tape.matmul(x, bound.get(w1))?;
    let h = tape.add_row(h, bound.get(b1))?;
    let h = tape.relu(h);
    let h = tape.matmul(h, bound.get(w2))?;
    tape.add_row(h, bound.get(b2))
}

/// Edge-weighted GIN layer. `weights` is a column with one entry per edge
/// referenced by `msgs.weight_index`.
pub fn gin_layer(tape: &mut Tape, bound: &Bound, p: &GinParams, x: Var, msgs: &Messages<'_>, weights: Var) -> Result<Var> {
    let w = tape.gather_rows(weights, msgs.weight_index.clone())?;
    let xs = tape.gather_rows(x, msgs.src.clone())?;
    let m = tape.mul_col(xs, w)?;
    let agg = tape.scatter_add_rows(m, msgs.dst.clone(), msgs.num_rows)?;
    let own = match p.eps {
        Some(eps) => {
            let k = tape.add_scalar(bound.get(eps), 1.0);
            tape.scale_by(x, k)?
        }
        None => x,
    };
    let h = tape.add(own, agg)?;
    mlp2(tape, bound, h, p.w1, p.b1, p.w2, p.b2)
}

#[derive(Debug, Clone)]
struct LayerParams {
    local: GinParams,
    shared: Option<GinParams>,
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub logits: Var,
    /// Final encoder node embeddings, one row per subgraph row.
    pub embeddings: Var,
}

#[derive(Debug, Clone)]
pub struct EsanModel {
    config: EsanConfig,
    params: ParamSet,
    layers: Vec<LayerParams>,
    set_w1: ParamId,
    set_b1: ParamId,
    set_w2: ParamId,
    set_b2: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

impl EsanModel {
    pub fn new(config: EsanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut layers = Vec::with_capacity(config.num_layers);
        for k in 0..config.num_layers {
            let d_in = if k == 0 { config.input_dim } else { config.hidden };
            let local = GinParams::init(&mut params, &format!("layer{k}.local"), d_in, config.hidden, config.epsilon_learnable, &mut rng);
            let shared = (config.encoder == EncoderKind::Dss).then(|| {
                GinParams::init(&mut params, &format!("layer{k}.shared"), d_in, config.hidden, config.epsilon_learnable, &mut rng)
            });
            layers.push(LayerParams { local, shared });
        }
        let (h, sh, c) = (config.hidden, config.set_hidden, config.num_classes);
        let set_w1 = params.add_uniform("set.w1", h, sh, h, &mut rng);
        let set_b1 = params.add_uniform("set.b1", h, sh, 1, &mut rng);
        let set_w2 = params.add_uniform("set.w2", sh, sh, sh, &mut rng);
        let set_b2 = params.add_uniform("set.b2", sh, sh, 1, &mut rng);
        let head_w = params.add_uniform("head.w", sh, c, sh, &mut rng);
        let head_b = params.add_uniform("head.b", sh, c, 1, &mut rng);
        Ok(Self {
            config,
            params,
            layers,
            set_w1,
            set_b1,
            set_w2,
            set_b2,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &EsanConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Parameter ids of the shared (bag-summed) GIN of every DSS layer.
    pub fn shared_param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .filter_map(|l| l.shared.as_ref())
            .flat_map(GinParams::ids)
            .collect()
    }

    /// Parameter ids of the per-subgraph GIN of every layer.
    pub fn local_param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.local.ids()).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.params.clone());
        ck.meta = self.config.to_meta();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = EsanConfig::from_meta(ck)?;
        let mut model = Self::new(config, 0)?;
        model.params.load_from(&ck.params)?;
        Ok(model)
    }

    /// Forward pass on the tape. `weights`, when given, is a `[slots x 1]`
    /// column of edge weights in slot order; otherwise every edge weighs 1.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, batch: &BagBatch, weights: Option<Var>) -> Result<Forward> {
        if batch.feature_dim() != self.config.input_dim {
            return Err(Error::arg(format!(
                "batch feature width {} but model expects {}",
                batch.feature_dim(),
                self.config.input_dim
            )));
        }
        let weights = match weights {
            Some(w) => {
                if tape.shape(w) != (batch.num_slots(), 1) {
                    return Err(Error::Shape {
                        op: "esan.forward weights",
                        left: tape.shape(w),
                        right: (batch.num_slots(), 1),
                    });
                }
                w
            }
            None => tape.column(vec![1.0; batch.num_slots()]),
        };
        let local_msgs = Messages {
            src: &batch.msg_src,
            dst: &batch.msg_dst,
            weight_index: &batch.msg_slot,
            num_rows: batch.num_rows(),
        };
        let parent_msgs = Messages {
            src: &batch.parent_msg_src,
            dst: &batch.parent_msg_dst,
            weight_index: &batch.parent_msg_edge,
            num_rows: batch.num_parent_rows,
        };
        // aggregated adjacency and features are averaged over the bag, not
        // summed, so their scale does not grow with the bag size
        let parent_weights = if self.config.encoder == EncoderKind::Dss {
            let sum = tape.scatter_add_rows(weights, batch.slot_parent_edge.clone(), batch.num_parent_edges)?;
            let inv = tape.column(batch.parent_edge_inv_bag.clone());
            Some(tape.mul_col(sum, inv)?)
        } else {
            None
        };
        let inv_rows = tape.column(batch.parent_row_inv_bag.clone());

        let mut x = tape.constant(batch.features.clone());
        for layer in &self.layers {
            let mut h = gin_layer(tape, bound, &layer.local, x, &local_msgs, weights)?;
            if let (Some(shared), Some(pw)) = (&layer.shared, parent_weights) {
                let xsum = tape.scatter_add_rows(x, batch.row_parent.clone(), batch.num_parent_rows)?;
                let xsum = tape.mul_col(xsum, inv_rows)?;
                let hp = gin_layer(tape, bound, shared, xsum, &parent_msgs, pw)?;
                let back = tape.gather_rows(hp, batch.row_parent.clone())?;
                h = tape.add(h, back)?;
            }
            x = tape.relu(h);
        }
        let embeddings = x;

        let z = tape.scatter_add_rows(embeddings, batch.row_subgraph.clone(), batch.num_subgraphs())?;
        let z = match self.config.readout {
            Readout::Mean => {
                let inv = tape.column(batch.subgraph_inv_nodes.clone());
                tape.mul_col(z, inv)?
            }
            Readout::Sum => z,
        };
        let pooled = tape.scatter_add_rows(z, batch.subgraph_graph.clone(), batch.num_graphs())?;
        let inv_bag = tape.column(batch.graph_inv_bag.clone());
        let pooled = tape.mul_col(pooled, inv_bag)?;
        let g = mlp2(tape, bound, pooled, self.set_w1, self.set_b1, self.set_w2, self.set_b2)?;
        let g = tape.relu(g);
        let logits = tape.matmul(g, bound.get(self.head_w))?;
        let logits = tape.add_row(logits, bound.get(self.head_b))?;
        Ok(Forward { logits, embeddings })
    }

    /// Logits and embeddings without recording gradients.
    pub fn evaluate(&self, batch: &BagBatch, weights: Option<&[f64]>) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let w = weights.map(|w| tape.column(w.to_vec()));
        let out = self.forward(&mut tape, &bound, batch, w)?;
        Ok((tape.to_matrix(out.logits), tape.to_matrix(out.embeddings)))
    }

    /// Class logits of one graph given its bag, plus per-subgraph node
    /// embeddings. `masks`, when given, holds one weight per retained edge of
    /// each subgraph.
    pub fn forward_graph(&self, g: &Graph, bag: &SubgraphBag, masks: Option<&[Vec<f64>]>) -> Result<(Vec<f64>, Vec<Matrix>)> {
        if bag.parent().as_ref() != g {
            return Err(Error::arg("bag was not built from this graph"));
        }
        let batch = BagBatch::new(&[bag])?;
        let flat = masks.map(|m| batch.flatten_masks(m)).transpose()?;
        let (logits, emb) = self.evaluate(&batch, flat.as_deref())?;
        let mut per_sub = Vec::with_capacity(bag.len());
        let mut offset = 0;
        for s in bag.subgraphs() {
            let rows: Vec<usize> = (offset..offset + s.num_nodes()).collect();
            per_sub.push(emb.select_rows(&rows));
            offset += s.num_nodes();
        }
        Ok((logits.row(0).to_vec(), per_sub))
    }
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Arg-max class per row of a logits matrix.
pub fn predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Bound, Checkpoint, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, Subgraph};
use crate::matrix::Matrix;

/// Edge scorer: `omega = mlp([a + b, |a - b|])` over the endpoint
/// embeddings `a`, `b`, so the score does not depend on edge orientation.
#[derive(Debug, Clone)]
pub struct EdgeScorer {
    embed_dim: usize,
    hidden: usize,
    params: ParamSet,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl EdgeScorer {
    pub fn new(embed_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if embed_dim == 0 || hidden == 0 {
            return Err(Error::arg("scorer dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let d = 2 * embed_dim;
        let w1 = params.add_uniform("scorer.w1", d, hidden, d, &mut rng);
        let b1 = params.add_uniform("scorer.b1", d, hidden, 1, &mut rng);
        let w2 = params.add_uniform("scorer.w2", hidden, 1, hidden, &mut rng);
        let b2 = params.add_uniform("scorer.b2", hidden, 1, 1, &mut rng);
        Ok(Self {
            embed_dim,
            hidden,
            params,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `[slots x 1]` column of latent scores for the edges `(src[k], dst[k])`
    /// (row indices into `emb`).
    pub fn omega(&self, tape: &mut Tape, bound: &Bound, emb: Var, src: Arc<[usize]>, dst: Arc<[usize]>) -> Result<Var> {
        if tape.shape(emb).1 != self.embed_dim {
            return Err(Error::arg(format!(
                "embeddings have width {}, scorer expects {}",
                tape.shape(emb).1,
                self.embed_dim
            )));
        }
        let a = tape.gather_rows(emb, src)?;
        let b = tape.gather_rows(emb, dst)?;
        let sum = tape.add(a, b)?;
        let diff = tape.sub(a, b)?;
        let diff = tape.abs(diff);
        let x = tape.concat_cols(&[sum, diff])?;
        let h = tape.matmul(x, bound.get(self.w1))?;
        let h = tape.add_row(h, bound.get(self.b1))?;
        let h = tape.relu(h);
        let o = tape.matmul(h, bound.get(self.w2))?;
        tape.add_row(o, bound.get(self.b2))
    }

    /// Latent scores without recording gradients.
    pub fn omega_values(&self, emb: &Matrix, src: Arc<[usize]>, dst: Arc<[usize]>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let e = tape.constant(emb.clone());
        let o = self.omega(&mut tape, &bound, e, src, dst)?;
        Ok(tape.value(o).to_vec())
    }

    /// One score per retained edge of `sub`, given its `[N_i x h]` embeddings.
    pub fn edge_logits(&self, emb: &Matrix, sub: &Subgraph, parent: &Graph) -> Result<Vec<f64>> {
        if emb.rows() != sub.num_nodes() {
            return Err(Error::arg(format!(
                "{} embedding rows for a subgraph with {} nodes",
                emb.rows(),
                sub.num_nodes()
            )));
        }
        let (src, dst): (Vec<usize>, Vec<usize>) = sub.local_edges(parent).into_iter().unzip();
        self.omega_values(emb, src.into(), dst.into())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params.clone())
            .with_meta("kind", "edge-scorer")
            .with_meta("embed_dim", self.embed_dim)
            .with_meta("mlp_hidden", self.hidden)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind") != Some("edge-scorer") {
            return Err(Error::arg("checkpoint does not hold an edge scorer"));
        }
        let num = |k: &str| -> Result<usize> {
            ck.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::arg(format!("checkpoint lacks integer '{k}'")))
        };
        let mut s = Self::new(num("embed_dim")?, num("mlp_hidden")?, 0)?;
        s.params.load_from(&ck.params)?;
        Ok(s)
    }
}

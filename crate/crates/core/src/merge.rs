//! Merging per-subgraph edge masks into one explanation of the parent graph.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubgraphBag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    /// Per-edge sums divided by the largest sum.
    #[default]
    SumRescale,
    /// Per-edge sums divided by the bag size.
    Mean,
    Max,
}

impl MergeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeMode::SumRescale => "sum_rescale",
            MergeMode::Mean => "mean",
            MergeMode::Max => "max",
        }
    }
}

impl fmt::Display for MergeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_rescale" => Ok(MergeMode::SumRescale),
            "mean" => Ok(MergeMode::Mean),
            "max" => Ok(MergeMode::Max),
            other => Err(Error::arg(format!("unknown merge mode '{other}'"))),
        }
    }
}

/// One score in [0,1] per parent edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub graph: Arc<Graph>,
    pub scores: Vec<f64>,
    pub mode: MergeMode,
}

/// Merges one weight vector per subgraph (aligned with its retained edges).
/// An edge missing from a subgraph counts as weight 0 there.
pub fn merge_masks(bag: &SubgraphBag, masks: &[Vec<f64>], mode: MergeMode) -> Result<Explanation> {
    if masks.len() != bag.len() {
        return Err(Error::arg(format!("{} masks for a bag of {}", masks.len(), bag.len())));
    }
    let m = bag.parent().num_edges();
    let mut sum = vec![0.0; m];
    let mut max = vec![0.0f64; m];
    for (k, (sub, mask)) in bag.subgraphs().iter().zip(masks).enumerate() {
        if mask.len() != sub.num_edges() {
            return Err(Error::arg(format!(
                "mask {k} has {} weights for {} retained edges",
                mask.len(),
                sub.num_edges()
            )));
        }
        for (&e, &w) in sub.parent_edges().iter().zip(mask) {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::arg(format!("mask {k} weight {w} outside [0,1]")));
            }
            sum[e] += w;
            max[e] = max[e].max(w);
        }
    }
    let scores = match mode {
        MergeMode::SumRescale => {
            let top = sum.iter().copied().fold(0.0, f64::max);
            if top > 0.0 {
                sum.iter().map(|&s| s / top).collect()
            } else {
                sum
            }
        }
        MergeMode::Mean => {
            let n = bag.len() as f64;
            sum.iter().map(|&s| s / n).collect()
        }
        MergeMode::Max => max,
    };
    Ok(Explanation {
        graph: bag.parent().clone(),
        scores,
        mode,
    })
}

impl Explanation {
    /// The `ceil(q |E|)` highest-scoring edges, ties to the lower index,
    /// returned in rank order.
    pub fn top_fraction(&self, q: f64) -> Result<Vec<usize>> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::arg(format!("fraction {q} outside (0,1]")));
        }
        let k = ((q * self.scores.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(k.min(self.scores.len()));
        Ok(idx)
    }

    fn truth(&self, e: usize) -> Option<bool> {
        self.graph.ground_truth().map(|t| t[e])
    }

    /// `edge,source,target,score,ground_truth` with an empty flag when the
    /// graph has no ground truth.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edge,source,target,score,ground_truth\n");
        for (e, (&(i, j), &sc)) in self.graph.edges().iter().zip(&self.scores).enumerate() {
            let t = match self.truth(e) {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            s.push_str(&format!("{e},{i},{j},{sc},{t}\n"));
        }
        s
    }

    /// Graphviz rendering; darker and wider edges score higher, ground-truth
    /// edges are dashed.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("graph \"{name}\" {{\n  node [shape=circle];\n");
        for v in 0..self.graph.num_nodes() {
            s.push_str(&format!("  {v};\n"));
        }
        for (e, (&(i, j), &sc)) in self.graph.edges().iter().zip(&self.scores).enumerate() {
            let grey = (255.0 * (1.0 - sc)).round().clamp(0.0, 255.0) as u8;
            let style = if self.truth(e) == Some(true) { "dashed" } else { "solid" };
            s.push_str(&format!(
                "  {i} -- {j} [color=\"#{grey:02x}{grey:02x}{grey:02x}\", penwidth={:.3}, style={style}, label=\"{sc:.2}\"];\n",
                0.5 + 4.5 * sc
            ));
        }
        s.push_str("}\n");
        s
    }
}

//! Subgraph selection policies: edge deletion, node deletion, ego networks
//! (optionally with a root-indicator feature), plus bag subsampling.

use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, Graph, PolicyTag, Subgraph, SubgraphBag};

pub const DEFAULT_EGO_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyTag,
    /// Required for `EgoNetwork` / `EgoNetworkPlus`, ignored otherwise.
    pub ego_depth: Option<usize>,
    pub max_bag_size: Option<usize>,
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyTag) -> Self {
        let ego_depth = matches!(kind, PolicyTag::EgoNetwork | PolicyTag::EgoNetworkPlus)
            .then_some(DEFAULT_EGO_DEPTH);
        Self {
            kind,
            ego_depth,
            max_bag_size: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ego = matches!(self.kind, PolicyTag::EgoNetwork | PolicyTag::EgoNetworkPlus);
        match (ego, self.ego_depth) {
            (true, None) => return Err(Error::arg("ego policies need an ego depth")),
            (true, Some(0)) => return Err(Error::arg("ego depth must be at least 1")),
            (false, Some(_)) => {
                return Err(Error::arg(format!(
                    "ego depth given for non-ego policy {}",
                    self.kind
                )))
            }
            _ => {}
        }
        if self.max_bag_size == Some(0) {
            return Err(Error::arg("max bag size must be at least 1"));
        }
        Ok(())
    }

    /// Full bag for `g` under this policy (no subsampling).
    pub fn full_bag(&self, g: &Arc<Graph>) -> Result<SubgraphBag> {
        self.validate()?;
        match self.kind {
            PolicyTag::EdgeDeletion => edge_deletion_bag(g),
            PolicyTag::NodeDeletion => node_deletion_bag(g),
            PolicyTag::EgoNetwork => ego_network_bag(g, self.ego_depth.unwrap_or(DEFAULT_EGO_DEPTH), false),
            PolicyTag::EgoNetworkPlus => {
                ego_network_bag(g, self.ego_depth.unwrap_or(DEFAULT_EGO_DEPTH), true)
            }
            PolicyTag::Whole => Ok(SubgraphBag::whole(g.clone())),
        }
    }

    /// Full bag, subsampled to `max_bag_size` with a seed derived from
    /// `(self.seed, stream)`.
    pub fn bag(&self, g: &Arc<Graph>, stream: u64) -> Result<SubgraphBag> {
        let bag = self.full_bag(g)?;
        match self.max_bag_size {
            Some(max) => subsample_bag(&bag, max, mix_seed(self.seed, stream)),
            None => Ok(bag),
        }
    }

    /// Feature width of subgraphs produced from a graph of width `d`.
    pub fn output_feature_dim(&self, d: usize) -> usize {
        if self.kind == PolicyTag::EgoNetworkPlus {
            d + 1
        } else {
            d
        }
    }
}

/// Splitmix-style mixing of two seeds into one.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One subgraph per edge, each missing exactly that edge. An edgeless graph
/// yields a bag holding the graph itself.
pub fn edge_deletion_bag(g: &Arc<Graph>) -> Result<SubgraphBag> {
    let m = g.num_edges();
    if m == 0 {
        let s = Subgraph::whole(g);
        return SubgraphBag::new(g.clone(), vec![s], PolicyTag::EdgeDeletion);
    }
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let subgraphs = (0..m)
        .map(|removed| {
            let edges = (0..m).filter(|&e| e != removed).collect();
            Subgraph::new(g, nodes.clone(), edges, Some(g.features().clone()), None)
        })
        .collect::<Result<Vec<_>>>()?;
    SubgraphBag::new(g.clone(), subgraphs, PolicyTag::EdgeDeletion)
}

/// One subgraph per node `v`: the graph without `v` and its incident edges.
pub fn node_deletion_bag(g: &Arc<Graph>) -> Result<SubgraphBag> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::arg("node deletion needs at least two nodes"));
    }
    let subgraphs = (0..n)
        .map(|removed| {
            let nodes: Vec<usize> = (0..n).filter(|&v| v != removed).collect();
            induced_subgraph(g, &nodes)
        })
        .collect::<Result<Vec<_>>>()?;
    SubgraphBag::new(g.clone(), subgraphs, PolicyTag::NodeDeletion)
}

/// One subgraph per node: the depth-`k` ego network around it. With
/// `mark_root`, a trailing feature column is 1 on the root and 0 elsewhere.
///
/// An edgeless graph yields a bag holding the graph itself (with an all-zero
/// indicator column when `mark_root`).
pub fn ego_network_bag(g: &Arc<Graph>, k: usize, mark_root: bool) -> Result<SubgraphBag> {
    if k == 0 {
        return Err(Error::arg("ego depth must be at least 1"));
    }
    let tag = if mark_root {
        PolicyTag::EgoNetworkPlus
    } else {
        PolicyTag::EgoNetwork
    };
    if g.num_edges() == 0 {
        let mut s = Subgraph::whole(g);
        if mark_root {
            let f = s.features().with_extra_column(&vec![0.0; s.num_nodes()])?;
            s = s.with_features(f)?;
        }
        return SubgraphBag::new(g.clone(), vec![s], tag);
    }
    let subgraphs = (0..g.num_nodes())
        .map(|root| {
            let nodes: Vec<usize> = g
                .bfs_distances(root)
                .iter()
                .enumerate()
                .filter(|(_, d)| d.is_some_and(|d| d <= k))
                .map(|(v, _)| v)
                .collect();
            let s = induced_subgraph(g, &nodes)?.with_root(root);
            if !mark_root {
                return Ok(s);
            }
            let indicator: Vec<f64> = s
                .nodes()
                .iter()
                .map(|&v| if v == root { 1.0 } else { 0.0 })
                .collect();
            let f = s.features().with_extra_column(&indicator)?;
            s.with_features(f)
        })
        .collect::<Result<Vec<_>>>()?;
    SubgraphBag::new(g.clone(), subgraphs, tag)
}

/// Uniform sample of `max_bag_size` members without replacement, kept in
/// their original relative order. Identity when the bag is already small.
pub fn subsample_bag(bag: &SubgraphBag, max_bag_size: usize, seed: u64) -> Result<SubgraphBag> {
    if max_bag_size == 0 {
        return Err(Error::arg("max bag size must be at least 1"));
    }
    if bag.len() <= max_bag_size {
        return Ok(bag.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, bag.len(), max_bag_size).into_vec();
    picked.sort_unstable();
    let subgraphs = picked.iter().map(|&k| bag.subgraphs()[k].clone()).collect();
    SubgraphBag::new(bag.parent().clone(), subgraphs, bag.policy())
}

//! Synthetic two-class benchmark: a preferential-attachment tree with either
//! a "house" or a 5-cycle hung off one of its nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::Graph;
use crate::matrix::Matrix;

pub const NUM_GRAPHS: usize = 1000;
pub const BASE_NODES: usize = 20;
pub const MOTIF_NODES: usize = 5;
pub const FEATURE_DIM: usize = 10;
pub const FEATURE_VALUE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motif {
    /// Square with a triangular roof: 5 nodes, 6 edges. Class 0.
    House,
    /// 5 nodes, 5 edges. Class 1.
    Cycle,
}

impl Motif {
    pub fn class(self) -> usize {
        match self {
            Motif::House => 0,
            Motif::Cycle => 1,
        }
    }

    /// Edges over local motif ids `0..5`.
    pub fn edges(self) -> &'static [(usize, usize)] {
        match self {
            Motif::House => &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)],
            Motif::Cycle => &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
        }
    }
}

/// Barabási–Albert graph with one edge per arriving node, as an edge list.
/// Starts from the single edge `(0, 1)`; each later node links to an existing
/// node chosen with probability proportional to its degree.
pub fn barabasi_albert_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let mut edges = vec![(0, 1)];
    // every node appears once per incident edge
    let mut endpoints = vec![0, 1];
    for v in 2..n {
        let target = endpoints[rng.random_range(0..endpoints.len())];
        edges.push((target, v));
        endpoints.push(target);
        endpoints.push(v);
    }
    edges
}

/// One benchmark graph: base tree, then motif edges, then the single
/// attachment edge from a uniform base node to motif node 0.
pub fn motif_graph<R: Rng>(motif: Motif, rng: &mut R) -> Result<Graph> {
    let n = BASE_NODES + MOTIF_NODES;
    let mut edges = barabasi_albert_tree(BASE_NODES, rng);
    let base_edges = edges.len();
    edges.extend(
        motif
            .edges()
            .iter()
            .map(|&(a, b)| (BASE_NODES + a, BASE_NODES + b)),
    );
    let anchor = rng.random_range(0..BASE_NODES);
    edges.push((anchor, BASE_NODES));
    let motif_edges = motif.edges().len();
    let truth = (0..edges.len())
        .map(|e| e >= base_edges && e < base_edges + motif_edges)
        .collect();
    Graph::new(n, edges, Matrix::filled(n, FEATURE_DIM, FEATURE_VALUE), motif.class())?
        .with_ground_truth(truth)
}

/// 1000 graphs: the first 500 carry a house (class 0), the rest a 5-cycle.
pub fn generate_ba2motifs(seed: u64) -> Result<Vec<Graph>> {
    generate_ba2motifs_n(NUM_GRAPHS, seed)
}

/// `n` graphs, the first `n / 2` houses and the rest cycles.
pub fn generate_ba2motifs_n(n: usize, seed: u64) -> Result<Vec<Graph>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let motif = if i < n / 2 {
                Motif::House
            } else {
                Motif::Cycle
            };
            motif_graph(motif, &mut rng)
        })
        .collect()
}

//! Undirected attributed graphs, subgraphs that keep provenance back to their
//! parent, and bags of subgraphs.
//!
//! Every per-edge quantity in the crate (mask weights, merged scores, ground
//! truth) is indexed by the position of an unordered pair in
//! [`Graph::edges`], so a weight on `{i, j}` is the same weight seen from
//! both endpoints.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    label: usize,
    ground_truth: Option<Vec<bool>>,
    // per node: (neighbor, edge index)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Pairs are stored as `(min, max)`
    /// in the order given.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        label: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::arg(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        let mut canonical = Vec::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::arg(format!(
                    "edge ({a},{b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::arg(format!("self-loop on node {a}")));
            }
            let (i, j) = (a.min(b), a.max(b));
            if adjacency[i].iter().any(|&(n, _)| n == j) {
                return Err(Error::arg(format!("duplicate edge ({i},{j})")));
            }
            let idx = canonical.len();
            canonical.push((i, j));
            adjacency[i].push((j, idx));
            adjacency[j].push((i, idx));
        }
        Ok(Self {
            num_nodes,
            edges: canonical,
            features,
            label,
            ground_truth: None,
            adjacency,
        })
    }

    /// Builds a graph from a symmetric 0/1 adjacency matrix; edges are taken
    /// in row-major order of the upper triangle.
    pub fn from_adjacency(adj: &Matrix, features: Matrix, label: usize) -> Result<Self> {
        let n = adj.rows();
        if adj.cols() != n {
            return Err(Error::arg("adjacency matrix must be square"));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            if adj.get(i, i) != 0.0 {
                return Err(Error::arg(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                if adj.get(i, j) != adj.get(j, i) {
                    return Err(Error::arg(format!("asymmetric entry ({i},{j})")));
                }
                if adj.get(i, j) != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges, features, label)
    }

    pub fn with_ground_truth(mut self, truth: Vec<bool>) -> Result<Self> {
        if truth.len() != self.edges.len() {
            return Err(Error::arg(format!(
                "ground truth has {} entries for {} edges",
                truth.len(),
                self.edges.len()
            )));
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn ground_truth(&self) -> Option<&[bool]> {
        self.ground_truth.as_deref()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// `(neighbor, edge index)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    /// Index of the unordered pair `{i, j}` in [`Graph::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Result<Option<usize>> {
        if i >= self.num_nodes || j >= self.num_nodes {
            return Err(Error::arg(format!(
                "node ({i},{j}) out of range for {} nodes",
                self.num_nodes
            )));
        }
        if i == j {
            return Err(Error::arg(format!("self-loop query on node {i}")));
        }
        let (probe, other) = if self.adjacency[i].len() <= self.adjacency[j].len() {
            (i, j)
        } else {
            (j, i)
        };
        Ok(self.adjacency[probe]
            .iter()
            .find(|&&(n, _)| n == other)
            .map(|&(_, e)| e))
    }

    pub fn adjacency_matrix(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    /// Renames node `v` to `perm[v]`, keeping the edge order (so per-edge
    /// vectors stay aligned).
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::arg("permutation length differs from node count"));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::arg("not a permutation"));
            }
        }
        let mut inverse = vec![0; n];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        let features = self.features.select_rows(&inverse);
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j]));
        let mut g = Self::new(n, edges, features, self.label)?;
        g.ground_truth = self.ground_truth.clone();
        Ok(g)
    }

    /// Hop distance from `source` to every node, `None` when unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for &(w, _) in &self.adjacency[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

/// A subgraph that keeps parent node ids and parent edge indices.
///
/// `nodes` is sorted; local row `r` of `features` belongs to parent node
/// `nodes[r]`. `parent_edges` is sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    nodes: Vec<usize>,
    parent_edges: Vec<usize>,
    features: Matrix,
    root: Option<usize>,
}

impl Subgraph {
    pub fn new(
        parent: &Graph,
        mut nodes: Vec<usize>,
        mut parent_edges: Vec<usize>,
        features: Option<Matrix>,
        root: Option<usize>,
    ) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        parent_edges.sort_unstable();
        let features = match features {
            Some(f) => f,
            None => parent.features().select_rows(&nodes),
        };
        let s = Self {
            nodes,
            parent_edges,
            features,
            root,
        };
        s.validate(parent)?;
        Ok(s)
    }

    /// The whole parent as a subgraph of itself.
    pub fn whole(parent: &Graph) -> Self {
        Self {
            nodes: (0..parent.num_nodes()).collect(),
            parent_edges: (0..parent.num_edges()).collect(),
            features: parent.features().clone(),
            root: None,
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn parent_edges(&self) -> &[usize] {
        &self.parent_edges
    }

    pub fn num_edges(&self) -> usize {
        self.parent_edges.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    /// Local row of a parent node id.
    pub fn local_index(&self, parent_node: usize) -> Option<usize> {
        self.nodes.binary_search(&parent_node).ok()
    }

    /// Retained edges as local `(row, row)` pairs, aligned with `parent_edges`.
    pub fn local_edges(&self, parent: &Graph) -> Vec<(usize, usize)> {
        self.parent_edges
            .iter()
            .map(|&e| {
                let (i, j) = parent.edges()[e];
                let li = self.local_index(i).expect("validated subgraph");
                let lj = self.local_index(j).expect("validated subgraph");
                (li, lj)
            })
            .collect()
    }

    pub(crate) fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.nodes.len() {
            return Err(Error::arg("subgraph feature rows differ from node count"));
        }
        self.features = features;
        Ok(self)
    }

    pub(crate) fn with_root(mut self, root: usize) -> Self {
        self.root = Some(root);
        self
    }

    pub fn validate(&self, parent: &Graph) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::arg("subgraph has no nodes"));
        }
        if let Some(&last) = self.nodes.last() {
            if last >= parent.num_nodes() {
                return Err(Error::arg(format!("subgraph node {last} not in parent")));
            }
        }
        if self.features.rows() != self.nodes.len() {
            return Err(Error::arg("subgraph feature rows differ from node count"));
        }
        for w in self.parent_edges.windows(2) {
            if w[0] == w[1] {
                return Err(Error::arg(format!("parent edge {} listed twice", w[0])));
            }
        }
        for &e in &self.parent_edges {
            let &(i, j) = parent
                .edges()
                .get(e)
                .ok_or_else(|| Error::arg(format!("parent edge {e} out of range")))?;
            if self.local_index(i).is_none() || self.local_index(j).is_none() {
                return Err(Error::arg(format!(
                    "edge {e} = ({i},{j}) has an endpoint outside the subgraph"
                )));
            }
        }
        if let Some(r) = self.root {
            if self.local_index(r).is_none() {
                return Err(Error::arg(format!("root {r} not retained")));
            }
        }
        Ok(())
    }
}

/// Subgraph retaining exactly the edges with both endpoints in `nodes`.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<Subgraph> {
    if nodes.is_empty() {
        return Err(Error::arg("induced subgraph of an empty node set"));
    }
    let mut keep = vec![false; g.num_nodes()];
    for &v in nodes {
        if v >= g.num_nodes() {
            return Err(Error::arg(format!("node {v} out of range")));
        }
        keep[v] = true;
    }
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| keep[i] && keep[j])
        .map(|(e, _)| e)
        .collect();
    Subgraph::new(g, nodes.to_vec(), edges, None, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyTag {
    EdgeDeletion,
    NodeDeletion,
    EgoNetwork,
    EgoNetworkPlus,
    /// The graph itself as the only member; used by the plain GIN baseline.
    Whole,
}

impl PolicyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::EdgeDeletion => "ed",
            PolicyTag::NodeDeletion => "nd",
            PolicyTag::EgoNetwork => "en",
            PolicyTag::EgoNetworkPlus => "en+",
            PolicyTag::Whole => "whole",
        }
    }
}

impl fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ed" => Ok(PolicyTag::EdgeDeletion),
            "nd" => Ok(PolicyTag::NodeDeletion),
            "en" => Ok(PolicyTag::EgoNetwork),
            "en+" | "enplus" => Ok(PolicyTag::EgoNetworkPlus),
            "whole" => Ok(PolicyTag::Whole),
            other => Err(Error::arg(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubgraphBag {
    parent: Arc<Graph>,
    subgraphs: Vec<Subgraph>,
    policy: PolicyTag,
}

impl SubgraphBag {
    pub fn new(parent: Arc<Graph>, subgraphs: Vec<Subgraph>, policy: PolicyTag) -> Result<Self> {
        if subgraphs.is_empty() {
            return Err(Error::arg("empty subgraph bag"));
        }
        let dim = subgraphs[0].features().cols();
        for s in &subgraphs {
            s.validate(&parent)?;
            if s.features().cols() != dim {
                return Err(Error::arg("subgraphs in a bag disagree on feature width"));
            }
        }
        Ok(Self {
            parent,
            subgraphs,
            policy,
        })
    }

    pub fn whole(parent: Arc<Graph>) -> Self {
        let s = Subgraph::whole(&parent);
        Self {
            parent,
            subgraphs: vec![s],
            policy: PolicyTag::Whole,
        }
    }

    pub fn parent(&self) -> &Arc<Graph> {
        &self.parent
    }

    pub fn subgraphs(&self) -> &[Subgraph] {
        &self.subgraphs
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    pub fn policy(&self) -> PolicyTag {
        self.policy
    }

    pub fn feature_dim(&self) -> usize {
        self.subgraphs[0].features().cols()
    }

    /// Same bag with members reordered: member `k` of the result is member
    /// `order[k]` of `self`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let subgraphs = order
            .iter()
            .map(|&k| {
                self.subgraphs
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("bag member {k} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.parent.clone(), subgraphs, self.policy)
    }
}

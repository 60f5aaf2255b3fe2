//! Flattened index tables for running many bags through one tape.
//!
//! Every node of every subgraph of every bag gets one row ("subgraph row").
//! Every retained edge of every subgraph gets one "edge slot"; a slot carries
//! one mask weight that scales both directed messages across that edge.
//! Parent graphs get their own row / edge spaces, used by the shared DSS
//! term and by mask merging.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubgraphBag};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct BagBatch {
    pub(crate) num_graphs: usize,
    pub(crate) features: Matrix,
    pub(crate) labels: Vec<usize>,

    pub(crate) row_subgraph: Arc<[usize]>,
    pub(crate) row_parent: Arc<[usize]>,
    pub(crate) subgraph_graph: Arc<[usize]>,
    pub(crate) subgraph_inv_nodes: Vec<f64>,
    pub(crate) graph_inv_bag: Vec<f64>,

    pub(crate) slot_src_row: Arc<[usize]>,
    pub(crate) slot_dst_row: Arc<[usize]>,
    pub(crate) slot_subgraph: Arc<[usize]>,
    pub(crate) slot_parent_edge: Arc<[usize]>,
    pub(crate) subgraph_slots: Vec<std::ops::Range<usize>>,

    pub(crate) msg_src: Arc<[usize]>,
    pub(crate) msg_dst: Arc<[usize]>,
    pub(crate) msg_slot: Arc<[usize]>,

    pub(crate) num_parent_rows: usize,
    pub(crate) num_parent_edges: usize,
    pub(crate) parent_row_inv_bag: Vec<f64>,
    pub(crate) parent_edge_inv_bag: Vec<f64>,
    pub(crate) parent_msg_src: Arc<[usize]>,
    pub(crate) parent_msg_dst: Arc<[usize]>,
    pub(crate) parent_msg_edge: Arc<[usize]>,
}

impl BagBatch {
    pub fn new(bags: &[&SubgraphBag]) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let dim = bags[0].feature_dim();
        let mut feat = Vec::new();
        let mut labels = Vec::with_capacity(bags.len());
        let mut row_subgraph = Vec::new();
        let mut row_parent = Vec::new();
        let mut subgraph_graph = Vec::new();
        let mut subgraph_inv_nodes = Vec::new();
        let mut graph_inv_bag = Vec::with_capacity(bags.len());
        let mut slot_src_row = Vec::new();
        let mut slot_dst_row = Vec::new();
        let mut slot_subgraph = Vec::new();
        let mut slot_parent_edge = Vec::new();
        let mut subgraph_slots = Vec::new();
        let mut msg_src = Vec::new();
        let mut msg_dst = Vec::new();
        let mut msg_slot = Vec::new();
        let mut parent_msg_src = Vec::new();
        let mut parent_msg_dst = Vec::new();
        let mut parent_msg_edge = Vec::new();
        let mut parent_row_inv_bag = Vec::new();
        let mut parent_edge_inv_bag = Vec::new();

        let mut parent_row_offset = 0;
        let mut parent_edge_offset = 0;
        for (gi, bag) in bags.iter().enumerate() {
            if bag.feature_dim() != dim {
                return Err(Error::arg(format!(
                    "bag {gi} has feature width {}, expected {dim}",
                    bag.feature_dim()
                )));
            }
            let parent: &Graph = bag.parent();
            labels.push(parent.label());
            graph_inv_bag.push(1.0 / bag.len() as f64);
            for s in bag.subgraphs() {
                let si = subgraph_graph.len();
                subgraph_graph.push(gi);
                subgraph_inv_nodes.push(1.0 / s.num_nodes() as f64);
                let row_offset = row_subgraph.len();
                for (r, &v) in s.nodes().iter().enumerate() {
                    row_subgraph.push(si);
                    row_parent.push(parent_row_offset + v);
                    feat.extend_from_slice(s.features().row(r));
                }
                let start = slot_src_row.len();
                for (&e, (li, lj)) in s.parent_edges().iter().zip(s.local_edges(parent)) {
                    let slot = slot_src_row.len();
                    let (ri, rj) = (row_offset + li, row_offset + lj);
                    slot_src_row.push(ri);
                    slot_dst_row.push(rj);
                    slot_subgraph.push(si);
                    slot_parent_edge.push(parent_edge_offset + e);
                    msg_src.extend([ri, rj]);
                    msg_dst.extend([rj, ri]);
                    msg_slot.extend([slot, slot]);
                }
                subgraph_slots.push(start..slot_src_row.len());
            }
            for (e, &(i, j)) in parent.edges().iter().enumerate() {
                let (pi, pj) = (parent_row_offset + i, parent_row_offset + j);
                parent_msg_src.extend([pi, pj]);
                parent_msg_dst.extend([pj, pi]);
                parent_msg_edge.extend([parent_edge_offset + e; 2]);
            }
            parent_row_inv_bag.extend(std::iter::repeat_n(1.0 / bag.len() as f64, parent.num_nodes()));
            parent_edge_inv_bag.extend(std::iter::repeat_n(1.0 / bag.len() as f64, parent.num_edges()));
            parent_row_offset += parent.num_nodes();
            parent_edge_offset += parent.num_edges();
        }
        let rows = row_subgraph.len();
        Ok(Self {
            num_graphs: bags.len(),
            features: Matrix::from_vec(rows, dim, feat)?,
            labels,
            row_subgraph: row_subgraph.into(),
            row_parent: row_parent.into(),
            subgraph_graph: subgraph_graph.into(),
            subgraph_inv_nodes,
            graph_inv_bag,
            slot_src_row: slot_src_row.into(),
            slot_dst_row: slot_dst_row.into(),
            slot_subgraph: slot_subgraph.into(),
            slot_parent_edge: slot_parent_edge.into(),
            subgraph_slots,
            msg_src: msg_src.into(),
            msg_dst: msg_dst.into(),
            msg_slot: msg_slot.into(),
            num_parent_rows: parent_row_offset,
            num_parent_edges: parent_edge_offset,
            parent_row_inv_bag,
            parent_edge_inv_bag,
            parent_msg_src: parent_msg_src.into(),
            parent_msg_dst: parent_msg_dst.into(),
            parent_msg_edge: parent_msg_edge.into(),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.num_graphs
    }

    pub fn num_subgraphs(&self) -> usize {
        self.subgraph_graph.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_subgraph.len()
    }

    /// Total retained edges over all subgraphs; the length of a mask vector.
    pub fn num_slots(&self) -> usize {
        self.slot_src_row.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Slot range of subgraph `s` (global subgraph index).
    pub fn subgraph_slots(&self, s: usize) -> std::ops::Range<usize> {
        self.subgraph_slots[s].clone()
    }

    /// Flattens per-subgraph weight vectors (in bag order) into slot order.
    pub fn flatten_masks(&self, masks: &[Vec<f64>]) -> Result<Vec<f64>> {
        if masks.len() != self.num_subgraphs() {
            return Err(Error::arg(format!(
                "{} masks for {} subgraphs",
                masks.len(),
                self.num_subgraphs()
            )));
        }
        let mut out = Vec::with_capacity(self.num_slots());
        for (s, m) in masks.iter().enumerate() {
            if m.len() != self.subgraph_slots[s].len() {
                return Err(Error::arg(format!(
                    "mask {s} has {} weights for {} retained edges",
                    m.len(),
                    self.subgraph_slots[s].len()
                )));
            }
            out.extend_from_slice(m);
        }
        Ok(out)
    }

    /// Splits a slot-ordered vector back into per-subgraph vectors.
    pub fn split_slots(&self, values: &[f64]) -> Vec<Vec<f64>> {
        self.subgraph_slots
            .iter()
            .map(|r| values[r.clone()].to_vec())
            .collect()
    }
}

//! Benchmark datasets: the synthetic house/cycle generator, the TU text
//! format, stratified splits and run manifests.

mod ba2motifs;
mod split;
mod tu;

use std::fs;
use std::path::{Path, PathBuf};

pub use ba2motifs::{barabasi_albert_tree, generate_ba2motifs, generate_ba2motifs_n, motif_graph, Motif};
pub use split::{split, validate_fractions, Split};
pub use tu::{
    load_tu_dataset, load_tu_dataset_with, nh2_no2_edges, validate_tu_directory, write_tu_dataset,
    ChemLabels, GroundTruthSource, TuOptions,
};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetName {
    Ba2Motifs,
    TuDirectory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub seed: u64,
    pub split_fractions: [f64; 3],
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        validate_fractions(self.split_fractions)
    }

    pub fn load(&self) -> Result<Vec<Graph>> {
        self.validate()?;
        match &self.name {
            DatasetName::Ba2Motifs => generate_ba2motifs(self.seed),
            DatasetName::TuDirectory(p) => load_tu_dataset(p),
        }
    }
}

/// `key=value` lines, in order.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let body: String = entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Format {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: format!("expected key=value, got '{l}'"),
                })
        })
        .collect()
}

/// Class counts indexed by label.
pub fn class_counts(graphs: &[Graph]) -> Vec<usize> {
    let k = graphs.iter().map(|g| g.label() + 1).max().unwrap_or(0);
    let mut counts = vec![0; k];
    for g in graphs {
        counts[g.label()] += 1;
    }
    counts
}

//! Reader and writer for the TU graph-classification text format.
//!
//! A dataset `DS` lives in one directory:
//!
//! | file                     | content                                   |
//! |--------------------------|-------------------------------------------|
//! | `DS_A.txt`               | `a, b` per line, 1-based global node ids  |
//! | `DS_graph_indicator.txt` | graph id (1-based) of node `i` on line `i`|
//! | `DS_graph_labels.txt`    | class of graph `g` on line `g`            |
//! | `DS_node_labels.txt`     | integer label of node `i`                 |
//! | `DS_node_attributes.txt` | optional, comma-separated reals per node  |
//! | `DS_edge_labels.txt`     | optional, explanation flag per `A` line   |
//!
//! Node features are the attributes when present, otherwise the node labels
//! one-hot encoded in ascending label order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

/// Node-label ids of the atoms used by the amine / nitro rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChemLabels {
    pub nitrogen: i64,
    pub oxygen: i64,
    pub hydrogen: i64,
}

impl Default for ChemLabels {
    /// Label ids of the Mutagenicity distribution (C=0, O=1, Cl=2, H=3, N=4, ...).
    fn default() -> Self {
        Self {
            nitrogen: 4,
            oxygen: 1,
            hydrogen: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroundTruthSource {
    /// Edge labels when the file exists, otherwise the NH2/NO2 rule with
    /// default label ids.
    #[default]
    Auto,
    EdgeLabels,
    Nh2No2(ChemLabels),
    None,
}

#[derive(Debug, Clone, Default)]
pub struct TuOptions {
    pub ground_truth: GroundTruthSource,
}

struct TuFiles {
    dir: PathBuf,
    prefix: String,
}

impl TuFiles {
    fn discover(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut prefixes = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(p) = name.strip_suffix("_A.txt") {
                prefixes.push(p.to_string());
            }
        }
        match prefixes.len() {
            1 => Ok(Self {
                dir: dir.to_path_buf(),
                prefix: prefixes.remove(0),
            }),
            0 => Err(Error::io(
                dir.join("DS_A.txt"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no '*_A.txt' edge file"),
            )),
            _ => Err(Error::arg(format!(
                "{} holds several TU datasets: {prefixes:?}",
                dir.display()
            ))),
        }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}.txt", self.prefix))
    }

    fn file_name(&self, suffix: &str) -> String {
        format!("{}_{suffix}.txt", self.prefix)
    }

    fn read(&self, suffix: &str) -> Result<Vec<(usize, String)>> {
        let p = self.path(suffix);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect())
    }

    fn read_optional(&self, suffix: &str) -> Result<Option<Vec<(usize, String)>>> {
        if self.path(suffix).exists() {
            self.read(suffix).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn parse<T: std::str::FromStr>(file: &str, line: usize, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format {
        file: file.to_string(),
        line,
        message: format!("cannot parse '{s}'"),
    })
}

pub fn load_tu_dataset(dir: &Path) -> Result<Vec<Graph>> {
    load_tu_dataset_with(dir, &TuOptions::default())
}

pub fn load_tu_dataset_with(dir: &Path, opts: &TuOptions) -> Result<Vec<Graph>> {
    let files = TuFiles::discover(dir)?;
    let indicator_name = files.file_name("graph_indicator");
    let a_name = files.file_name("A");

    let indicator: Vec<usize> = files
        .read("graph_indicator")?
        .into_iter()
        .map(|(no, l)| parse(&indicator_name, no, &l))
        .collect::<Result<_>>()?;
    let graph_label_lines = files.read("graph_labels")?;
    let node_label_lines = files.read("node_labels")?;
    let a_lines = files.read("A")?;
    let attr_lines = files.read_optional("node_attributes")?;
    let edge_label_lines = match opts.ground_truth {
        GroundTruthSource::Auto | GroundTruthSource::EdgeLabels => files.read_optional("edge_labels")?,
        _ => None,
    };
    if opts.ground_truth == GroundTruthSource::EdgeLabels && edge_label_lines.is_none() {
        let p = files.path("edge_labels");
        return Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "edge labels requested"),
        ));
    }

    let num_nodes = indicator.len();
    let num_graphs = graph_label_lines.len();
    let graph_labels_name = files.file_name("graph_labels");
    let raw_graph_labels: Vec<i64> = graph_label_lines
        .iter()
        .map(|(no, l)| parse(&graph_labels_name, *no, l))
        .collect::<Result<_>>()?;
    for (i, &g) in indicator.iter().enumerate() {
        if g == 0 || g > num_graphs {
            return Err(Error::Format {
                file: indicator_name.clone(),
                line: i + 1,
                message: format!("graph id {g} outside 1..={num_graphs}"),
            });
        }
    }

    let node_labels_name = files.file_name("node_labels");
    if node_label_lines.len() != num_nodes {
        return Err(Error::Format {
            file: node_labels_name,
            line: node_label_lines.len() + 1,
            message: format!("{} labels for {num_nodes} nodes", node_label_lines.len()),
        });
    }
    let node_labels: Vec<i64> = node_label_lines
        .iter()
        .map(|(no, l)| parse(&node_labels_name, *no, l.split(',').next().unwrap_or("")))
        .collect::<Result<_>>()?;

    // node -> (graph, local index)
    let mut local = vec![0usize; num_nodes];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (v, &g) in indicator.iter().enumerate() {
        local[v] = members[g - 1].len();
        members[g - 1].push(v);
    }

    let features = match &attr_lines {
        Some(lines) => {
            let name = files.file_name("node_attributes");
            if lines.len() != num_nodes {
                return Err(Error::Format {
                    file: name,
                    line: lines.len() + 1,
                    message: format!("{} attribute rows for {num_nodes} nodes", lines.len()),
                });
            }
            let rows = lines
                .iter()
                .map(|(no, l)| l.split(',').map(|s| parse::<f64>(&name, *no, s)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Matrix::from_rows(&rows)?
        }
        None => {
            let values: Vec<i64> = node_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let mut m = Matrix::zeros(num_nodes, values.len());
            for (v, l) in node_labels.iter().enumerate() {
                let col = values.binary_search(l).expect("label collected");
                m.set(v, col, 1.0);
            }
            m
        }
    };

    if let Some(el) = &edge_label_lines {
        if el.len() != a_lines.len() {
            return Err(Error::Format {
                file: files.file_name("edge_labels"),
                line: el.len() + 1,
                message: format!("{} edge labels for {} edges", el.len(), a_lines.len()),
            });
        }
    }

    // per graph: ordered unique pairs (local ids) and ground-truth flags
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let mut truth: Vec<Vec<bool>> = vec![Vec::new(); num_graphs];
    let mut seen: Vec<HashMap<(usize, usize), usize>> = vec![HashMap::new(); num_graphs];
    for (k, (no, line)) in a_lines.iter().enumerate() {
        let (a, b) = line.split_once(',').ok_or_else(|| Error::Format {
            file: a_name.clone(),
            line: *no,
            message: format!("expected 'a, b', got '{line}'"),
        })?;
        let a: usize = parse(&a_name, *no, a)?;
        let b: usize = parse(&a_name, *no, b)?;
        if a == 0 || b == 0 || a > num_nodes || b > num_nodes {
            return Err(Error::Format {
                file: a_name.clone(),
                line: *no,
                message: format!("node id outside 1..={num_nodes}"),
            });
        }
        let (a, b) = (a - 1, b - 1);
        let g = indicator[a];
        if indicator[b] != g {
            return Err(Error::Format {
                file: a_name.clone(),
                line: *no,
                message: format!(
                    "edge ({}, {}) joins graph {g} and graph {}",
                    a + 1,
                    b + 1,
                    indicator[b]
                ),
            });
        }
        if a == b {
            continue;
        }
        let (la, lb) = (local[a], local[b]);
        let key = (la.min(lb), la.max(lb));
        let flag = match &edge_label_lines {
            Some(el) => parse::<f64>(&files.file_name("edge_labels"), el[k].0, &el[k].1)? != 0.0,
            None => false,
        };
        let gi = g - 1;
        match seen[gi].get(&key) {
            Some(&idx) => truth[gi][idx] |= flag,
            None => {
                seen[gi].insert(key, edges[gi].len());
                edges[gi].push(key);
                truth[gi].push(flag);
            }
        }
    }

    let labels = normalise_graph_labels(&raw_graph_labels);
    let chem = match opts.ground_truth {
        GroundTruthSource::Auto if edge_label_lines.is_none() => Some(ChemLabels::default()),
        GroundTruthSource::Nh2No2(c) => Some(c),
        _ => None,
    };

    let mut graphs = Vec::with_capacity(num_graphs);
    for gi in 0..num_graphs {
        let nodes = &members[gi];
        let f = features.select_rows(nodes);
        let g = Graph::new(nodes.len(), edges[gi].iter().copied(), f, labels[gi])?;
        let g = match chem {
            Some(c) => {
                let lbl: Vec<i64> = nodes.iter().map(|&v| node_labels[v]).collect();
                let t = nh2_no2_edges(&g, &lbl, c);
                g.with_ground_truth(t)?
            }
            None if edge_label_lines.is_some() => g.with_ground_truth(std::mem::take(&mut truth[gi]))?,
            None => g,
        };
        graphs.push(g);
    }
    Ok(graphs)
}

/// Non-negative integer labels are used as class ids directly; anything else
/// (e.g. `-1/1`) is mapped to ranks in ascending order.
fn normalise_graph_labels(raw: &[i64]) -> Vec<usize> {
    if raw.iter().all(|&l| l >= 0) {
        return raw.iter().map(|&l| l as usize).collect();
    }
    let values: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    raw.iter()
        .map(|l| values.binary_search(l).expect("collected"))
        .collect()
}

/// Marks the N-H bonds of amine groups (N with exactly two H neighbours) and
/// the N-O bonds of nitro groups (N with exactly two O neighbours).
pub fn nh2_no2_edges(g: &Graph, node_labels: &[i64], chem: ChemLabels) -> Vec<bool> {
    let mut truth = vec![false; g.num_edges()];
    for v in 0..g.num_nodes() {
        if node_labels[v] != chem.nitrogen {
            continue;
        }
        for partner in [chem.hydrogen, chem.oxygen] {
            let bonds: Vec<usize> = g
                .neighbors(v)
                .iter()
                .filter(|&&(w, _)| node_labels[w] == partner)
                .map(|&(_, e)| e)
                .collect();
            if bonds.len() == 2 {
                for e in bonds {
                    truth[e] = true;
                }
            }
        }
    }
    truth
}

/// Writes `graphs` as TU dataset `name` in `dir`. Features go to
/// `node_attributes`, the arg-max feature column to `node_labels`, ground
/// truth (if any graph has it) to `edge_labels`. Each undirected edge is
/// written in both directions.
pub fn write_tu_dataset(graphs: &[Graph], dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut ind = String::new();
    let mut gl = String::new();
    let mut nl = String::new();
    let mut attrs = String::new();
    let mut el = String::new();
    let with_truth = graphs.iter().any(|g| g.ground_truth().is_some());
    let mut offset = 0;
    for (gi, g) in graphs.iter().enumerate() {
        gl.push_str(&format!("{}\n", g.label()));
        for v in 0..g.num_nodes() {
            ind.push_str(&format!("{}\n", gi + 1));
            let row = g.features().row(v);
            let label = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &x)| if x > best.1 { (j, x) } else { best })
                .0;
            nl.push_str(&format!("{label}\n"));
            let vals: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            attrs.push_str(&vals.join(", "));
            attrs.push('\n');
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let flag = g.ground_truth().is_some_and(|t| t[e]) as u8;
            for (p, q) in [(i, j), (j, i)] {
                a.push_str(&format!("{}, {}\n", offset + p + 1, offset + q + 1));
                el.push_str(&format!("{flag}\n"));
            }
        }
        offset += g.num_nodes();
    }
    let write = |suffix: &str, body: &str| {
        let p = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("A", &a)?;
    write("graph_indicator", &ind)?;
    write("graph_labels", &gl)?;
    write("node_labels", &nl)?;
    write("node_attributes", &attrs)?;
    if with_truth {
        write("edge_labels", &el)?;
    }
    Ok(())
}

/// Checks that the directory parses and every graph has at least one node.
pub fn validate_tu_directory(dir: &Path) -> Result<usize> {
    let graphs = load_tu_dataset(dir)?;
    let empty: HashSet<usize> = graphs
        .iter()
        .enumerate()
        .filter(|(_, g)| g.num_nodes() == 0)
        .map(|(i, _)| i)
        .collect();
    if !empty.is_empty() {
        return Err(Error::arg(format!("graphs without nodes: {empty:?}")));
    }
    Ok(graphs.len())
}

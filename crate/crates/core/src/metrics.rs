//! Edge AUC, mask size, and aggregation over seeds.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Probability that a random positive edge outscores a random negative one,
/// ties counting one half. Computed from midranks.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::arg(format!("{} scores for {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("NaN score"));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {pos} positive and {neg} negative edges"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives keeps every quantity integral
    let mut rank2_pos = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share the midrank (i + j + 2) / 2
        let mid2 = (i + j + 2) as u64;
        let p = idx[i..=j].iter().filter(|&&k| truth[k]).count() as u64;
        rank2_pos += p * mid2;
        i = j + 1;
    }
    let (p, n) = (pos as u64, neg as u64);
    let u2 = rank2_pos - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// `100 * |{e : score_e > t}| / |E|`; zero for an edgeless graph.
pub fn mask_size_percent(scores: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::arg(format!("threshold {t} outside (0,1)")));
    }
    if scores.is_empty() {
        return Ok(0.0);
    }
    let above = scores.iter().filter(|&&s| s > t).count();
    Ok(100.0 * above as f64 / scores.len() as f64)
}

/// Metrics of one explained graph; `auc` is `None` when undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetrics {
    pub graph: usize,
    pub auc: Option<f64>,
    pub mask_size: f64,
}

pub fn graph_metrics(graph: usize, scores: &[f64], truth: Option<&[bool]>, t: f64) -> Result<GraphMetrics> {
    let auc = match truth {
        Some(tr) => match auc(scores, tr) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(GraphMetrics {
        graph,
        auc,
        mask_size: mask_size_percent(scores, t)?,
    })
}

/// Means over graphs for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dataset: String,
    pub encoder: String,
    pub policy: String,
    pub seed: u64,
    /// Mean over graphs with a defined AUC; `None` if there are none.
    pub auc: Option<f64>,
    pub mask_size: f64,
    pub graphs: usize,
    pub graphs_with_auc: usize,
}

pub fn summarize(dataset: &str, encoder: &str, policy: &str, seed: u64, per_graph: &[GraphMetrics]) -> RunSummary {
    let aucs: Vec<f64> = per_graph.iter().filter_map(|m| m.auc).collect();
    let mask_size = if per_graph.is_empty() {
        0.0
    } else {
        per_graph.iter().map(|m| m.mask_size).sum::<f64>() / per_graph.len() as f64
    };
    RunSummary {
        dataset: dataset.into(),
        encoder: encoder.into(),
        policy: policy.into(),
        seed,
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        mask_size,
        graphs: per_graph.len(),
        graphs_with_auc: aucs.len(),
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: String,
    pub encoder: String,
    pub policy: String,
    pub seeds: usize,
    pub mask_size: MeanStd,
    pub auc: Option<MeanStd>,
}

/// Groups runs by `(dataset, encoder, policy)` and reduces over seeds.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.dataset.clone(), r.encoder.clone(), r.policy.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, encoder, policy), rs)| {
            let sizes: Vec<f64> = rs.iter().map(|r| r.mask_size).collect();
            let aucs: Vec<f64> = rs.iter().filter_map(|r| r.auc).collect();
            AggregateRow {
                dataset,
                encoder,
                policy,
                seeds: rs.len(),
                mask_size: MeanStd::of(&sizes).expect("group is non-empty"),
                auc: MeanStd::of(&aucs),
            }
        })
        .collect()
}

pub fn runs_csv(runs: &[RunSummary]) -> String {
    let mut s = String::from("dataset,encoder,policy,seed,graphs,graphs_with_auc,mask_size,auc\n");
    for r in runs {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.encoder,
            r.policy,
            r.seed,
            r.graphs,
            r.graphs_with_auc,
            r.mask_size,
            r.auc.map(|a| a.to_string()).unwrap_or_default()
        ));
    }
    s
}

/// Text table with one row per dataset / encoder / policy.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let header = ["Dataset", "EFE", "Policy", "Mask size %", "AUC"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.encoder.to_uppercase(),
                r.policy.to_uppercase(),
                format!("{:.0} ± {:.0}", r.mask_size.mean, r.mask_size.std),
                r.auc
                    .map(|a| format!("{:.2} ± {:.2}", a.mean, a.std))
                    .unwrap_or_else(|| "n/a".into()),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

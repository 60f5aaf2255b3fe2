use std::fs;
use std::path::{Path, PathBuf};

use sgnn_explain::datasets::{
    class_counts, generate_ba2motifs_n, load_tu_dataset, read_manifest, split, write_manifest, write_tu_dataset, Split,
};
use sgnn_explain::diffmath::Checkpoint;
use sgnn_explain::esan::{accuracy, train_classifier, EsanModel, IndexedGraph};
use sgnn_explain::explainer::{train_explainer, MASK_CSV_HEADER};
use sgnn_explain::merge::merge_masks;
use sgnn_explain::metrics::{aggregate, format_table, graph_metrics, runs_csv, summarize, GraphMetrics, RunSummary};
use sgnn_explain::Graph;

use crate::config::RunConfig;
use crate::Failure;

const STORE_NAME: &str = "BA2MOTIFS";
const BA2_GRAPHS: usize = 1000;

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn gen_data(dataset: &str, seed: u64, out: &Path, num_graphs: Option<usize>) -> Result<(), Failure> {
    let (graphs, source) = if dataset.eq_ignore_ascii_case("ba2motifs") {
        let n = num_graphs.unwrap_or(BA2_GRAPHS);
        let graphs = generate_ba2motifs_n(n, seed)?;
        create_dir(out)?;
        write_tu_dataset(&graphs, out, STORE_NAME)?;
        (graphs, "generated".to_string())
    } else if Path::new(dataset).is_dir() {
        if num_graphs.is_some() {
            return Err(Failure::usage("--num-graphs only applies to ba2motifs"));
        }
        let graphs = load_tu_dataset(Path::new(dataset))?;
        if let Some(i) = graphs.iter().position(|g| g.num_nodes() == 0) {
            return Err(Failure::usage(format!("graph {i} of {dataset} has no nodes")));
        }
        create_dir(out)?;
        (graphs, dataset.to_string())
    } else {
        return Err(Failure::usage(format!("unknown dataset '{dataset}' (ba2motifs or a TU directory)")));
    };
    let name = if source == "generated" {
        "ba2motifs".to_string()
    } else {
        Path::new(dataset).file_name().map_or("tu".into(), |n| n.to_string_lossy().to_lowercase())
    };
    let nodes: usize = graphs.iter().map(Graph::num_nodes).sum();
    let edges: usize = graphs.iter().map(Graph::num_edges).sum();
    let truth: usize = graphs
        .iter()
        .filter_map(Graph::ground_truth)
        .map(|t| t.iter().filter(|&&b| b).count())
        .sum();
    let manifest = vec![
        kv("dataset", &name),
        kv("source", &source),
        kv("seed", seed),
        kv("graphs", graphs.len()),
        kv("class_counts", join(&class_counts(&graphs))),
        kv("nodes", nodes),
        kv("edges", edges),
        kv("ground_truth_edges", truth),
        kv("feature_dim", graphs.first().map_or(0, Graph::feature_dim)),
    ];
    write_manifest(&out.join("manifest.txt"), &manifest)?;
    println!("{name}: {} graphs, {nodes} nodes, {edges} edges -> {}", graphs.len(), out.display());
    Ok(())
}

struct Data {
    name: String,
    graphs: Vec<IndexedGraph>,
    split: Split,
}

impl Data {
    fn pick(&self, ix: &[usize]) -> Vec<IndexedGraph> {
        ix.iter().map(|&i| self.graphs[i].clone()).collect()
    }

    fn input_dim(&self) -> usize {
        self.graphs[0].graph.feature_dim()
    }

    fn num_classes(&self) -> usize {
        self.graphs.iter().map(|g| g.graph.label() + 1).max().unwrap_or(0).max(2)
    }
}

/// Loads the configured dataset and its seeded split. When the directory has a
/// manifest, its dataset name labels the run.
fn load_data(cfg: &RunConfig) -> Result<Data, Failure> {
    let dir = cfg.dataset()?;
    if !dir.is_dir() {
        return Err(Failure::usage(format!("dataset directory {} not found", dir.display())));
    }
    let manifest = dir.join("manifest.txt");
    let name = if manifest.exists() {
        read_manifest(&manifest)?.into_iter().find(|(k, _)| k == "dataset").map(|(_, v)| v)
    } else {
        None
    };
    let name = name.unwrap_or_else(|| dir.file_name().map_or("tu".into(), |n| n.to_string_lossy().into_owned()));
    let graphs = sgnn_explain::esan::index_graphs(load_tu_dataset(dir)?);
    if graphs.is_empty() {
        return Err(Failure::usage(format!("dataset {} holds no graphs", dir.display())));
    }
    let labels: Vec<usize> = graphs.iter().map(|g| g.graph.label()).collect();
    let split = split(&labels, cfg.split, cfg.seed)?;
    Ok(Data { name, graphs, split })
}

fn policy_meta(cfg: &RunConfig) -> Result<Vec<(String, String)>, Failure> {
    let opt = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
    Ok(vec![
        kv("policy", cfg.policy_tag()?),
        kv("ego_depth", opt(cfg.ego_depth)),
        kv("max_bag_size", opt(cfg.max_bag_size)),
        kv("policy_seed", cfg.policy_seed),
    ])
}

pub fn train(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let data = load_data(&cfg)?;
    let policy = cfg.policy_config()?;
    let model_cfg = cfg.model_config(policy.output_feature_dim(data.input_dim()), data.num_classes())?;
    let (train, val, test) = (data.pick(&data.split.train), data.pick(&data.split.val), data.pick(&data.split.test));
    let outcome = train_classifier(&train, &val, &model_cfg, &policy, &cfg.train_config())?;
    let model = &outcome.model;
    let acc = |items: &[IndexedGraph]| -> Result<Option<f64>, Failure> {
        if items.is_empty() {
            return Ok(None);
        }
        Ok(Some(accuracy(model, items, &policy, 64)?))
    };
    let (train_acc, val_acc, test_acc) = (acc(&train)?, acc(&val)?, acc(&test)?);

    create_dir(out)?;
    let mut ck = model.to_checkpoint();
    for (k, v) in policy_meta(&cfg)? {
        ck = ck.with_meta(k, v);
    }
    ck.with_meta("dataset", &data.name).save(&out.join("model.ckpt"))?;
    write(&out.join("history.csv"), &outcome.history_csv())?;

    let fmt = |a: Option<f64>| a.map_or("none".to_string(), |v| format!("{v:.4}"));
    let mut meta = vec![kv("command", "train"), kv("dataset_name", &data.name)];
    meta.extend(cfg.entries());
    meta.extend([
        kv("input_dim", model_cfg.input_dim),
        kv("num_classes", model_cfg.num_classes),
        kv("split_sizes", join(&[train.len(), val.len(), test.len()])),
        kv("best_epoch", outcome.best_epoch),
        kv("train_acc", fmt(train_acc)),
        kv("val_acc", fmt(val_acc)),
        kv("test_acc", fmt(test_acc)),
    ]);
    write_manifest(&out.join("metadata.txt"), &meta)?;
    println!(
        "{} {} on {}: train {} val {} test {} (best epoch {})",
        cfg.encoder,
        cfg.policy,
        data.name,
        fmt(train_acc),
        fmt(val_acc),
        fmt(test_acc),
        outcome.best_epoch
    );
    Ok(())
}

/// The checkpoint must have been trained with the configured encoder and
/// policy.
fn check_model(cfg: &RunConfig, ck: &Checkpoint, model: &EsanModel, input_dim: usize) -> Result<(), Failure> {
    if model.config().encoder != cfg.encoder()? {
        return Err(Failure::usage(format!(
            "model/policy mismatch: checkpoint encoder is {}, config says {}",
            model.config().encoder,
            cfg.encoder
        )));
    }
    for (k, v) in policy_meta(cfg)? {
        match ck.meta(&k) {
            Some(have) if have == v => {}
            have => {
                return Err(Failure::usage(format!(
                    "model/policy mismatch: checkpoint {k} is {}, config says {v}",
                    have.unwrap_or("missing")
                )))
            }
        }
    }
    if model.config().input_dim != input_dim {
        return Err(Failure::usage(format!(
            "checkpoint expects {} input features, dataset gives {input_dim}",
            model.config().input_dim
        )));
    }
    Ok(())
}

pub fn explain(config: &Path, model_path: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let data = load_data(&cfg)?;
    let policy = cfg.policy_config()?;
    let ck = Checkpoint::load(model_path)?;
    let model = EsanModel::from_checkpoint(&ck)?;
    check_model(&cfg, &ck, &model, policy.output_feature_dim(data.input_dim()))?;
    let ecfg = cfg.explainer_config()?;
    let mode = cfg.merge_mode()?;

    let train = data.pick(&data.split.train);
    let targets = match cfg.explain_split.as_str() {
        "train" => train.clone(),
        "val" => data.pick(&data.split.val),
        "test" => data.pick(&data.split.test),
        _ => data.graphs.clone(),
    };
    if targets.is_empty() {
        return Err(Failure::usage(format!("split '{}' is empty", cfg.explain_split)));
    }
    let outcome = train_explainer(&model, &train, &policy, &ecfg)?;
    let masks = outcome.explainer.explain(&model, &targets, &policy)?;

    let dir = out.join("explanations");
    create_dir(&dir)?;
    outcome.explainer.to_checkpoint().save(&out.join("explainer.ckpt"))?;
    write(&out.join("explainer_history.csv"), &outcome.history_csv())?;
    let mut mask_csv = String::from(MASK_CSV_HEADER);
    let mut per_graph = Vec::with_capacity(masks.len());
    for gm in &masks {
        mask_csv.push_str(&gm.csv_rows());
        let ex = merge_masks(&gm.bag, &gm.soft(), mode)?;
        let name = format!("graph_{}", gm.id);
        write(&dir.join(format!("{name}.csv")), &ex.to_csv())?;
        write(&dir.join(format!("{name}.dot")), &ex.to_dot(&name))?;
        per_graph.push(graph_metrics(gm.id, &ex.scores, ex.graph.ground_truth(), ecfg.threshold)?);
    }
    write(&out.join("masks.csv"), &mask_csv)?;

    let s = summarize(&data.name, &cfg.encoder, &cfg.policy, cfg.seed, &per_graph);
    let mut meta = vec![
        kv("command", "explain"),
        kv("dataset_name", &data.name),
        kv("model", model_path.display()),
        kv("graphs_explained", masks.len()),
    ];
    meta.extend(cfg.entries());
    write_manifest(&out.join("metadata.txt"), &meta)?;
    println!(
        "explained {} graphs: auc {} mask size {:.1}%",
        masks.len(),
        s.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
        s.mask_size
    );
    Ok(())
}

fn parse_csv_scores(path: &Path) -> Result<(Vec<f64>, Option<Vec<bool>>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| Failure::usage(format!("{} line {line}: {what}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "edge,source,target,score,ground_truth" => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    let mut has_truth = true;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(i + 1, "expected 5 columns"));
        }
        scores.push(cols[3].trim().parse::<f64>().map_err(|_| bad(i + 1, "bad score"))?);
        match cols[4].trim() {
            "1" => truth.push(true),
            "0" => truth.push(false),
            "" => has_truth = false,
            _ => return Err(bad(i + 1, "bad ground-truth flag")),
        }
    }
    Ok((scores, has_truth.then_some(truth)))
}

/// Per-graph metrics for one `explain` output directory.
fn evaluate_run(run: &Path) -> Result<(RunSummary, Vec<GraphMetrics>), Failure> {
    let meta_path = run.join("metadata.txt");
    if !meta_path.exists() {
        return Err(Failure::usage(format!("{} has no metadata.txt", run.display())));
    }
    let meta = read_manifest(&meta_path)?;
    let get = |k: &str| -> Result<String, Failure> {
        meta.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Failure::usage(format!("{} lacks '{k}'", meta_path.display())))
    };
    let threshold: f64 = get("threshold")?.parse().map_err(|_| Failure::usage("bad threshold in metadata"))?;
    let seed: u64 = get("seed")?.parse().map_err(|_| Failure::usage("bad seed in metadata"))?;

    let dir = run.join("explanations");
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(&dir)
        .map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let stem = p.file_name()?.to_str()?.strip_prefix("graph_")?.strip_suffix(".csv")?.parse().ok()?;
            Some((stem, p))
        })
        .collect();
    if files.is_empty() {
        return Err(Failure::usage(format!("no explanations in {}", dir.display())));
    }
    files.sort();
    let per_graph = files
        .iter()
        .map(|(id, p)| {
            let (scores, truth) = parse_csv_scores(p)?;
            Ok(graph_metrics(*id, &scores, truth.as_deref(), threshold)?)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let s = summarize(&get("dataset_name")?, &get("encoder")?, &get("policy")?, seed, &per_graph);
    Ok((s, per_graph))
}

pub fn evaluate(runs: &[PathBuf], out: &Path) -> Result<(), Failure> {
    if runs.is_empty() {
        return Err(Failure::usage("no --explanations given"));
    }
    let mut summaries = Vec::new();
    let mut rows = String::from("run,graph,auc,mask_size\n");
    for run in runs {
        let (s, per_graph) = evaluate_run(run)?;
        for m in &per_graph {
            let a = m.auc.map_or(String::new(), |a| a.to_string());
            rows.push_str(&format!("{},{},{a},{}\n", run.display(), m.graph, m.mask_size));
        }
        summaries.push(s);
    }
    let table = format_table(&aggregate(&summaries));
    create_dir(out)?;
    write(&out.join("per_graph.csv"), &rows)?;
    write(&out.join("runs.csv"), &runs_csv(&summaries))?;
    write(&out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

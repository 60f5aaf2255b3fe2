//! Run configuration: one flat TOML file shared by `train` and `explain`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sgnn_explain::esan::{EncoderKind, EsanConfig, Readout, TrainConfig};
use sgnn_explain::explainer::{ExplainerConfig, NoiseKind};
use sgnn_explain::merge::MergeMode;
use sgnn_explain::policies::{PolicyConfig, DEFAULT_EGO_DEPTH};
use sgnn_explain::PolicyTag;

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory holding a TU-format store (as written by `gen-data`).
    pub dataset: Option<PathBuf>,
    pub split: [f64; 3],

    pub encoder: String,
    pub policy: String,
    pub ego_depth: Option<usize>,
    pub max_bag_size: Option<usize>,
    pub policy_seed: u64,

    pub num_layers: usize,
    pub hidden: usize,
    pub set_hidden: usize,
    /// `sum` or `mean`; empty picks sum for subgraph encoders, mean for the
    /// baseline.
    pub readout: String,
    pub epsilon_learnable: bool,

    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub target_train_acc: Option<f64>,

    pub explainer_epochs: usize,
    pub explainer_lr: f64,
    pub explainer_batch_size: usize,
    pub explainer_seed: u64,
    pub mlp_hidden: usize,
    pub tau_init: f64,
    pub tau_final: f64,
    pub threshold: f64,
    pub l1_coeff: f64,
    pub noise: String,
    pub merge: String,
    /// Which split the explanations are produced for: all, train, val, test.
    pub explain_split: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = ExplainerConfig::default();
        Self {
            dataset: None,
            split: [0.8, 0.1, 0.1],
            encoder: "dss".into(),
            policy: "ed".into(),
            ego_depth: None,
            max_bag_size: None,
            policy_seed: 0,
            num_layers: 3,
            hidden: 32,
            set_hidden: 32,
            readout: String::new(),
            epsilon_learnable: true,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            seed: t.seed,
            target_train_acc: t.target_train_acc,
            explainer_epochs: e.epochs,
            explainer_lr: e.lr,
            explainer_batch_size: e.batch_size,
            explainer_seed: e.seed,
            mlp_hidden: e.mlp_hidden,
            tau_init: e.tau_init,
            tau_final: e.tau_final,
            threshold: e.threshold,
            l1_coeff: e.l1_coeff,
            noise: e.noise.to_string(),
            merge: MergeMode::default().as_str().into(),
            explain_split: "all".into(),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::usage(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Fills encoder- and policy-dependent defaults and checks every field.
    fn resolve(&mut self) -> Result<(), Failure> {
        let encoder = self.encoder()?;
        let kind = self.policy_tag()?;
        if self.readout.is_empty() {
            self.readout = if encoder == EncoderKind::GinBaseline { "mean" } else { "sum" }.into();
        }
        if matches!(kind, PolicyTag::EgoNetwork | PolicyTag::EgoNetworkPlus) && self.ego_depth.is_none() {
            self.ego_depth = Some(DEFAULT_EGO_DEPTH);
        }
        sgnn_explain::datasets::validate_fractions(self.split).map_err(usage)?;
        if !["all", "train", "val", "test"].contains(&self.explain_split.as_str()) {
            return Err(Failure::usage(format!("explain_split '{}' is not one of all, train, val, test", self.explain_split)));
        }
        self.policy_config()?;
        self.model_config(1, 2)?.validate().map_err(usage)?;
        self.explainer_config()?.validate().map_err(usage)?;
        self.merge_mode()?;
        if self.batch_size == 0 || self.epochs == 0 || !(self.lr > 0.0) {
            return Err(Failure::usage("epochs, batch_size and lr must be positive"));
        }
        sgnn_explain::esan::check_policy(encoder, &self.policy_config()?).map_err(usage)
    }

    pub fn dataset(&self) -> Result<&Path, Failure> {
        self.dataset.as_deref().ok_or_else(|| Failure::usage("config lacks 'dataset'"))
    }

    pub fn encoder(&self) -> Result<EncoderKind, Failure> {
        self.encoder.parse().map_err(usage)
    }

    pub fn policy_tag(&self) -> Result<PolicyTag, Failure> {
        self.policy.parse().map_err(usage)
    }

    pub fn policy_config(&self) -> Result<PolicyConfig, Failure> {
        let mut p = PolicyConfig::new(self.policy_tag()?);
        p.ego_depth = self.ego_depth;
        p.max_bag_size = self.max_bag_size;
        p.seed = self.policy_seed;
        p.validate().map_err(usage)?;
        Ok(p)
    }

    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> Result<EsanConfig, Failure> {
        let mut c = EsanConfig::new(self.encoder()?, input_dim, num_classes);
        c.num_layers = self.num_layers;
        c.hidden = self.hidden;
        c.set_hidden = self.set_hidden;
        c.readout = self.readout.parse::<Readout>().map_err(usage)?;
        c.epsilon_learnable = self.epsilon_learnable;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            target_train_acc: self.target_train_acc,
        }
    }

    pub fn explainer_config(&self) -> Result<ExplainerConfig, Failure> {
        Ok(ExplainerConfig {
            mlp_hidden: self.mlp_hidden,
            tau_init: self.tau_init,
            tau_final: self.tau_final,
            threshold: self.threshold,
            l1_coeff: self.l1_coeff,
            epochs: self.explainer_epochs,
            lr: self.explainer_lr,
            batch_size: self.explainer_batch_size,
            seed: self.explainer_seed,
            noise: self.noise.parse::<NoiseKind>().map_err(usage)?,
        })
    }

    pub fn merge_mode(&self) -> Result<MergeMode, Failure> {
        self.merge.parse().map_err(usage)
    }

    /// Effective settings as `key=value` pairs, defaults included.
    pub fn entries(&self) -> Vec<(String, String)> {
        let table = toml::Table::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        for (k, v) in table {
            let v = match v {
                toml::Value::String(s) => s,
                other => other.to_string(),
            };
            out.push((k, v));
        }
        // optional fields left unset do not serialize
        for (k, present) in [
            ("dataset", self.dataset.is_some()),
            ("ego_depth", self.ego_depth.is_some()),
            ("max_bag_size", self.max_bag_size.is_some()),
            ("target_train_acc", self.target_train_acc.is_some()),
        ] {
            if !present {
                out.push((k.to_string(), "none".to_string()));
            }
        }
        out.sort();
        out
    }
}

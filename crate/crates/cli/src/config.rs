//! Flat run configuration: defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use layoutie::evalkit::Switch;
use layoutie::extractor::{ModelConfig, TrainConfig};
use layoutie::pretrain::{PretrainConfig, Stage};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Invoices,
    Resumes,
}

impl CorpusKind {
    pub fn entities(self) -> &'static [&'static str] {
        match self {
            CorpusKind::Invoices => &layoutie::synthcorpus::INVOICE_ENTITIES,
            CorpusKind::Resumes => &layoutie::synthcorpus::RESUME_ENTITIES,
        }
    }

    pub fn default_docs(self) -> usize {
        match self {
            CorpusKind::Invoices => 1200,
            CorpusKind::Resumes => 400,
        }
    }
}

/// Every tunable of every command. Optional fields take preset-dependent
/// defaults and are filled in by [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub preset: Preset,
    pub seed: u64,
    /// 0 uses every core.
    pub workers: usize,

    // inputs; unset means the default file inside the output directory
    pub corpus: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub model: Option<PathBuf>,

    // corpus
    pub kind: CorpusKind,
    pub num_docs: Option<usize>,
    pub identical_candidates: usize,
    pub vocab_min_freq: usize,

    // graph and model
    pub graph: bool,
    pub eps_align: f64,
    pub merge_eps: f64,
    pub max_nodes: Option<usize>,

    // supervised training
    pub lr_encoder: Option<f64>,
    pub lr_other: Option<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_grad_norm: Option<f64>,

    // pretraining
    pub stages: Vec<String>,
    pub pretrain_lr: f64,
    pub mask_ratio: f64,
    pub mlm_epochs: usize,
    pub sprc_epochs: usize,
    pub sprc_epochs_after_mlm: usize,
    pub batch_size: usize,
    pub balance_ratio: Option<f64>,
    pub max_sprc_per_epoch: Option<usize>,

    // evaluation, few-shot and ablation
    pub split: String,
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    pub fewshot_epochs: usize,
    pub switches: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pre = PretrainConfig::default();
        RunConfig {
            schema_version: SCHEMA_VERSION,
            preset: Preset::Desk,
            seed: 0,
            workers: 0,
            corpus: None,
            splits: None,
            init: None,
            model: None,
            kind: CorpusKind::Invoices,
            num_docs: None,
            identical_candidates: 3,
            vocab_min_freq: 2,
            graph: true,
            eps_align: 1.0,
            merge_eps: 1.0,
            max_nodes: None,
            lr_encoder: None,
            lr_other: None,
            max_epochs: 30,
            patience: 5,
            max_grad_norm: Some(5.0),
            stages: vec!["mlm".into(), "sprc".into()],
            pretrain_lr: pre.lr,
            mask_ratio: pre.mask_ratio,
            mlm_epochs: pre.mlm_epochs,
            sprc_epochs: pre.sprc_epochs,
            sprc_epochs_after_mlm: pre.sprc_epochs_after_mlm,
            batch_size: pre.batch_size,
            balance_ratio: None,
            max_sprc_per_epoch: Some(8000),
            split: "test".into(),
            seeds: vec![0],
            sizes: vec![0, 1, 10, 50],
            fewshot_epochs: 5,
            switches: vec![
                "section_title_edges".into(),
                "font_feats".into(),
                "skip_connections".into(),
            ],
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.message().to_string();
            // toml reports unknown keys as "unknown field `name`, expected ..."
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .map(str::to_string)
                .unwrap_or_else(|| path.display().to_string());
            CliError::Config { key, msg }
        })
    }

    /// Fills preset-dependent defaults and validates every key.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        let train = match self.preset {
            Preset::Desk => TrainConfig::default(),
            Preset::Paper => TrainConfig::paper(),
        };
        self.lr_encoder.get_or_insert(train.lr_encoder);
        self.lr_other.get_or_insert(train.lr_other);
        self.num_docs.get_or_insert(self.kind.default_docs());
        let nodes = self.model_config(1).max_nodes;
        self.max_nodes.get_or_insert(nodes);

        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(key, format!("must be positive, found {v}")))
            }
        };
        positive("lr_encoder", self.lr_encoder.unwrap_or_default())?;
        positive("lr_other", self.lr_other.unwrap_or_default())?;
        positive("pretrain_lr", self.pretrain_lr)?;
        if !(self.eps_align.is_finite() && self.eps_align >= 0.0) {
            return Err(bad("eps_align", "must be a non-negative number"));
        }
        if !(self.merge_eps.is_finite() && self.merge_eps >= 0.0) {
            return Err(bad("merge_eps", "must be a non-negative number"));
        }
        if !(0.0 < self.mask_ratio && self.mask_ratio < 1.0) {
            return Err(bad("mask_ratio", "must lie in (0, 1)"));
        }
        if let Some(r) = self.balance_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(bad("balance_ratio", "must lie in [0, 1]"));
            }
        }
        if !(2..=3).contains(&self.identical_candidates) {
            return Err(bad("identical_candidates", "must be 2 or 3"));
        }
        if self.num_docs == Some(0) {
            return Err(bad("num_docs", "must be positive"));
        }
        if self.max_nodes == Some(0) {
            return Err(bad("max_nodes", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(bad("max_epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "needs at least one seed"));
        }
        self.stage_list()?;
        self.switch_list()?;
        Ok(self)
    }

    pub fn stage_list(&self) -> Result<Vec<Stage>, CliError> {
        let stages = self
            .stages
            .iter()
            .map(|s| s.parse::<Stage>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad("stages", e.to_string()))?;
        layoutie::pretrain::validate_stages(&stages).map_err(|e| bad("stages", e.to_string()))?;
        Ok(stages)
    }

    pub fn switch_list(&self) -> Result<Vec<Switch>, CliError> {
        self.switches
            .iter()
            .map(|s| s.parse::<Switch>().map_err(|e| bad("switches", e.to_string())))
            .collect()
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let entities = self.kind.entities();
        let mut cfg = match self.preset {
            Preset::Desk => ModelConfig::desk(vocab_size, entities, self.graph),
            Preset::Paper => ModelConfig::paper(vocab_size, entities, self.graph),
        };
        if self.preset == Preset::Paper && self.kind == CorpusKind::Invoices {
            cfg.max_nodes = 100;
            if let Some(g) = cfg.gcn.as_mut() {
                g.hidden_dim = 256;
            }
        }
        cfg.eps_align = self.eps_align;
        cfg.merge_eps = self.merge_eps;
        if let Some(n) = self.max_nodes {
            cfg.max_nodes = n;
        }
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            lr_encoder: self.lr_encoder.unwrap_or(d.lr_encoder),
            lr_other: self.lr_other.unwrap_or(d.lr_other),
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            lr: self.pretrain_lr,
            mask_ratio: self.mask_ratio,
            mlm_epochs: self.mlm_epochs,
            sprc_epochs: self.sprc_epochs,
            sprc_epochs_after_mlm: self.sprc_epochs_after_mlm,
            batch_size: self.batch_size,
            eps_align: self.eps_align,
            balance_ratio: self.balance_ratio,
            max_mlm_windows_per_epoch: None,
            max_sprc_per_epoch: self.max_sprc_per_epoch,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

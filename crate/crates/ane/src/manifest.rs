//! JSON run manifests. A manifest holds every resolved setting of a run, so
//! `ane embed --manifest` can repeat it exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ane_core::embed::{ModelKind, Prior, TrainConfig};
use ane_core::nn::NormOrder;
use ane_core::walker::WalkConfig;
use ane_core::PpmiConfig;

use crate::error::{Error, Result};
use crate::formats::{read_text, write_atomic};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorRecord {
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std: f64 },
}

/// Serializable mirror of [`TrainConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: String,
    pub dim: usize,
    pub negatives: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub context_size: usize,
    pub ppmi_steps: usize,
    pub ppmi_beta: Option<f64>,
    pub max_nodes: usize,
    pub epochs: usize,
    pub max_cycles: Option<usize>,
    pub batch_size: usize,
    pub adversarial_batch: usize,
    pub structure_steps: usize,
    pub disc_steps: usize,
    pub gen_steps: usize,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub gen_learning_rate: f64,
    pub prior: PriorRecord,
    pub corruption: f64,
    pub norm_order: String,
    pub disc_hidden: Vec<usize>,
    pub clip_norm: f64,
    pub probe_size: usize,
    pub seed: u64,
}

impl From<&TrainConfig> for RunConfig {
    fn from(c: &TrainConfig) -> Self {
        RunConfig {
            model: c.model.to_string(),
            dim: c.dim,
            negatives: c.negatives,
            walks_per_node: c.walk.walks_per_node,
            walk_length: c.walk.walk_length,
            context_size: c.walk.context_size,
            ppmi_steps: c.ppmi.steps,
            ppmi_beta: c.ppmi.beta,
            max_nodes: c.ppmi.max_nodes,
            epochs: c.epochs,
            max_cycles: c.max_cycles,
            batch_size: c.batch_size,
            adversarial_batch: c.adversarial_batch,
            structure_steps: c.structure_steps,
            disc_steps: c.disc_steps,
            gen_steps: c.gen_steps,
            learning_rate: c.learning_rate,
            disc_learning_rate: c.disc_learning_rate,
            gen_learning_rate: c.gen_learning_rate,
            prior: match c.prior {
                Prior::Uniform { low, high } => PriorRecord::Uniform { low, high },
                Prior::Gaussian { mean, std } => PriorRecord::Gaussian { mean, std },
            },
            corruption: c.corruption,
            norm_order: match c.norm_order {
                NormOrder::AfterActivation => "after_activation".into(),
                NormOrder::BeforeActivation => "before_activation".into(),
            },
            disc_hidden: c.disc_hidden.clone(),
            clip_norm: c.clip_norm,
            probe_size: c.probe_size,
            seed: c.seed,
        }
    }
}

impl TryFrom<&RunConfig> for TrainConfig {
    type Error = Error;

    fn try_from(r: &RunConfig) -> Result<Self> {
        let model: ModelKind = r
            .model
            .parse()
            .map_err(|e: ane_core::Error| Error::Usage(e.to_string()))?;
        let norm_order = match r.norm_order.as_str() {
            "after_activation" => NormOrder::AfterActivation,
            "before_activation" => NormOrder::BeforeActivation,
            other => return Err(Error::Usage(format!("unknown norm order `{other}`"))),
        };
        Ok(TrainConfig {
            model,
            dim: r.dim,
            negatives: r.negatives,
            walk: WalkConfig {
                walks_per_node: r.walks_per_node,
                walk_length: r.walk_length,
                context_size: r.context_size,
            },
            ppmi: PpmiConfig {
                steps: r.ppmi_steps,
                beta: r.ppmi_beta,
                max_nodes: r.max_nodes,
            },
            epochs: r.epochs,
            max_cycles: r.max_cycles,
            batch_size: r.batch_size,
            adversarial_batch: r.adversarial_batch,
            structure_steps: r.structure_steps,
            disc_steps: r.disc_steps,
            gen_steps: r.gen_steps,
            learning_rate: r.learning_rate,
            disc_learning_rate: r.disc_learning_rate,
            gen_learning_rate: r.gen_learning_rate,
            prior: match r.prior {
                PriorRecord::Uniform { low, high } => Prior::Uniform { low, high },
                PriorRecord::Gaussian { mean, std } => Prior::Gaussian { mean, std },
            },
            corruption: r.corruption,
            norm_order,
            disc_hidden: r.disc_hidden.clone(),
            clip_norm: r.clip_norm,
            probe_size: r.probe_size,
            seed: r.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub edges: PathBuf,
    pub weighted: bool,
    /// Precomputed feature matrix used instead of PPMI rows.
    pub features: Option<PathBuf>,
}

/// Output file names, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub embeddings: String,
    pub log: String,
    pub checkpoint: String,
    pub ppmi: Option<String>,
    pub corpus: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub nodes: usize,
    pub edges: usize,
    pub cycles: usize,
    pub initial_probe_loss: f64,
    pub final_probe_loss: f64,
    /// Hex FNV-1a digest of the resolved configuration.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u64,
    pub train_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub dataset: Dataset,
    pub config: RunConfig,
    /// Whether the training log carries real `wall_ms` values.
    pub log_timing: bool,
    pub artifacts: Artifacts,
    pub summary: Summary,
    pub timing: Timing,
}

impl RunManifest {
    pub fn train_config(&self) -> Result<TrainConfig> {
        TrainConfig::try_from(&self.config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn save(path: &Path, m: &RunManifest) -> Result<()> {
    write_atomic(path, m.to_json().as_bytes())
}

pub fn load(path: &Path) -> Result<RunManifest> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))
}

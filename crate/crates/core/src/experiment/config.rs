use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::editor::{build_noise_policy, default_alpha, EditPlan, NoiseVariant};
use crate::error::{Error, Result};
use crate::eval::Suite;
use crate::experiment::DatasetOptions;
use crate::model::{ModelConfig, TrainOptions};
use crate::probe::DEFAULT_BINS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    /// 1-based layers to probe; empty means every layer.
    pub layers: Vec<usize>,
    pub bins: usize,
    pub smooth_bleu: bool,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { layers: Vec::new(), bins: DEFAULT_BINS, smooth_bleu: false }
    }
}

/// Everything a run needs. `model.vocab_size` and `model.seed` are filled in
/// by the train stage from the dataset and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Existing JSONL dataset; when absent one is generated from `dataset`.
    pub dataset_path: Option<PathBuf>,
    pub dataset: DatasetOptions,
    pub model: ModelConfig,
    pub train: TrainOptions,
    /// Full edit plan; when absent the model's defaults are used.
    pub plan: Option<EditPlan>,
    pub variant: NoiseVariant,
    /// Noise scale; when absent it follows the batch-size schedule.
    pub alpha: Option<f64>,
    pub n_edits: usize,
    pub suite: Suite,
    /// Continuation length for the generation metrics.
    pub generation_tokens: usize,
    pub probe: ProbeOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dataset_path: None,
            dataset: DatasetOptions::default(),
            model: ModelConfig::default(),
            train: TrainOptions::default(),
            plan: None,
            variant: NoiseVariant::Dne,
            alpha: None,
            n_edits: 8,
            suite: Suite::Zsre,
            generation_tokens: 8,
            probe: ProbeOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_edits == 0 {
            return Err(Error::InvalidConfig("n_edits must be at least 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidConfig(format!("alpha must be a finite value >= 0, got {a}")));
            }
        }
        if let Some(p) = &self.dataset_path {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("dataset {} does not exist", p.display())));
            }
        }
        if self.probe.bins == 0 {
            return Err(Error::InvalidConfig("probe.bins must be at least 1".into()));
        }
        Ok(())
    }

    pub fn alpha_or_default(&self) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(self.n_edits))
    }

    /// The edit plan for a trained model, with this config's noise policy at `alpha`.
    pub fn resolve_plan(&self, model: &ModelConfig, variant: NoiseVariant, alpha: f64) -> Result<EditPlan> {
        let base = self.plan.clone().unwrap_or_else(|| EditPlan::for_model(model));
        let plan = base.clone().with_noise(build_noise_policy(variant, alpha, base.layer)?);
        plan.validate(model)?;
        Ok(plan)
    }

    /// The config without the output location, which must not influence results.
    pub fn fingerprint(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(serde_json::to_string(&c)?)
    }
}

//! The JSON run configuration. Every section and field is optional; missing
//! values take the defaults below. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use ccnets_core::baselines::BaselineConfig;
use ccnets_core::data::SynthConfig;
use ccnets_core::trainer::{EvalConfig, TrainConfig};
use ccnets_core::CcnetsConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub ccnets: CcnetsConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Fraud CSV. Relative paths resolve against the config file's directory.
    pub path: Option<PathBuf>,
    /// Use synthetic data when `path` is unset or missing.
    pub fallback_synth: bool,
    pub synth: SynthConfig,
    /// Seed of the synthetic stand-in, independent of the model seed.
    pub synth_seed: u64,
    /// Keep only the first `rows` rows before splitting.
    pub rows: Option<usize>,
    pub train_fraction: f64,
    pub normalize: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: None,
            fallback_synth: true,
            synth: SynthConfig::default(),
            synth_seed: 0,
            rows: None,
            train_fraction: 0.3,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub amplify_factor: usize,
    /// Standard deviation of the Gaussian noise added to latents when amplifying.
    pub noise_sigma: f64,
    /// How reasoner outputs become decisions.
    pub eval: EvalConfig,
    /// Probability threshold of the baseline classifiers.
    pub mlp_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            amplify_factor: 10,
            noise_sigma: 0.05,
            eval: EvalConfig::default(),
            mlp_threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let (Some(p), Some(dir)) = (&cfg.dataset.path, path.parent()) {
            if p.is_relative() {
                cfg.dataset.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ccnets.validate()?;
        self.train.validate()?;
        let d = &self.dataset;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(CliError::Usage(format!("dataset.train_fraction must lie in (0, 1), got {}", d.train_fraction)));
        }
        if d.rows == Some(0) {
            return Err(CliError::Usage("dataset.rows must be positive".into()));
        }
        if d.synth.observe_size != self.ccnets.observe_size {
            return Err(CliError::Usage(format!(
                "dataset.synth.observe_size ({}) differs from ccnets.observe_size ({})",
                d.synth.observe_size, self.ccnets.observe_size
            )));
        }
        if self.experiment.amplify_factor == 0 {
            return Err(CliError::Usage("experiment.amplify_factor must be at least 1".into()));
        }
        if self.baselines.batch_size == 0 {
            return Err(CliError::Usage("baselines.batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        cfg.ccnets.hidden_size = 64;
        cfg.dataset.rows = Some(500);
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn lowercase_enum_names_are_accepted() {
        let cfg = RunConfig::from_json(
            r#"{"ccnets": {"reasoner": {"inner_network": "deepfm", "joint_type": "cat", "final_activation": "none"},
                           "prediction_loss_type": "l1", "model_loss_reduction": "none"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.ccnets.reasoner.joint_type, ccnets_core::JointMode::Cat);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_usage_errors() {
        for bad in [
            r#"{"sed": 1}"#,
            r#"{"ccnets": {"hidden": 3}}"#,
            r#"{"dataset": {"train_fraction": 1.0}}"#,
            r#"{"ccnets": {"hidden_size": 0}}"#,
            r#"{"ccnets": {"observe_size": 8}}"#,
            "not json",
        ] {
            assert_eq!(RunConfig::from_json(bad).unwrap_err().exit_code(), 1, "{bad}");
        }
    }
}

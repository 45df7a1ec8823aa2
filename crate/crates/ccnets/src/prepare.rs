//! Dataset resolution: fraud CSV or synthetic stand-in, then the sequential
//! split and train-statistics normalization.

use ccnets_core::data::{normalize, split_sequential, synth_imbalanced, NormalizationStats, TabularDataset};
use serde::{Deserialize, Serialize};

use crate::config::DatasetConfig;
use crate::csvio::load_fraud_csv;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: TabularDataset,
    pub test: TabularDataset,
    /// Present when normalization is enabled.
    pub stats: Option<NormalizationStats>,
    pub summary: DataSummary,
    /// Set when the synthetic fallback replaced a requested file.
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_fraud: usize,
    pub test_fraud: usize,
}

/// The full dataset before splitting, plus a fallback notice if any.
pub fn load_source(cfg: &DatasetConfig) -> Result<(TabularDataset, String, Option<String>)> {
    let synth = |why: Option<String>| -> Result<_> {
        if !cfg.fallback_synth {
            return Err(CliError::Data(why.unwrap_or_else(|| "no dataset.path given and fallback_synth is off".into())));
        }
        let ds = synth_imbalanced(cfg.synth_seed, &cfg.synth)?;
        let source = format!(
            "synthetic(n={}, fraud_rate={}, separation={}, seed={})",
            cfg.synth.n, cfg.synth.fraud_rate, cfg.synth.separation, cfg.synth_seed
        );
        let notice = why.map(|w| format!("{w}; using synthetic stand-in {source}"));
        Ok((ds, source, notice))
    };
    match &cfg.path {
        Some(path) if path.exists() => Ok((load_fraud_csv(path)?, path.display().to_string(), None)),
        Some(path) => synth(Some(format!("dataset {} not found", path.display()))),
        None => synth(None),
    }
}

pub fn prepare(cfg: &DatasetConfig) -> Result<PreparedData> {
    let (mut full, source, notice) = load_source(cfg)?;
    if let Some(rows) = cfg.rows {
        full = full.head(rows);
    }
    prepare_dataset(&full, cfg, source, notice)
}

pub fn prepare_dataset(full: &TabularDataset, cfg: &DatasetConfig, source: String, notice: Option<String>) -> Result<PreparedData> {
    let (train, test) = split_sequential(full, cfg.train_fraction)?;
    let (train, test, stats) = if cfg.normalize {
        let (tr, te, stats) = normalize(&train, &test)?;
        (tr, te, Some(stats))
    } else {
        (train, test, None)
    };
    let summary = DataSummary {
        source,
        rows: full.len(),
        train_rows: train.len(),
        test_rows: test.len(),
        train_fraud: train.fraud_count(),
        test_fraud: test.fraud_count(),
    };
    Ok(PreparedData {
        train,
        test,
        stats,
        summary,
        notice,
    })
}

impl PreparedData {
    /// Maps normalized features back to the original units.
    pub fn denormalize(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        match &self.stats {
            Some(stats) => Ok(TabularDataset::new(stats.invert(&ds.features)?, ds.labels.clone(), ds.columns.clone())?),
            None => Ok(ds.clone()),
        }
    }
}

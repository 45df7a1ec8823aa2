//! Experiments 1–3 and their reports.
//!
//! Every model seed is derived from the run seed, so a run is a pure function
//! of (config, data, seed). Wall-clock time is added by the caller.

use std::collections::BTreeMap;

use ccnets_core::baselines::{train_autoencoder, train_mlp, BaselineEpoch, MlpClassifier};
use ccnets_core::curve::{fit_log_curve, CurveFit};
use ccnets_core::data::TabularDataset;
use ccnets_core::trainer::{evaluate, train_with, EpochRecord, LossSummary};
use ccnets_core::{compute_metrics, CooperativeTriple, Metrics, Tensor};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::Result;
use crate::prepare::{DataSummary, PreparedData};

/// Offsets added to the run seed for each model.
pub mod seeds {
    pub const CCNETS: u64 = 0;
    pub const AUTOENCODER: u64 = 1;
    pub const MLP: u64 = 2;
    pub const AMPLIFY: u64 = 3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub train_rows: usize,
    /// Log-fits of this arm's train-phase loss curves, by series name.
    pub curve_fits: BTreeMap<String, CurveFit>,
}

impl ArmReport {
    fn new(name: &str, m: &Metrics, train_rows: usize, curve_fits: BTreeMap<String, CurveFit>) -> Self {
        ArmReport {
            name: name.to_owned(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            tn: m.tn,
            train_rows,
            curve_fits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub dataset: DataSummary,
    pub arms: Vec<ArmReport>,
    /// Curve CSV files written next to the report.
    pub curves: Vec<String>,
    pub config: RunConfig,
    /// Absent from `metrics.json`, which must be reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// Rows of a long-format curve CSV: `epoch,phase,series,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub name: String,
    pub rows: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub phase: &'static str,
    pub series: String,
    pub value: f64,
}

impl CurveTable {
    pub fn file_name(&self) -> String {
        format!("curves_{}.csv", self.name)
    }

    pub fn from_records(name: &str, records: &[EpochRecord]) -> Self {
        let mut rows = Vec::new();
        for r in records {
            let mut push = |phase: &'static str, s: &LossSummary| {
                for (series, value) in LossSummary::NAMES.iter().zip(s.values()) {
                    rows.push(CurvePoint {
                        epoch: r.epoch,
                        phase,
                        series: (*series).to_owned(),
                        value,
                    });
                }
            };
            push("train", &r.train);
            if let Some(t) = &r.test {
                push("test", t);
            }
        }
        CurveTable { name: name.to_owned(), rows }
    }

    pub fn from_baseline(name: &str, series: &str, history: &[BaselineEpoch]) -> Self {
        let mut rows = Vec::new();
        for h in history {
            rows.push(CurvePoint {
                epoch: h.epoch,
                phase: "train",
                series: series.to_owned(),
                value: h.train_loss,
            });
            if let Some(v) = h.test_loss {
                rows.push(CurvePoint {
                    epoch: h.epoch,
                    phase: "test",
                    series: series.to_owned(),
                    value: v,
                });
            }
        }
        CurveTable { name: name.to_owned(), rows }
    }

    /// Log-fit of every train-phase series. Series that cannot be fitted
    /// (fewer than three epochs, non-positive values) are left out.
    pub fn train_fits(&self) -> BTreeMap<String, CurveFit> {
        let mut by_series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for p in self.rows.iter().filter(|p| p.phase == "train") {
            by_series.entry(&p.series).or_default().push(p.value);
        }
        by_series
            .into_iter()
            .filter_map(|(s, v)| fit_log_curve(&v).ok().map(|f| (s.to_owned(), f)))
            .collect()
    }
}

/// Everything a run produces; the CLI decides what to write where.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub curves: Vec<CurveTable>,
    /// Per-epoch CCNETS losses when a triple was trained in this run.
    pub epochs: Option<Vec<EpochRecord>>,
    pub checkpoints: Vec<(String, Checkpoint)>,
}

/// Progress callback: (model name, epoch record).
pub type Progress<'a> = &'a mut dyn FnMut(&str, &EpochRecord);

pub struct TrainedCcnets {
    pub triple: CooperativeTriple,
    pub records: Vec<EpochRecord>,
}

pub fn train_ccnets(cfg: &RunConfig, data: &PreparedData, seed: u64, progress: Progress) -> Result<TrainedCcnets> {
    let mut triple = CooperativeTriple::new(cfg.ccnets, seed + seeds::CCNETS)?;
    let records = train_with(&mut triple, &data.train, Some(&data.test), &cfg.train, |r| progress("ccnets", r))?;
    Ok(TrainedCcnets { triple, records })
}

fn mlp_metrics(mlp: &MlpClassifier, x: &Tensor, test: &TabularDataset, threshold: f64) -> Result<Metrics> {
    Ok(compute_metrics(&test.label_vec(), &mlp.predict(x, threshold)?)?)
}

struct MlpArm {
    report: ArmReport,
    curve: CurveTable,
}

/// Trains the classifier on `train` and scores it on the test split.
fn mlp_arm(cfg: &RunConfig, name: &str, train: &TabularDataset, data: &PreparedData, seed: u64) -> Result<(MlpArm, MlpClassifier)> {
    let test = &data.test;
    let (mlp, hist) = train_mlp(
        &train.features,
        &train.labels,
        &cfg.baselines,
        seed + seeds::MLP,
        Some((&test.features, &test.labels)),
    )?;
    let m = mlp_metrics(&mlp, &test.features, test, cfg.experiment.mlp_threshold)?;
    let curve = CurveTable::from_baseline(name, "log_loss", &hist);
    let report = ArmReport::new(name, &m, train.len(), curve.train_fits());
    Ok((MlpArm { report, curve }, mlp))
}

fn assemble(id: &str, cfg: &RunConfig, data: &PreparedData, seed: u64, arms: Vec<ArmReport>, curves: &[CurveTable]) -> ExperimentReport {
    ExperimentReport {
        experiment: id.to_owned(),
        seed,
        dataset: data.summary.clone(),
        arms,
        curves: curves.iter().map(CurveTable::file_name).collect(),
        config: cfg.clone(),
        wall_clock_seconds: None,
    }
}

/// CCNETS against an autoencoder whose latent codes feed an MLP.
pub fn run_experiment_1(cfg: &RunConfig, data: &PreparedData, seed: u64, progress: Progress) -> Result<ExperimentOutput> {
    let TrainedCcnets { triple, records } = train_ccnets(cfg, data, seed, progress)?;
    let m = evaluate(&triple, &data.test, &cfg.experiment.eval)?;
    let cc_curve = CurveTable::from_records("ccnets", &records);
    let cc_arm = ArmReport::new("ccnets", &m, data.train.len(), cc_curve.train_fits());

    let normal = data.train.filter_label(0.0);
    let ae_seed = seed + seeds::AUTOENCODER;
    let (ae, ae_hist) = train_autoencoder(&normal.features, &normal.labels, &cfg.baselines, ae_seed)?;
    let ae_curve = CurveTable::from_baseline("autoencoder", "reconstruction", &ae_hist);
    let codes_train = ae.encode(&data.train.features)?;
    let codes_test = ae.encode(&data.test.features)?;
    let (mlp, hist) = train_mlp(
        &codes_train,
        &data.train.labels,
        &cfg.baselines,
        seed + seeds::MLP,
        Some((&codes_test, &data.test.labels)),
    )?;
    let m = mlp_metrics(&mlp, &codes_test, &data.test, cfg.experiment.mlp_threshold)?;
    let mlp_curve = CurveTable::from_baseline("autoencoder_mlp", "log_loss", &hist);
    let mut fits = mlp_curve.train_fits();
    fits.extend(ae_curve.train_fits());
    let ae_arm = ArmReport::new("autoencoder_mlp", &m, data.train.len(), fits);

    let curves = vec![cc_curve, ae_curve, mlp_curve];
    Ok(ExperimentOutput {
        report: assemble("exp1", cfg, data, seed, vec![cc_arm, ae_arm], &curves),
        curves,
        epochs: Some(records),
        checkpoints: vec![
            ("ccnets.ckpt.json".into(), Checkpoint::from_triple(&triple)),
            ("autoencoder.ckpt.json".into(), Checkpoint::from_autoencoder(&ae, &cfg.baselines, ae_seed)),
            ("autoencoder_mlp.ckpt.json".into(), Checkpoint::from_mlp(&mlp, &cfg.baselines, seed + seeds::MLP)),
        ],
    })
}

/// Uses `triple` when given, otherwise trains one (and reports its curves).
fn triple_or_train(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    triple: Option<CooperativeTriple>,
    progress: Progress,
) -> Result<(CooperativeTriple, Option<Vec<EpochRecord>>)> {
    match triple {
        Some(t) => Ok((t, None)),
        None => {
            let t = train_ccnets(cfg, data, seed, progress)?;
            Ok((t.triple, Some(t.records)))
        }
    }
}

/// The same classifier on original, generated and reconstructed training data.
pub fn run_experiment_2(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    triple: Option<CooperativeTriple>,
    progress: Progress,
) -> Result<ExperimentOutput> {
    let (triple, records) = triple_or_train(cfg, data, seed, triple, progress)?;
    let train = &data.train;
    let generated = TabularDataset::new(triple.generate(&train.features, &train.labels)?, train.labels.clone(), train.columns.clone())?;
    // Reconstructed rows come from inferred labels; they keep the source row's label.
    let reconstructed = TabularDataset::new(triple.reconstruct(&train.features)?, train.labels.clone(), train.columns.clone())?;

    let mut arms = Vec::new();
    let mut curves = Vec::new();
    let mut checkpoints = Vec::new();
    for (name, ds) in [("original", train), ("generation", &generated), ("reconstruction", &reconstructed)] {
        let (arm, mlp) = mlp_arm(cfg, name, ds, data, seed)?;
        arms.push(arm.report);
        curves.push(arm.curve);
        checkpoints.push((format!("mlp_{name}.ckpt.json"), Checkpoint::from_mlp(&mlp, &cfg.baselines, seed + seeds::MLP)));
    }
    if let Some(r) = &records {
        curves.push(CurveTable::from_records("ccnets", r));
        checkpoints.push(("ccnets.ckpt.json".into(), Checkpoint::from_triple(&triple)));
    }
    Ok(ExperimentOutput {
        report: assemble("exp2", cfg, data, seed, arms, &curves),
        curves,
        epochs: records,
        checkpoints,
    })
}

/// Generated training data at ×1 against amplified data at ×`amplify_factor`.
pub fn run_experiment_3(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    triple: Option<CooperativeTriple>,
    progress: Progress,
) -> Result<ExperimentOutput> {
    let (triple, records) = triple_or_train(cfg, data, seed, triple, progress)?;
    let train = &data.train;
    let generated = TabularDataset::new(triple.generate(&train.features, &train.labels)?, train.labels.clone(), train.columns.clone())?;
    let factor = cfg.experiment.amplify_factor;
    let amplified = triple.amplify(train, factor, cfg.experiment.noise_sigma, seed + seeds::AMPLIFY)?;

    let mut arms = Vec::new();
    let mut curves = Vec::new();
    let amplified_name = format!("amplified_x{factor}");
    for (name, ds) in [("generation_x1", &generated), (amplified_name.as_str(), &amplified)] {
        let (arm, _) = mlp_arm(cfg, name, ds, data, seed)?;
        arms.push(arm.report);
        curves.push(arm.curve);
    }
    let mut checkpoints = Vec::new();
    if let Some(r) = &records {
        curves.push(CurveTable::from_records("ccnets", r));
        checkpoints.push(("ccnets.ckpt.json".into(), Checkpoint::from_triple(&triple)));
    }
    Ok(ExperimentOutput {
        report: assemble("exp3", cfg, data, seed, arms, &curves),
        curves,
        epochs: records,
        checkpoints,
    })
}

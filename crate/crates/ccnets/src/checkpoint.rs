//! Versioned JSON checkpoints ("ccnets-ckpt-v1").
//!
//! A checkpoint stores the configuration echo and seed, so loading rebuilds
//! the architecture and then overwrites every parameter and optimizer moment.
//! Floats go through serde_json's round-trip formatting, so a save/load cycle
//! is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ccnets_core::baselines::{AutoencoderNet, BaselineConfig, MlpClassifier, Sequential};
use ccnets_core::optim::{Adam, AdamConfig, StepDecaySchedule};
use ccnets_core::{CcnetsConfig, CooperativeTriple, ParamId, ParamStore, Role, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "ccnets-ckpt-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ccnets,
    Autoencoder,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub config: serde_json::Value,
    pub params: Vec<ParamRecord>,
    pub optimizers: Vec<OptimizerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    /// Row-major.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerRecord {
    pub name: String,
    pub config: AdamConfig,
    pub schedule: StepDecaySchedule,
    /// First parameter index and one-past-last.
    pub range: [usize; 2],
    pub states: Vec<AdamStateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamStateRecord {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Configuration echo of a baseline checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEcho {
    pub input_width: usize,
    pub baseline: BaselineConfig,
}

fn params_of(store: &ParamStore) -> Vec<ParamRecord> {
    store
        .iter()
        .map(|p| ParamRecord {
            name: p.name.clone(),
            shape: [p.value.rows(), p.value.cols()],
            values: p.value.data().to_vec(),
        })
        .collect()
}

fn optimizer_of(name: &str, adam: &Adam, schedule: StepDecaySchedule) -> OptimizerRecord {
    let r = adam.range();
    OptimizerRecord {
        name: name.to_owned(),
        config: adam.config,
        schedule,
        range: [r.start, r.end],
        states: adam
            .states()
            .iter()
            .map(|s| AdamStateRecord {
                t: s.t,
                m: s.m.data().to_vec(),
                v: s.v.data().to_vec(),
            })
            .collect(),
    }
}

fn corrupt(msg: String) -> CliError {
    CliError::Data(format!("checkpoint: {msg}"))
}

fn restore_params(store: &mut ParamStore, records: &[ParamRecord]) -> Result<()> {
    if records.len() != store.len() {
        return Err(corrupt(format!("{} parameters stored, model has {}", records.len(), store.len())));
    }
    for (i, rec) in records.iter().enumerate() {
        let p = store.get(ParamId(i));
        if p.name != rec.name || p.value.shape() != (rec.shape[0], rec.shape[1]) {
            return Err(corrupt(format!(
                "parameter {i} is '{}' {:?}, model expects '{}' {:?}",
                rec.name,
                rec.shape,
                p.name,
                p.value.shape()
            )));
        }
        let t = Tensor::from_vec(rec.shape[0], rec.shape[1], rec.values.clone())
            .map_err(|e| corrupt(format!("parameter '{}': {e}", rec.name)))?;
        store.set_value(ParamId(i), t)?;
    }
    Ok(())
}

fn restore_optimizer(adam: &mut Adam, schedule: &mut StepDecaySchedule, rec: &OptimizerRecord) -> Result<()> {
    let r = adam.range();
    if [r.start, r.end] != rec.range || rec.states.len() != adam.states().len() {
        return Err(corrupt(format!("optimizer '{}' covers {:?}, model expects {:?}", rec.name, rec.range, r)));
    }
    adam.config = rec.config;
    *schedule = rec.schedule;
    for (state, s) in adam.states_mut().iter_mut().zip(&rec.states) {
        let (rows, cols) = state.m.shape();
        if s.m.len() != rows * cols || s.v.len() != rows * cols {
            return Err(corrupt(format!("optimizer '{}' moment length mismatch", rec.name)));
        }
        state.t = s.t;
        state.m = Tensor::from_vec(rows, cols, s.m.clone())?;
        state.v = Tensor::from_vec(rows, cols, s.v.clone())?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_triple(triple: &CooperativeTriple) -> Self {
        Checkpoint {
            format: FORMAT.to_owned(),
            model_kind: ModelKind::Ccnets,
            seed: triple.seed,
            config: serde_json::to_value(triple.config).expect("config serializes"),
            params: params_of(&triple.store),
            optimizers: Role::ALL
                .iter()
                .map(|&role| optimizer_of(role.name(), triple.optimizer(role), *triple.schedule(role)))
                .collect(),
        }
    }

    fn sequential(kind: ModelKind, net: &Sequential, echo: BaselineEcho, seed: u64) -> Self {
        Checkpoint {
            format: FORMAT.to_owned(),
            model_kind: kind,
            seed,
            config: serde_json::to_value(echo).expect("config serializes"),
            params: params_of(&net.store),
            optimizers: vec![optimizer_of("adam", &net.optimizer, net.schedule)],
        }
    }

    pub fn from_autoencoder(ae: &AutoencoderNet, cfg: &BaselineConfig, seed: u64) -> Self {
        let echo = BaselineEcho {
            input_width: ae.net.input_width(),
            baseline: *cfg,
        };
        Self::sequential(ModelKind::Autoencoder, &ae.net, echo, seed)
    }

    pub fn from_mlp(mlp: &MlpClassifier, cfg: &BaselineConfig, seed: u64) -> Self {
        let echo = BaselineEcho {
            input_width: mlp.net.input_width(),
            baseline: *cfg,
        };
        Self::sequential(ModelKind::Mlp, &mlp.net, echo, seed)
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.format != FORMAT {
            return Err(corrupt(format!("unsupported format tag '{}', expected '{FORMAT}'", self.format)));
        }
        if self.model_kind != kind {
            return Err(corrupt(format!("holds a {:?} model, expected {kind:?}", self.model_kind)));
        }
        Ok(())
    }

    pub fn to_triple(&self) -> Result<CooperativeTriple> {
        self.expect_kind(ModelKind::Ccnets)?;
        let config: CcnetsConfig =
            serde_json::from_value(self.config.clone()).map_err(|e| corrupt(format!("config: {e}")))?;
        let mut triple = CooperativeTriple::new(config, self.seed)?;
        restore_params(&mut triple.store, &self.params)?;
        if self.optimizers.len() != 3 {
            return Err(corrupt(format!("{} optimizers stored, expected 3", self.optimizers.len())));
        }
        for (i, rec) in self.optimizers.iter().enumerate() {
            restore_optimizer(&mut triple.optimizers[i], &mut triple.schedules[i], rec)?;
        }
        Ok(triple)
    }

    fn echo(&self) -> Result<BaselineEcho> {
        serde_json::from_value(self.config.clone()).map_err(|e| corrupt(format!("config: {e}")))
    }

    fn restore_sequential(&self, net: &mut Sequential) -> Result<()> {
        restore_params(&mut net.store, &self.params)?;
        match self.optimizers.as_slice() {
            [rec] => restore_optimizer(&mut net.optimizer, &mut net.schedule, rec),
            other => Err(corrupt(format!("{} optimizers stored, expected 1", other.len()))),
        }
    }

    pub fn to_autoencoder(&self) -> Result<AutoencoderNet> {
        self.expect_kind(ModelKind::Autoencoder)?;
        let echo = self.echo()?;
        let mut ae = AutoencoderNet::new(echo.input_width, &echo.baseline, self.seed)?;
        self.restore_sequential(&mut ae.net)?;
        Ok(ae)
    }

    pub fn to_mlp(&self) -> Result<MlpClassifier> {
        self.expect_kind(ModelKind::Mlp)?;
        let echo = self.echo()?;
        let mut mlp = MlpClassifier::new(echo.input_width, &echo.baseline, self.seed)?;
        self.restore_sequential(&mut mlp.net)?;
        Ok(mlp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self).map_err(|e| CliError::io(path, e.into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| corrupt(format!("{}: {e}", path.display())))
    }
}

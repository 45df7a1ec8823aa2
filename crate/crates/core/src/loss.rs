//! Prediction losses, their reductions, and the per-network model losses.
//!
//! Naming follows the three data paths of a cooperative step, with
//! `X` the input observation, `X'` the generated observation (true label)
//! and `X''` the reconstructed observation (inferred label):
//!
//! | loss           | compares      |
//! |----------------|---------------|
//! | inference      | `X'` ↔ `X''`  |
//! | generation     | `X`  ↔ `X'`   |
//! | reconstruction | `X`  ↔ `X''`  |
//!
//! Each network's model loss adds the two prediction losses it should drive
//! down and subtracts the third:
//!
//! * explainer = inference + generation − reconstruction
//! * reasoner  = reconstruction + inference − generation
//! * producer  = reconstruction + generation − inference

use alloc::format;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{log_loss_scalar, Tape, Var};
use crate::tensor::Tensor;

/// Elementwise distance between a target and a prediction.
///
/// Implement this to plug a custom distance into the cooperative losses.
pub trait Distance {
    /// Elementwise values, same shape as the inputs.
    fn eval(&self, target: &Tensor, prediction: &Tensor) -> Result<Tensor>;

    /// The same quantity recorded on a tape.
    fn record(&self, tape: &mut Tape, target: Var, prediction: Var) -> Result<Var>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    LogLoss,
}

impl Distance for LossKind {
    fn eval(&self, target: &Tensor, prediction: &Tensor) -> Result<Tensor> {
        match self {
            LossKind::L1 => target.zip_map(prediction, "l1", |a, b| libm::fabs(a - b)),
            LossKind::LogLoss => prediction.zip_map(target, "log_loss", log_loss_scalar),
        }
    }

    fn record(&self, tape: &mut Tape, target: Var, prediction: Var) -> Result<Var> {
        match self {
            LossKind::L1 => {
                let d = tape.sub(target, prediction)?;
                Ok(tape.abs(d))
            }
            LossKind::LogLoss => tape.log_loss(prediction, target),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "log_loss" | "logloss" | "bce" => Ok(LossKind::LogLoss),
            other => Err(Error::Config(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMode {
    /// Mean of every element, a `1×1` result.
    All,
    /// Mean over the batch axis, one value per feature (`1×f`).
    Layer,
    /// Mean over the flattened feature axis, one value per row (`b×1`).
    Batch,
    None,
}

impl FromStr for ReductionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(ReductionMode::All),
            "layer" => Ok(ReductionMode::Layer),
            "batch" => Ok(ReductionMode::Batch),
            "none" => Ok(ReductionMode::None),
            other => Err(Error::Config(format!("unknown reduction '{other}'"))),
        }
    }
}

/// How the three prediction losses combine into a network's model loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelLossForm {
    /// `a + b − c`
    #[default]
    Signed,
    /// `|a + b − c|`
    Abs,
}

impl fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionMode::All => "all",
            ReductionMode::Layer => "layer",
            ReductionMode::Batch => "batch",
            ReductionMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLossTriple<T = Tensor> {
    pub inference: T,
    pub generation: T,
    pub reconstruction: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelLossTriple {
    pub explainer: f64,
    pub reasoner: f64,
    pub producer: f64,
}

impl ModelLossTriple {
    pub fn sum(&self) -> f64 {
        self.explainer + self.reasoner + self.producer
    }
}

impl PredictionLossTriple<f64> {
    pub fn sum(&self) -> f64 {
        self.inference + self.generation + self.reconstruction
    }
}

/// Unreduced prediction losses for one batch.
pub fn prediction_losses(
    distance: &dyn Distance,
    x: &Tensor,
    x_gen: &Tensor,
    x_rec: &Tensor,
) -> Result<PredictionLossTriple> {
    x.expect_same_shape(x_gen, "prediction_losses")?;
    x.expect_same_shape(x_rec, "prediction_losses")?;
    Ok(PredictionLossTriple {
        inference: distance.eval(x_gen, x_rec)?,
        generation: distance.eval(x, x_gen)?,
        reconstruction: distance.eval(x, x_rec)?,
    })
}

pub fn reduce(loss: &Tensor, mode: ReductionMode) -> Result<Tensor> {
    if mode != ReductionMode::None && loss.is_empty() {
        return Err(Error::Domain("cannot reduce an empty loss tensor".into()));
    }
    Ok(match mode {
        ReductionMode::All => Tensor::scalar(loss.mean()),
        ReductionMode::Layer => loss.column_means(),
        ReductionMode::Batch => loss.row_means(),
        ReductionMode::None => loss.clone(),
    })
}

#[inline]
fn combine(a: f64, b: f64, c: f64, form: ModelLossForm) -> f64 {
    let v = a + b - c;
    match form {
        ModelLossForm::Signed => v,
        ModelLossForm::Abs => libm::fabs(v),
    }
}

pub fn model_losses(p: &PredictionLossTriple<f64>, form: ModelLossForm) -> ModelLossTriple {
    let (inf, gen, rec) = (p.inference, p.generation, p.reconstruction);
    ModelLossTriple {
        explainer: combine(inf, gen, rec, form),
        reasoner: combine(rec, inf, gen, form),
        producer: combine(rec, gen, inf, form),
    }
}

/// Tape nodes for the reduced prediction losses.
pub fn record_prediction_losses(
    tape: &mut Tape,
    distance: &dyn Distance,
    x: Var,
    x_gen: Var,
    x_rec: Var,
    reduction: ReductionMode,
) -> Result<PredictionLossTriple<Var>> {
    let inference = distance.record(tape, x_gen, x_rec)?;
    let generation = distance.record(tape, x, x_gen)?;
    let reconstruction = distance.record(tape, x, x_rec)?;
    Ok(PredictionLossTriple {
        inference: record_reduce(tape, inference, reduction)?,
        generation: record_reduce(tape, generation, reduction)?,
        reconstruction: record_reduce(tape, reconstruction, reduction)?,
    })
}

pub fn record_reduce(tape: &mut Tape, loss: Var, mode: ReductionMode) -> Result<Var> {
    match mode {
        ReductionMode::All => tape.mean_all(loss),
        ReductionMode::Layer => tape.mean_rows(loss),
        ReductionMode::Batch => tape.mean_cols(loss),
        ReductionMode::None => Ok(loss),
    }
}

/// Scalar optimization objectives, one per network.
///
/// Each model loss is formed from the reduced prediction losses, reduced
/// again with `reduction`, and finally averaged to a scalar.
#[derive(Debug, Clone, Copy)]
pub struct ModelObjectives {
    pub explainer: Var,
    pub reasoner: Var,
    pub producer: Var,
}

pub fn record_model_losses(
    tape: &mut Tape,
    p: &PredictionLossTriple<Var>,
    form: ModelLossForm,
    reduction: ReductionMode,
) -> Result<ModelObjectives> {
    let mut one = |a: Var, b: Var, c: Var| -> Result<Var> {
        let s = tape.add(a, b)?;
        let mut v = tape.sub(s, c)?;
        if form == ModelLossForm::Abs {
            v = tape.abs(v);
        }
        let v = record_reduce(tape, v, reduction)?;
        tape.mean_all(v)
    };
    Ok(ModelObjectives {
        explainer: one(p.inference, p.generation, p.reconstruction)?,
        reasoner: one(p.reconstruction, p.inference, p.generation)?,
        producer: one(p.reconstruction, p.generation, p.inference)?,
    })
}

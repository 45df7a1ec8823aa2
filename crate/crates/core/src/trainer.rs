//! Cooperative training and the reasoner-only test procedure.
//!
//! One step runs a single forward pass for the whole triple, then replays
//! the backward pass once per network, each time from that network's model
//! loss and with only that network's parameters accepting gradient. The
//! other two networks are differentiated through but never updated. All
//! three gradient sets are taken at the pre-step parameters before any
//! optimizer runs.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::sigmoid;
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::loss::{record_model_losses, record_prediction_losses, ModelLossTriple, ModelObjectives, PredictionLossTriple};
use crate::metrics::{compute_metrics, Metrics};
use crate::nets::{CooperativeTriple, Role};
use crate::tape::{Gradients, ParamFilter, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Reshuffle rows every epoch. Off by default: batches follow file order.
    pub shuffle: bool,
    pub shuffle_seed: u64,
    /// Compute losses on the test split after every epoch.
    pub track_test_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 512,
            shuffle: false,
            shuffle_seed: 0,
            track_test_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The six curves tracked during training.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSummary {
    pub explainer: f64,
    pub reasoner: f64,
    pub producer: f64,
    pub inference: f64,
    pub generation: f64,
    pub reconstruction: f64,
}

impl LossSummary {
    pub fn from_parts(p: &PredictionLossTriple<f64>, m: &ModelLossTriple) -> Self {
        LossSummary {
            explainer: m.explainer,
            reasoner: m.reasoner,
            producer: m.producer,
            inference: p.inference,
            generation: p.generation,
            reconstruction: p.reconstruction,
        }
    }

    pub const NAMES: [&'static str; 6] = ["explainer", "reasoner", "producer", "inference", "generation", "reconstruction"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.explainer,
            self.reasoner,
            self.producer,
            self.inference,
            self.generation,
            self.reconstruction,
        ]
    }

    fn add_weighted(&mut self, other: &LossSummary, w: f64) {
        self.explainer += w * other.explainer;
        self.reasoner += w * other.reasoner;
        self.producer += w * other.producer;
        self.inference += w * other.inference;
        self.generation += w * other.generation;
        self.reconstruction += w * other.reconstruction;
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossSummary,
    pub test: Option<LossSummary>,
}

/// Losses of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLosses {
    pub prediction: PredictionLossTriple<f64>,
    pub model: ModelLossTriple,
}

impl StepLosses {
    pub fn summary(&self) -> LossSummary {
        LossSummary::from_parts(&self.prediction, &self.model)
    }
}

/// Forward pass plus loss nodes for one batch, ready for backward replays.
pub struct CooperativeGraph {
    pub tape: Tape,
    pub forward: crate::nets::CooperativeForward,
    pub prediction: PredictionLossTriple<Var>,
    pub objectives: ModelObjectives,
}

impl CooperativeGraph {
    pub fn build(triple: &CooperativeTriple, x: &Tensor, y: &Tensor) -> Result<Self> {
        Self::build_on(Tape::new(), triple, x, y)
    }

    /// Builds on a caller-prepared tape (for example one with frozen ranges).
    pub fn build_on(mut tape: Tape, triple: &CooperativeTriple, x: &Tensor, y: &Tensor) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dim("train batch", x.shape(), y.shape()));
        }
        let cfg = &triple.config;
        let xv = tape.input(x.clone());
        let yv = tape.input(y.clone());
        let forward = triple.forward(&mut tape, xv, yv)?;
        let prediction = record_prediction_losses(
            &mut tape,
            &cfg.prediction_loss_type,
            xv,
            forward.generated,
            forward.reconstructed,
            cfg.prediction_loss_reduction,
        )?;
        let objectives = record_model_losses(&mut tape, &prediction, cfg.model_loss_form, cfg.model_loss_reduction)?;
        Ok(CooperativeGraph {
            tape,
            forward,
            prediction,
            objectives,
        })
    }

    pub fn objective(&self, role: Role) -> Var {
        match role {
            Role::Explainer => self.objectives.explainer,
            Role::Reasoner => self.objectives.reasoner,
            Role::Producer => self.objectives.producer,
        }
    }

    pub fn losses(&self) -> StepLosses {
        let scalar = |v: Var| self.tape.value(v).mean();
        StepLosses {
            prediction: PredictionLossTriple {
                inference: scalar(self.prediction.inference),
                generation: scalar(self.prediction.generation),
                reconstruction: scalar(self.prediction.reconstruction),
            },
            model: ModelLossTriple {
                explainer: scalar(self.objectives.explainer),
                reasoner: scalar(self.objectives.reasoner),
                producer: scalar(self.objectives.producer),
            },
        }
    }

    /// Gradient of `role`'s model loss with respect to `role`'s parameters only.
    pub fn gradients(&self, triple: &CooperativeTriple, role: Role) -> Result<Gradients> {
        self.tape
            .backward(self.objective(role), &ParamFilter::Range(triple.range(role)))
    }
}

/// One cooperative update on a batch.
pub fn train_step(triple: &mut CooperativeTriple, x: &Tensor, y: &Tensor, epoch: usize) -> Result<StepLosses> {
    let graph = CooperativeGraph::build(triple, x, y)?;
    let losses = graph.losses();
    if !losses.summary().is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}: {:?}", losses.summary())));
    }
    let grads = [
        graph.gradients(triple, Role::Explainer)?,
        graph.gradients(triple, Role::Reasoner)?,
        graph.gradients(triple, Role::Producer)?,
    ];
    drop(graph);
    apply_gradients(triple, &grads, epoch)?;
    Ok(losses)
}

/// Slower equivalent of [`train_step`]: one full graph per network, with the
/// other two networks' parameters frozen into constants on that tape.
pub fn train_step_three_pass(triple: &mut CooperativeTriple, x: &Tensor, y: &Tensor, epoch: usize) -> Result<StepLosses> {
    let mut losses = None;
    let mut grads = Vec::with_capacity(3);
    for role in Role::ALL {
        let mut tape = Tape::new();
        for other in Role::ALL.into_iter().filter(|&o| o != role) {
            tape.freeze(triple.range(other));
        }
        let graph = CooperativeGraph::build_on(tape, triple, x, y)?;
        let l = graph.losses();
        if !l.summary().is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}: {:?}", l.summary())));
        }
        losses.get_or_insert(l);
        grads.push(graph.tape.backward(graph.objective(role), &ParamFilter::All)?);
    }
    let grads: [Gradients; 3] = grads.try_into().map_err(|_| Error::State("expected three gradient sets".into()))?;
    apply_gradients(triple, &grads, epoch)?;
    Ok(losses.expect("three roles"))
}

/// Loads the three gradient sets into the store and steps every optimizer.
pub fn apply_gradients(triple: &mut CooperativeTriple, grads: &[Gradients; 3], epoch: usize) -> Result<()> {
    triple.store.zero_grads();
    for g in grads {
        g.accumulate_into(&mut triple.store)?;
    }
    for role in Role::ALL {
        let lr = triple.schedule(role).lr_at(epoch);
        let i = role as usize;
        triple.optimizers[i]
            .step(&mut triple.store, lr)
            .map_err(|e| Error::Numeric(format!("{} update at epoch {epoch}: {e}", role.name())))?;
    }
    Ok(())
}

/// Losses over a dataset without touching any parameter.
pub fn evaluate_losses(triple: &CooperativeTriple, ds: &TabularDataset, batch_size: usize) -> Result<LossSummary> {
    if ds.is_empty() {
        return Err(Error::Domain("cannot evaluate losses on an empty dataset".into()));
    }
    let mut total = LossSummary::default();
    for (x, y) in ds.batches(batch_size) {
        let w = x.rows() as f64 / ds.len() as f64;
        let losses = CooperativeGraph::build(triple, &x, &y)?.losses();
        total.add_weighted(&losses.summary(), w);
    }
    Ok(total)
}

/// Runs `cfg.epochs` epochs and returns one record per epoch.
pub fn train(
    triple: &mut CooperativeTriple,
    train_set: &TabularDataset,
    test_set: Option<&TabularDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    train_with(triple, train_set, test_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    triple: &mut CooperativeTriple,
    train_set: &TabularDataset,
    test_set: Option<&TabularDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut summary = LossSummary::default();
        let mut start = 0;
        let mut batch_index = 0;
        while start < order.len() {
            let end = (start + cfg.batch_size).min(order.len());
            let (x, y) = if cfg.shuffle {
                let idx = &order[start..end];
                (train_set.features.select_rows(idx), train_set.labels.select_rows(idx))
            } else {
                (train_set.features.slice_rows(start, end), train_set.labels.slice_rows(start, end))
            };
            let losses = train_step(triple, &x, &y, epoch)
                .map_err(|e| with_context(e, epoch, batch_index))?;
            summary.add_weighted(&losses.summary(), (end - start) as f64 / order.len() as f64);
            start = end;
            batch_index += 1;
        }
        let test = match test_set {
            Some(ts) if cfg.track_test_loss && !ts.is_empty() => Some(evaluate_losses(triple, ts, cfg.batch_size)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train: summary,
            test,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}

fn with_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// How a raw reasoner output becomes a fraud score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// The reasoner output itself, on the `{0, 1}` label scale it is trained against.
    #[default]
    Raw,
    /// Logistic squashing of the output.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold: f64,
    pub score: ScoreMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: 0.5,
            score: ScoreMode::Raw,
        }
    }
}

/// Fraud score per row: `explain`, then `infer`, then the score mapping.
pub fn scores(triple: &CooperativeTriple, x: &Tensor, mode: ScoreMode) -> Result<Vec<f64>> {
    let e = triple.explain(x)?;
    let y = triple.infer(x, &e)?;
    Ok((0..y.rows())
        .map(|r| match mode {
            ScoreMode::Raw => y.get(r, 0),
            ScoreMode::Sigmoid => sigmoid(y.get(r, 0)),
        })
        .collect())
}

/// Thresholds scores: fraud iff `score ≥ threshold`.
pub fn decide(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| (s >= threshold) as u8).collect()
}

/// Reasoner-only test: classify each row and score the fraud class.
pub fn evaluate(triple: &CooperativeTriple, testset: &TabularDataset, cfg: &EvalConfig) -> Result<Metrics> {
    if testset.is_empty() {
        return Err(Error::Domain("test set is empty".into()));
    }
    let s = scores(triple, &testset.features, cfg.score)?;
    compute_metrics(&testset.label_vec(), &decide(&s, cfg.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_imbalanced, SynthConfig};
    use crate::nets::CcnetsConfig;

    fn small() -> CcnetsConfig {
        CcnetsConfig {
            observe_size: 4,
            explain_size: 3,
            hidden_size: 8,
            ..CcnetsConfig::default()
        }
    }

    fn toy(n: usize, seed: u64) -> TabularDataset {
        synth_imbalanced(
            seed,
            &SynthConfig {
                n,
                fraud_rate: 0.3,
                observe_size: 4,
                separation: 3.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_leave_the_model_alone() {
        let mut triple = CooperativeTriple::new(small(), 0).unwrap();
        let before = triple.store.checksum();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let records = train(&mut triple, &toy(50, 1), None, &cfg).unwrap();
        assert!(records.is_empty());
        assert_eq!(triple.store.checksum(), before);
    }

    #[test]
    fn one_record_per_epoch_with_test_losses() {
        let mut triple = CooperativeTriple::new(small(), 0).unwrap();
        let ds = toy(60, 1);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let records = train(&mut triple, &ds.head(40), Some(&ds.slice(40, 60)), &cfg).unwrap();
        assert_eq!(records.len(), 3);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.epoch, i);
            assert!(r.train.values().iter().all(|v| v.is_finite()));
            assert!(r.test.is_some());
        }
    }

    #[test]
    fn zero_network_on_zero_data_is_stationary() {
        let mut triple = CooperativeTriple::new(small(), 0).unwrap();
        for p in triple.store.iter_mut() {
            p.value.fill(0.0);
        }
        let before = triple.store.clone();
        let losses = train_step(&mut triple, &Tensor::zeros(5, 4), &Tensor::zeros(5, 1), 0).unwrap();
        assert_eq!(losses.summary(), LossSummary::default());
        assert_eq!(triple.store.checksum(), before.checksum());
    }

    #[test]
    fn evaluation_does_not_mutate_parameters() {
        let triple = CooperativeTriple::new(small(), 3).unwrap();
        let before = triple.store.checksum();
        evaluate(&triple, &toy(30, 2), &EvalConfig::default()).unwrap();
        evaluate_losses(&triple, &toy(30, 2), 7).unwrap();
        assert_eq!(triple.store.checksum(), before);
    }

    #[test]
    fn empty_test_set_is_domain_error() {
        let triple = CooperativeTriple::new(small(), 3).unwrap();
        let ds = toy(30, 2).head(0);
        assert!(matches!(evaluate(&triple, &ds, &EvalConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(&[0.7, 0.5, 0.2, 1.0], 0.5), [1, 1, 0, 1]);
        assert_eq!(decide(&[0.7, 1.0], 1.01), [0, 0]);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy(64, 5);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            shuffle: true,
            shuffle_seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut t = CooperativeTriple::new(small(), 7).unwrap();
            let r = train(&mut t, &ds, None, &cfg).unwrap();
            (r, t.store.checksum())
        };
        assert_eq!(run(), run());
    }
}

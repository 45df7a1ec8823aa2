//! Comparison models: an autoencoder trained on normal rows only, whose
//! latent codes feed a classifier, and a plain MLP classifier.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::loss::{Distance, LossKind};
use crate::nn::Linear;
use crate::optim::{Adam, AdamConfig, StepDecaySchedule};
use crate::param::ParamStore;
use crate::tape::{ParamFilter, Tape, Var};
use crate::tensor::Tensor;

pub const AUTOENCODER_LATENT: usize = 50;
/// Hidden widths of the classifier; a single sigmoid unit follows.
pub const MLP_HIDDEN: [usize; 2] = [256, 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub step_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub shuffle: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            epochs: 30,
            batch_size: 512,
            learning_rate: 2e-4,
            gamma: 0.99954,
            step_size: 10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            shuffle: false,
        }
    }
}

impl BaselineConfig {
    fn schedule(&self) -> Result<StepDecaySchedule> {
        StepDecaySchedule::new(self.learning_rate, self.gamma, self.step_size)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Stack of affine layers, each followed by its own activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub store: ParamStore,
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
    pub optimizer: Adam,
    pub schedule: StepDecaySchedule,
}

impl Sequential {
    pub fn new(name: &str, widths: &[usize], activations: &[Activation], cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "{name}: {} widths need {} activations",
                widths.len(),
                widths.len().saturating_sub(1)
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut store, &format!("{name}.layer{i}"), w[0], w[1], &mut rng))
            .collect();
        let optimizer = Adam::new(&store, 0..store.len(), cfg.adam());
        Ok(Sequential {
            store,
            layers,
            activations: activations.to_vec(),
            optimizer,
            schedule: cfg.schedule()?,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Runs the first `depth` layers.
    pub fn forward_to(&self, tape: &mut Tape, x: Var, depth: usize) -> Result<Var> {
        let mut h = x;
        for (layer, act) in self.layers.iter().zip(&self.activations).take(depth) {
            h = layer.forward(tape, &self.store, h)?;
            h = tape.activation(*act, h);
        }
        Ok(h)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_to(tape, x, self.layers.len())
    }

    /// Gradient-free evaluation of the first `depth` layers.
    pub fn eval_to(&self, x: &Tensor, depth: usize) -> Result<Tensor> {
        if x.cols() != self.input_width() {
            return Err(Error::dim("sequential input", x.shape(), (x.rows(), self.input_width())));
        }
        let mut out = Tensor::zeros(0, 0);
        let mut start = 0;
        while start < x.rows() {
            let end = (start + 4096).min(x.rows());
            let mut tape = Tape::new();
            let v = tape.input(x.slice_rows(start, end));
            let h = self.forward_to(&mut tape, v, depth)?;
            out = out.concat_rows(tape.value(h))?;
            start = end;
        }
        Ok(out)
    }

    /// Mean elementwise loss between the output for `x` and `target`.
    pub fn loss_graph(&self, x: &Tensor, target: &Tensor, kind: LossKind) -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let tv = tape.input(target.clone());
        let out = self.forward(&mut tape, xv)?;
        let per_elem = kind.record(&mut tape, tv, out)?;
        let root = tape.mean_all(per_elem)?;
        Ok((tape, root))
    }

    fn step(&mut self, x: &Tensor, target: &Tensor, kind: LossKind, epoch: usize) -> Result<f64> {
        let (tape, root) = self.loss_graph(x, target, kind)?;
        let loss = tape.value(root).item()?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        let grads = tape.backward(root, &ParamFilter::All)?;
        self.store.zero_grads();
        grads.accumulate_into(&mut self.store)?;
        let lr = self.schedule.lr_at(epoch);
        self.optimizer.step(&mut self.store, lr)?;
        Ok(loss)
    }

    fn mean_loss(&self, x: &Tensor, target: &Tensor, kind: LossKind, batch: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut start = 0;
        while start < x.rows() {
            let end = (start + batch.max(1)).min(x.rows());
            let (tape, root) = self.loss_graph(&x.slice_rows(start, end), &target.slice_rows(start, end), kind)?;
            total += tape.value(root).item()? * (end - start) as f64;
            start = end;
        }
        Ok(total / x.rows().max(1) as f64)
    }

    /// Mini-batch training; returns per-epoch mean losses.
    fn fit(
        &mut self,
        x: &Tensor,
        target: &Tensor,
        kind: LossKind,
        cfg: &BaselineConfig,
        seed: u64,
        held_out: Option<(&Tensor, &Tensor)>,
    ) -> Result<Vec<BaselineEpoch>> {
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                order.shuffle(&mut rng);
            }
            let mut total = 0.0;
            let mut start = 0;
            while start < order.len() {
                let end = (start + cfg.batch_size).min(order.len());
                let (bx, bt) = if cfg.shuffle {
                    (x.select_rows(&order[start..end]), target.select_rows(&order[start..end]))
                } else {
                    (x.slice_rows(start, end), target.slice_rows(start, end))
                };
                total += self.step(&bx, &bt, kind, epoch)? * (end - start) as f64;
                start = end;
            }
            let test_loss = match held_out {
                Some((hx, ht)) if hx.rows() > 0 => Some(self.mean_loss(hx, ht, kind, cfg.batch_size)?),
                _ => None,
            };
            history.push(BaselineEpoch {
                epoch,
                train_loss: total / order.len() as f64,
                test_loss,
            });
        }
        Ok(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

/// `obs → 128 → 64 → 50 → 64 → 128 → obs`, relu between layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderNet {
    pub net: Sequential,
}

impl AutoencoderNet {
    pub fn widths(observe_size: usize) -> [usize; 7] {
        [observe_size, 128, 64, AUTOENCODER_LATENT, 64, 128, observe_size]
    }

    pub fn new(observe_size: usize, cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        use Activation::{None as Id, Relu};
        let net = Sequential::new(
            "autoencoder",
            &Self::widths(observe_size),
            &[Relu, Relu, Relu, Relu, Relu, Id],
            cfg,
            seed,
        )?;
        Ok(AutoencoderNet { net })
    }

    /// Output of the first three layers.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.net.eval_to(x, 3)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.net.eval_to(x, self.net.layers.len())
    }

    /// Mean absolute reconstruction error per row.
    pub fn reconstruction_errors(&self, x: &Tensor) -> Result<Vec<f64>> {
        let rec = self.reconstruct(x)?;
        let diff = LossKind::L1.eval(x, &rec)?;
        Ok(diff.row_means().into_vec())
    }
}

/// Trains on normal rows only with an L1 reconstruction loss.
pub fn train_autoencoder(
    normal_train: &Tensor,
    labels: &Tensor,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<(AutoencoderNet, Vec<BaselineEpoch>)> {
    if labels.data().iter().any(|&v| v != 0.0) {
        return Err(Error::Precondition(String::from(
            "autoencoder training data must contain only normal (label 0) rows",
        )));
    }
    if normal_train.rows() == 0 {
        return Err(Error::Domain("autoencoder training set is empty".into()));
    }
    let mut ae = AutoencoderNet::new(normal_train.cols(), cfg, seed)?;
    let history = ae.net.fit(normal_train, normal_train, LossKind::L1, cfg, seed, None)?;
    Ok((ae, history))
}

/// `in → 256 → 3 → 1`, relu hidden layers, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub net: Sequential,
}

impl MlpClassifier {
    pub fn new(input_width: usize, cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        let net = Sequential::new(
            "mlp",
            &[input_width, MLP_HIDDEN[0], MLP_HIDDEN[1], 1],
            &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
            cfg,
            seed,
        )?;
        Ok(MlpClassifier { net })
    }

    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.eval_to(x, self.net.layers.len())?.into_vec())
    }

    /// Fraud iff probability `≥ threshold`.
    pub fn predict(&self, x: &Tensor, threshold: f64) -> Result<Vec<u8>> {
        Ok(self
            .probabilities(x)?
            .into_iter()
            .map(|p| (p >= threshold) as u8)
            .collect())
    }
}

/// Trains with log loss; `held_out` adds a per-epoch test-loss curve.
pub fn train_mlp(
    features: &Tensor,
    labels: &Tensor,
    cfg: &BaselineConfig,
    seed: u64,
    held_out: Option<(&Tensor, &Tensor)>,
) -> Result<(MlpClassifier, Vec<BaselineEpoch>)> {
    if features.rows() != labels.rows() || labels.cols() != 1 {
        return Err(Error::dim("train_mlp", features.shape(), labels.shape()));
    }
    if labels.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain("classifier labels must be 0 or 1".into()));
    }
    let positives = labels.data().iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == labels.rows() {
        return Err(Error::Domain("classifier training labels contain a single class".into()));
    }
    let mut mlp = MlpClassifier::new(features.cols(), cfg, seed)?;
    let history = mlp.net.fit(features, labels, LossKind::LogLoss, cfg, seed, held_out)?;
    Ok((mlp, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_imbalanced, SynthConfig};

    fn quick() -> BaselineConfig {
        BaselineConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 3e-3,
            ..BaselineConfig::default()
        }
    }

    #[test]
    fn encode_is_the_first_three_layers() {
        let ae = AutoencoderNet::new(30, &BaselineConfig::default(), 0).unwrap();
        let x = Tensor::filled(3, 30, 0.2);
        let code = ae.encode(&x).unwrap();
        assert_eq!(code.shape(), (3, 50));
        assert_eq!(code.row(0), code.row(2));
        let mut tape = Tape::new();
        let v = tape.input(x.clone());
        let mut h = v;
        for i in 0..3 {
            h = ae.net.layers[i].forward(&mut tape, &ae.net.store, h).unwrap();
            h = tape.activation(Activation::Relu, h);
        }
        assert_eq!(tape.value(h), &code);
        assert_eq!(ae.reconstruct(&x).unwrap().shape(), (3, 30));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let ae = AutoencoderNet::new(30, &BaselineConfig::default(), 0).unwrap();
        assert!(matches!(ae.encode(&Tensor::zeros(2, 29)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn autoencoder_refuses_fraud_rows() {
        let err = train_autoencoder(&Tensor::zeros(2, 4), &Tensor::from_rows(&[[0.0], [1.0]]).unwrap(), &quick(), 0);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn autoencoder_loss_decreases() {
        let ds = synth_imbalanced(
            1,
            &SynthConfig {
                n: 400,
                fraud_rate: 0.01,
                observe_size: 6,
                separation: 3.0,
            },
        )
        .unwrap();
        let normal = ds.filter_label(0.0);
        let (_, hist) = train_autoencoder(&normal.features, &normal.labels, &quick(), 3).unwrap();
        assert!(hist.last().unwrap().train_loss < hist[0].train_loss);
    }

    #[test]
    fn mlp_rejects_single_class() {
        let err = train_mlp(&Tensor::zeros(3, 2), &Tensor::zeros(3, 1), &quick(), 0, None);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn mlp_probabilities_lie_in_unit_interval() {
        let mlp = MlpClassifier::new(5, &BaselineConfig::default(), 2).unwrap();
        let x = Tensor::from_vec(4, 5, (0..20).map(|v| v as f64 - 10.0).collect()).unwrap();
        let p = mlp.probabilities(&x).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(mlp.predict(&x, 1.01).unwrap(), [0, 0, 0, 0]);
    }
}

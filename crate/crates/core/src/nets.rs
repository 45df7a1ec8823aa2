//! The Explainer, Reasoner and Producer networks and their joint mechanism.
//!
//! Forward stacks:
//!
//! * explainer: `X → affine → tanh → inner → relu → affine → final` gives the latent `e`
//! * reasoner: `(X, e) → joint → tanh → inner → relu → affine → final` gives the label `Y'`
//! * producer: `(e, Y) → joint → tanh → inner → relu → affine → final` gives an observation

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::loss::{LossKind, ModelLossForm, ReductionMode};
use crate::nn::{uniform_init, InnerKind, InnerNet, InnerNetSpec, Linear};
use crate::optim::{Adam, AdamConfig, StepDecaySchedule};
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    /// Both inputs feed one affine side by side.
    None,
    /// Each input is projected to the target width and the two are averaged.
    #[default]
    Add,
    /// Inputs are concatenated and projected to the target width.
    Cat,
}

impl FromStr for JointMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(JointMode::None),
            "add" => Ok(JointMode::Add),
            "cat" => Ok(JointMode::Cat),
            other => Err(Error::Config(format!("unknown joint type '{other}'"))),
        }
    }
}

impl fmt::Display for JointMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointMode::None => "none",
            JointMode::Add => "add",
            JointMode::Cat => "cat",
        })
    }
}

/// Merges two batch-aligned inputs into one `target`-wide representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Joint {
    None { left: Linear, right_weight: ParamId },
    Add { left: Linear, right: Linear },
    Cat { proj: Linear },
}

/// Result of [`joint_combine`]: `none` hands both inputs on untouched.
#[derive(Debug, Clone, PartialEq)]
pub enum JointOutput {
    Combined(Tensor),
    Pair(Tensor, Tensor),
}

impl Joint {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        mode: JointMode,
        left: usize,
        right: usize,
        target: usize,
        rng: &mut R,
    ) -> Self {
        match mode {
            JointMode::None => {
                let fan_in = left + right;
                let l = Linear::with_fan_in(store, &format!("{name}.left"), left, target, fan_in, rng);
                let right_weight = store.add(format!("{name}.right.weight"), uniform_init(rng, right, target, fan_in));
                Joint::None { left: l, right_weight }
            }
            JointMode::Add => Joint::Add {
                left: Linear::new(store, &format!("{name}.left"), left, target, rng),
                right: Linear::new(store, &format!("{name}.right"), right, target, rng),
            },
            JointMode::Cat => Joint::Cat {
                proj: Linear::new(store, &format!("{name}.cat"), left + right, target, rng),
            },
        }
    }

    pub fn mode(&self) -> JointMode {
        match self {
            Joint::None { .. } => JointMode::None,
            Joint::Add { .. } => JointMode::Add,
            Joint::Cat { .. } => JointMode::Cat,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
        if sa.0 != sb.0 {
            return Err(Error::dim("joint", sa, sb));
        }
        match self {
            Joint::None { left, right_weight } => {
                let pa = left.forward(tape, store, a)?;
                let w = tape.param(store, *right_weight);
                let pb = tape.matmul(b, w)?;
                tape.add(pa, pb)
            }
            Joint::Add { left, right } => {
                let pa = left.forward(tape, store, a)?;
                let pb = right.forward(tape, store, b)?;
                let s = tape.add(pa, pb)?;
                Ok(tape.scale(s, 0.5))
            }
            Joint::Cat { proj } => {
                let c = tape.concat_cols(a, b)?;
                proj.forward(tape, store, c)
            }
        }
    }
}

/// Tensor-level joint combination. `none` returns its inputs unchanged;
/// the networks route that pair into a side-by-side affine instead.
pub fn joint_combine(joint: &Joint, store: &ParamStore, a: &Tensor, b: &Tensor) -> Result<JointOutput> {
    if a.rows() != b.rows() {
        return Err(Error::dim("joint_combine", a.shape(), b.shape()));
    }
    if let Joint::None { .. } = joint {
        return Ok(JointOutput::Pair(a.clone(), b.clone()));
    }
    let mut tape = Tape::new();
    let (va, vb) = (tape.input(a.clone()), tape.input(b.clone()));
    let out = joint.forward(&mut tape, store, va, vb)?;
    Ok(JointOutput::Combined(tape.value(out).clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerNet {
    pub input_proj: Linear,
    pub inner: InnerNet,
    pub latent_proj: Linear,
    pub final_activation: Activation,
}

impl ExplainerNet {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.input_proj.forward(tape, store, x)?;
        let h = tape.activation(Activation::Tanh, h);
        let h = self.inner.forward(tape, store, h)?;
        let h = tape.activation(Activation::Relu, h);
        let e = self.latent_proj.forward(tape, store, h)?;
        Ok(tape.activation(self.final_activation, e))
    }
}

/// Shared body of the reasoner and producer: two inputs in, one width out.
#[derive(Debug, Clone, PartialEq)]
pub struct JointNet {
    pub joint: Joint,
    pub inner: InnerNet,
    pub output_proj: Linear,
    pub final_activation: Activation,
}

impl JointNet {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, a: Var, b: Var) -> Result<Var> {
        let h = self.joint.forward(tape, store, a, b)?;
        let h = tape.activation(Activation::Tanh, h);
        let h = self.inner.forward(tape, store, h)?;
        let h = tape.activation(Activation::Relu, h);
        let out = self.output_proj.forward(tape, store, h)?;
        Ok(tape.activation(self.final_activation, out))
    }
}

/// `(X, e) → Y'`
pub type ReasonerNet = JointNet;
/// `(e, Y) → X`
pub type ProducerNet = JointNet;

/// Per-network hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub step_size: usize,
    pub inner_network: InnerKind,
    pub inner_network_number_of_layer: usize,
    pub inner_activation: Activation,
    /// Ignored by the explainer, which has a single input.
    pub joint_type: JointMode,
    pub final_activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            learning_rate: 2e-4,
            gamma: 0.99954,
            beta1: 0.9,
            beta2: 0.999,
            step_size: 10,
            inner_network: InnerKind::Mlp,
            inner_network_number_of_layer: 3,
            inner_activation: Activation::Relu,
            joint_type: JointMode::Add,
            final_activation: Activation::None,
        }
    }
}

impl NetworkConfig {
    pub fn schedule(&self) -> Result<StepDecaySchedule> {
        StepDecaySchedule::new(self.learning_rate, self.gamma, self.step_size)
    }

    pub fn adam(&self, eps: f64) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps,
        }
    }

    fn inner_spec(&self, hidden_size: usize) -> InnerNetSpec {
        InnerNetSpec {
            kind: self.inner_network,
            num_layers: self.inner_network_number_of_layer,
            hidden_size,
            activation: self.inner_activation,
        }
    }
}

/// Full architecture and loss configuration of a cooperative triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcnetsConfig {
    pub observe_size: usize,
    pub label_size: usize,
    pub explain_size: usize,
    pub hidden_size: usize,
    pub explainer: NetworkConfig,
    pub reasoner: NetworkConfig,
    pub producer: NetworkConfig,
    pub prediction_loss_type: LossKind,
    pub prediction_loss_reduction: ReductionMode,
    pub model_loss_reduction: ReductionMode,
    pub model_loss_form: ModelLossForm,
    pub adam_eps: f64,
}

impl Default for CcnetsConfig {
    fn default() -> Self {
        CcnetsConfig {
            observe_size: 30,
            label_size: 1,
            explain_size: 26,
            hidden_size: 256,
            explainer: NetworkConfig {
                inner_network: InnerKind::Mlp,
                final_activation: Activation::Sigmoid,
                ..NetworkConfig::default()
            },
            reasoner: NetworkConfig {
                inner_network: InnerKind::Deepfm,
                joint_type: JointMode::Add,
                final_activation: Activation::None,
                ..NetworkConfig::default()
            },
            producer: NetworkConfig {
                inner_network: InnerKind::Resmlp,
                joint_type: JointMode::Add,
                final_activation: Activation::None,
                ..NetworkConfig::default()
            },
            prediction_loss_type: LossKind::L1,
            prediction_loss_reduction: ReductionMode::All,
            model_loss_reduction: ReductionMode::None,
            model_loss_form: ModelLossForm::Signed,
            adam_eps: 1e-8,
        }
    }
}

impl CcnetsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("observe_size", self.observe_size),
            ("label_size", self.label_size),
            ("explain_size", self.explain_size),
            ("hidden_size", self.hidden_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for net in [&self.explainer, &self.reasoner, &self.producer] {
            net.schedule()?;
            if net.inner_network_number_of_layer == 0 {
                return Err(Error::Config("inner_network_number_of_layer must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Explainer,
    Reasoner,
    Producer,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Explainer, Role::Reasoner, Role::Producer];

    pub fn name(self) -> &'static str {
        match self {
            Role::Explainer => "explainer",
            Role::Reasoner => "reasoner",
            Role::Producer => "producer",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Intermediate values of one cooperative forward pass.
#[derive(Debug, Clone, Copy)]
pub struct CooperativeForward {
    pub latent: Var,
    pub inferred: Var,
    pub generated: Var,
    pub reconstructed: Var,
}

/// Explainer, Reasoner and Producer bound to one parameter store, with an
/// optimizer and learning-rate schedule per network.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperativeTriple {
    pub config: CcnetsConfig,
    pub seed: u64,
    pub store: ParamStore,
    pub explainer: ExplainerNet,
    pub reasoner: ReasonerNet,
    pub producer: ProducerNet,
    ranges: [Range<usize>; 3],
    pub optimizers: [Adam; 3],
    pub schedules: [StepDecaySchedule; 3],
}

/// Rows per chunk for gradient-free forward passes over whole datasets.
const EVAL_CHUNK: usize = 2048;

impl CooperativeTriple {
    pub fn new(config: CcnetsConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden_size;

        let start = store.len();
        let explainer = ExplainerNet {
            input_proj: Linear::new(&mut store, "explainer.input", config.observe_size, h, &mut rng),
            inner: InnerNet::new(&mut store, "explainer.inner", &config.explainer.inner_spec(h), &mut rng)?,
            latent_proj: Linear::new(&mut store, "explainer.latent", h, config.explain_size, &mut rng),
            final_activation: config.explainer.final_activation,
        };
        let explainer_range = start..store.len();

        let start = store.len();
        let reasoner = JointNet {
            joint: Joint::new(
                &mut store,
                "reasoner.joint",
                config.reasoner.joint_type,
                config.observe_size,
                config.explain_size,
                h,
                &mut rng,
            ),
            inner: InnerNet::new(&mut store, "reasoner.inner", &config.reasoner.inner_spec(h), &mut rng)?,
            output_proj: Linear::new(&mut store, "reasoner.label", h, config.label_size, &mut rng),
            final_activation: config.reasoner.final_activation,
        };
        let reasoner_range = start..store.len();

        let start = store.len();
        let producer = JointNet {
            joint: Joint::new(
                &mut store,
                "producer.joint",
                config.producer.joint_type,
                config.explain_size,
                config.label_size,
                h,
                &mut rng,
            ),
            inner: InnerNet::new(&mut store, "producer.inner", &config.producer.inner_spec(h), &mut rng)?,
            output_proj: Linear::new(&mut store, "producer.observe", h, config.observe_size, &mut rng),
            final_activation: config.producer.final_activation,
        };
        let producer_range = start..store.len();

        let optimizers = [
            Adam::new(&store, explainer_range.clone(), config.explainer.adam(config.adam_eps)),
            Adam::new(&store, reasoner_range.clone(), config.reasoner.adam(config.adam_eps)),
            Adam::new(&store, producer_range.clone(), config.producer.adam(config.adam_eps)),
        ];
        let schedules = [
            config.explainer.schedule()?,
            config.reasoner.schedule()?,
            config.producer.schedule()?,
        ];
        Ok(CooperativeTriple {
            config,
            seed,
            store,
            explainer,
            reasoner,
            producer,
            ranges: [explainer_range, reasoner_range, producer_range],
            optimizers,
            schedules,
        })
    }

    /// Parameter ids owned by one network.
    pub fn range(&self, role: Role) -> Range<usize> {
        self.ranges[role.index()].clone()
    }

    pub fn optimizer(&self, role: Role) -> &Adam {
        &self.optimizers[role.index()]
    }

    pub fn schedule(&self, role: Role) -> &StepDecaySchedule {
        &self.schedules[role.index()]
    }

    /// `e = explain(X)`, `Y' = infer(X, e)`, `X' = produce(e, Y)`, `X'' = produce(e, Y')`
    pub fn forward(&self, tape: &mut Tape, x: Var, y: Var) -> Result<CooperativeForward> {
        self.check_width("observation", tape.value(x), self.config.observe_size)?;
        self.check_width("label", tape.value(y), self.config.label_size)?;
        let latent = self.explainer.forward(tape, &self.store, x)?;
        let inferred = self.reasoner.forward(tape, &self.store, x, latent)?;
        let generated = self.producer.forward(tape, &self.store, latent, y)?;
        let reconstructed = self.producer.forward(tape, &self.store, latent, inferred)?;
        Ok(CooperativeForward {
            latent,
            inferred,
            generated,
            reconstructed,
        })
    }

    fn check_width(&self, what: &'static str, t: &Tensor, want: usize) -> Result<()> {
        if t.cols() != want {
            return Err(Error::dim(what, t.shape(), (t.rows(), want)));
        }
        Ok(())
    }

    fn chunked(&self, rows: usize, mut f: impl FnMut(Range<usize>) -> Result<Tensor>) -> Result<Tensor> {
        let mut out = Tensor::zeros(0, 0);
        let mut start = 0;
        while start < rows {
            let end = (start + EVAL_CHUNK).min(rows);
            out = out.concat_rows(&f(start..end)?)?;
            start = end;
        }
        Ok(out)
    }

    pub fn explain(&self, x: &Tensor) -> Result<Tensor> {
        self.check_width("observation", x, self.config.observe_size)?;
        self.chunked(x.rows(), |r| {
            let mut tape = Tape::new();
            let xv = tape.input(x.slice_rows(r.start, r.end));
            let e = self.explainer.forward(&mut tape, &self.store, xv)?;
            Ok(tape.value(e).clone())
        })
    }

    /// Raw reasoner output per row.
    pub fn infer(&self, x: &Tensor, e: &Tensor) -> Result<Tensor> {
        self.check_width("observation", x, self.config.observe_size)?;
        self.check_width("latent", e, self.config.explain_size)?;
        if x.rows() != e.rows() {
            return Err(Error::dim("infer", x.shape(), e.shape()));
        }
        self.chunked(x.rows(), |r| {
            let mut tape = Tape::new();
            let xv = tape.input(x.slice_rows(r.start, r.end));
            let ev = tape.input(e.slice_rows(r.start, r.end));
            let y = self.reasoner.forward(&mut tape, &self.store, xv, ev)?;
            Ok(tape.value(y).clone())
        })
    }

    pub fn produce(&self, e: &Tensor, label: &Tensor) -> Result<Tensor> {
        self.check_width("latent", e, self.config.explain_size)?;
        self.check_width("label", label, self.config.label_size)?;
        if e.rows() != label.rows() {
            return Err(Error::dim("produce", e.shape(), label.shape()));
        }
        self.chunked(e.rows(), |r| {
            let mut tape = Tape::new();
            let ev = tape.input(e.slice_rows(r.start, r.end));
            let yv = tape.input(label.slice_rows(r.start, r.end));
            let x = self.producer.forward(&mut tape, &self.store, ev, yv)?;
            Ok(tape.value(x).clone())
        })
    }

    /// `produce(e, infer(X, e))` with `e = explain(X)`.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let e = self.explain(x)?;
        let y = self.infer(x, &e)?;
        self.produce(&e, &y)
    }

    /// `produce(explain(X), Y)` with the given labels.
    pub fn generate(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        if x.rows() != y.rows() {
            return Err(Error::dim("generate", x.shape(), y.shape()));
        }
        let e = self.explain(x)?;
        self.produce(&e, y)
    }

    /// `factor` noisy generation passes over `dataset`. Repetition `r`
    /// perturbs the latent with `N(0, noise_sigma²)` before producing;
    /// labels are copied from the source rows.
    pub fn amplify(&self, dataset: &TabularDataset, factor: usize, noise_sigma: f64, seed: u64) -> Result<TabularDataset> {
        if factor == 0 {
            return Err(Error::Domain("amplification factor must be at least 1".into()));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::Domain(format!("noise sigma must be finite and non-negative, got {noise_sigma}")));
        }
        if !self.store.iter().all(|p| p.value.is_finite()) {
            return Err(Error::Numeric("model parameters contain non-finite values".into()));
        }
        let e = self.explain(&dataset.features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).map_err(|err| Error::Domain(format!("{err}")))?;
        let mut features = Tensor::zeros(0, 0);
        let mut labels = Tensor::zeros(0, 0);
        for _ in 0..factor {
            let noisy = if noise_sigma > 0.0 {
                let mut n = e.clone();
                for v in n.data_mut() {
                    *v += normal.sample(&mut rng);
                }
                n
            } else {
                e.clone()
            };
            let produced = self.produce(&noisy, &dataset.labels)?;
            if !produced.is_finite() {
                return Err(Error::Numeric("amplification produced non-finite values".into()));
            }
            features = features.concat_rows(&produced)?;
            labels = labels.concat_rows(&dataset.labels)?;
        }
        TabularDataset::new(features, labels, dataset.columns.clone())
    }

    /// All parameter values of one network, flattened.
    pub fn parameter_values(&self, role: Role) -> Vec<f64> {
        self.range(role)
            .flat_map(|i| self.store.value(ParamId(i)).data().to_vec())
            .collect()
    }
}

//! Affine layers, initialization and the three inner-network families.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `output[i,j] = Σ_k input[i,k]·weight[k,j] + bias[0,j]`
pub fn affine_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(Error::dim("affine_forward", weight.shape(), bias.shape()));
    }
    input.matmul(weight)?.add_row(bias)
}

/// Uniform in `[−1/√fan_in, 1/√fan_in]`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("init shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        Self::with_fan_in(store, name, inputs, outputs, inputs, rng)
    }

    pub fn with_fan_in<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_init(rng, inputs, outputs, fan_in));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, outputs));
        Linear {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape();
        if shape.1 != self.inputs {
            return Err(Error::dim("linear", shape, (self.inputs, self.outputs)));
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.affine(x, w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    Mlp,
    Resmlp,
    Deepfm,
}

impl FromStr for InnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(InnerKind::Mlp),
            "resmlp" => Ok(InnerKind::Resmlp),
            "deepfm" => Ok(InnerKind::Deepfm),
            other => Err(Error::Config(format!("unknown inner network '{other}'"))),
        }
    }
}

impl fmt::Display for InnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerKind::Mlp => "mlp",
            InnerKind::Resmlp => "resmlp",
            InnerKind::Deepfm => "deepfm",
        })
    }
}

/// Shape of the user-customizable block inside each cooperative network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerNetSpec {
    pub kind: InnerKind,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub activation: Activation,
}

impl InnerNetSpec {
    pub fn new(kind: InnerKind) -> Self {
        InnerNetSpec {
            kind,
            num_layers: 3,
            hidden_size: 256,
            activation: Activation::Relu,
        }
    }
}

/// Embedding width of the DeepFM-lite factorization machine.
pub const DEEPFM_EMBED: usize = 8;

/// Width-preserving inner network (`hidden → hidden`).
#[derive(Debug, Clone, PartialEq)]
pub enum InnerNet {
    Mlp {
        layers: Vec<Linear>,
        activation: Activation,
    },
    /// Residual blocks: `x + act(W·(α⊙x + β) + b)`.
    ResMlp {
        blocks: Vec<ResBlock>,
        activation: Activation,
    },
    /// Every hidden unit is a field with a learned embedding scaled by its value.
    /// Output: dense tower projected back to width, plus the FM term
    /// (first order + pairwise interactions) broadcast through a learned row.
    DeepFm(DeepFm),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub alpha: ParamId,
    pub beta: ParamId,
    pub linear: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFm {
    pub embeddings: ParamId,
    pub linear_weights: ParamId,
    pub fm_out: ParamId,
    pub tower: Vec<Linear>,
    pub out: Linear,
    pub activation: Activation,
}

impl InnerNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, spec: &InnerNetSpec, rng: &mut R) -> Result<Self> {
        if spec.num_layers == 0 || spec.hidden_size == 0 {
            return Err(Error::Config(format!(
                "{name}: inner network needs at least one layer and a positive width"
            )));
        }
        let h = spec.hidden_size;
        let prefix = |part: String| format!("{name}.{part}");
        Ok(match spec.kind {
            InnerKind::Mlp => InnerNet::Mlp {
                layers: (0..spec.num_layers)
                    .map(|i| Linear::new(store, &prefix(format!("mlp{i}")), h, h, rng))
                    .collect(),
                activation: spec.activation,
            },
            InnerKind::Resmlp => InnerNet::ResMlp {
                blocks: (0..spec.num_layers)
                    .map(|i| {
                        let alpha = store.add(prefix(format!("res{i}.alpha")), Tensor::filled(1, h, 1.0));
                        let beta = store.add(prefix(format!("res{i}.beta")), Tensor::zeros(1, h));
                        let linear = Linear::new(store, &prefix(format!("res{i}.linear")), h, h, rng);
                        ResBlock { alpha, beta, linear }
                    })
                    .collect(),
                activation: spec.activation,
            },
            InnerKind::Deepfm => {
                let embeddings = store.add(prefix("fm.embeddings".into()), uniform_init(rng, h, DEEPFM_EMBED, h));
                let linear_weights = store.add(prefix("fm.linear".into()), uniform_init(rng, h, 1, h));
                let fm_out = store.add(prefix("fm.out".into()), uniform_init(rng, 1, h, h));
                let tower = (0..spec.num_layers)
                    .map(|i| Linear::new(store, &prefix(format!("deep{i}")), h, h, rng))
                    .collect();
                let out = Linear::new(store, &prefix("deep_out".into()), h, h, rng);
                InnerNet::DeepFm(DeepFm {
                    embeddings,
                    linear_weights,
                    fm_out,
                    tower,
                    out,
                    activation: spec.activation,
                })
            }
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        match self {
            InnerNet::Mlp { layers, activation } => {
                let mut h = x;
                for (i, layer) in layers.iter().enumerate() {
                    h = layer.forward(tape, store, h)?;
                    if i + 1 < layers.len() {
                        h = tape.activation(*activation, h);
                    }
                }
                Ok(h)
            }
            InnerNet::ResMlp { blocks, activation } => {
                let mut h = x;
                for block in blocks {
                    let alpha = tape.param(store, block.alpha);
                    let beta = tape.param(store, block.beta);
                    let scaled = tape.mul_row(h, alpha)?;
                    let normed = tape.add_row(scaled, beta)?;
                    let z = block.linear.forward(tape, store, normed)?;
                    let z = tape.activation(*activation, z);
                    h = tape.add(h, z)?;
                }
                Ok(h)
            }
            InnerNet::DeepFm(fm) => fm.forward(tape, store, x),
        }
    }
}

impl DeepFm {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let v = tape.param(store, self.embeddings);
        let w1 = tape.param(store, self.linear_weights);
        let w_out = tape.param(store, self.fm_out);

        // ½ Σ_f [(Σ_i x_i v_if)² − Σ_i x_i² v_if²]
        let s = tape.matmul(x, v)?;
        let s2 = tape.mul(s, s)?;
        let x2 = tape.mul(x, x)?;
        let v2 = tape.mul(v, v)?;
        let q = tape.matmul(x2, v2)?;
        let diff = tape.sub(s2, q)?;
        let pair = tape.sum_cols(diff);
        let pair = tape.scale(pair, 0.5);
        let first = tape.matmul(x, w1)?;
        let fm = tape.add(first, pair)?;
        let fm_term = tape.matmul(fm, w_out)?;

        let mut deep = x;
        for layer in &self.tower {
            deep = layer.forward(tape, store, deep)?;
            deep = tape.activation(self.activation, deep);
        }
        let deep = self.out.forward(tape, store, deep)?;
        tape.add(deep, fm_term)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(x.rows(), w.cols());
        for i in 0..x.rows() {
            for j in 0..w.cols() {
                let mut s = 0.0;
                for k in 0..x.cols() {
                    s += x.get(i, k) * w.get(k, j);
                }
                out.set(i, j, s + b.get(0, j));
            }
        }
        out
    }

    #[test]
    fn affine_examples() {
        let t = |rows: &[&[f64]]| Tensor::from_rows(rows).unwrap();
        let id = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            affine_forward(&t(&[&[1.0, 2.0]]), &id, &t(&[&[0.0, 0.0]])).unwrap().data(),
            &[1.0, 2.0]
        );
        let any = t(&[&[0.3, -9.0], &[7.0, 2.5]]);
        assert_eq!(
            affine_forward(&t(&[&[0.0, 0.0]]), &any, &t(&[&[3.0, 4.0]])).unwrap().data(),
            &[3.0, 4.0]
        );
        let x = t(&[&[1.0, 1.0]]);
        let w = t(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let b = t(&[&[1.0, 1.0]]);
        assert_eq!(affine_forward(&x, &w, &b).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(affine_forward(&x, &w, &b).unwrap(), naive_affine(&x, &w, &b));
    }

    #[test]
    fn affine_shape_errors_name_both_shapes() {
        let err = affine_forward(&Tensor::zeros(1, 3), &Tensor::zeros(2, 2), &Tensor::zeros(1, 2)).unwrap_err();
        assert_eq!(
            err,
            Error::Dimension {
                op: "matmul",
                left: (1, 3),
                right: (2, 2)
            }
        );
        assert!(affine_forward(&Tensor::zeros(1, 2), &Tensor::zeros(2, 2), &Tensor::zeros(1, 3)).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = uniform_init(&mut rng, 64, 16, 64);
        assert!(w.data().iter().all(|v| v.abs() <= 0.125));
        assert!(w.data().iter().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn inner_nets_preserve_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = uniform_init(&mut rng, 5, 12, 1);
        for kind in [InnerKind::Mlp, InnerKind::Resmlp, InnerKind::Deepfm] {
            let mut store = ParamStore::new();
            let spec = InnerNetSpec {
                hidden_size: 12,
                ..InnerNetSpec::new(kind)
            };
            let net = InnerNet::new(&mut store, "inner", &spec, &mut rng).unwrap();
            let mut tape = Tape::new();
            let x = tape.input(x0.clone());
            let y = net.forward(&mut tape, &store, x).unwrap();
            assert_eq!(tape.value(y).shape(), (5, 12), "{kind}");
        }
    }

    #[test]
    fn deepfm_pairwise_term_matches_explicit_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 6;
        let mut store = ParamStore::new();
        let spec = InnerNetSpec {
            hidden_size: h,
            num_layers: 1,
            ..InnerNetSpec::new(InnerKind::Deepfm)
        };
        let net = InnerNet::new(&mut store, "fm", &spec, &mut rng).unwrap();
        let InnerNet::DeepFm(fm) = &net else { unreachable!() };
        // zero the deep path and the linear term so only pairwise interactions remain
        for id in [fm.tower[0].weight, fm.out.weight, fm.linear_weights] {
            let shape = store.value(id).shape();
            store.set_value(id, Tensor::zeros(shape.0, shape.1)).unwrap();
        }
        store.set_value(fm.fm_out, Tensor::filled(1, h, 1.0)).unwrap();
        let x0 = uniform_init(&mut rng, 3, h, 1);
        let mut tape = Tape::new();
        let x = tape.input(x0.clone());
        let y = net.forward(&mut tape, &store, x).unwrap();
        let v = store.value(fm.embeddings);
        for r in 0..3 {
            let mut want = 0.0;
            for i in 0..h {
                for j in i + 1..h {
                    let dot: f64 = (0..DEEPFM_EMBED).map(|f| v.get(i, f) * v.get(j, f)).sum();
                    want += dot * x0.get(r, i) * x0.get(r, j);
                }
            }
            let got = tape.value(y).get(r, 0);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_layers_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = InnerNetSpec {
            num_layers: 0,
            ..InnerNetSpec::new(InnerKind::Mlp)
        };
        assert!(matches!(
            InnerNet::new(&mut ParamStore::new(), "x", &spec, &mut rng),
            Err(Error::Config(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_matches_naive_triple_loop_bit_for_bit(
                b in 1usize..=16, n in 1usize..=16, m in 1usize..=16, seed in any::<u64>()
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = uniform_init(&mut rng, b, n, 1);
                let w = uniform_init(&mut rng, n, m, 1);
                let bias = uniform_init(&mut rng, 1, m, 1);
                let got = affine_forward(&x, &w, &bias).unwrap();
                let want = naive_affine(&x, &w, &bias);
                for (g, w) in got.data().iter().zip(want.data()) {
                    prop_assert_eq!(g.to_bits(), w.to_bits());
                }
            }
        }
    }
}

//! Adam with bias correction and a step-decay learning-rate schedule.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore, Parameter};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn new(shape: (usize, usize)) -> Self {
        AdamState {
            m: Tensor::zeros(shape.0, shape.1),
            v: Tensor::zeros(shape.0, shape.1),
            t: 0,
        }
    }
}

/// One Adam update of `param` from its gradient buffer.
///
/// A non-finite gradient aborts the step before anything is modified.
pub fn adam_step(param: &mut Parameter, state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<()> {
    if state.m.shape() != param.value.shape() || state.v.shape() != param.value.shape() {
        return Err(Error::dim("adam_step", state.m.shape(), param.value.shape()));
    }
    if !(lr > 0.0) {
        return Err(Error::Domain(format!("learning rate must be positive, got {lr}")));
    }
    if !param.grad.is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient for parameter '{}'", param.name)));
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let values = param.value.data_mut();
    let grads = param.grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        values[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Adam over a contiguous range of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    range: Range<usize>,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, range: Range<usize>, config: AdamConfig) -> Self {
        let states = range
            .clone()
            .map(|i| AdamState::new(store.value(ParamId(i)).shape()))
            .collect();
        Adam { config, range, states }
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [AdamState] {
        &mut self.states
    }

    /// Applies one step to every tracked parameter. All gradients are
    /// validated first so a bad gradient leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for i in self.range.clone() {
            let p = store.get(ParamId(i));
            if !p.grad.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter '{}'", p.name)));
            }
        }
        for (state, i) in self.states.iter_mut().zip(self.range.clone()) {
            adam_step(store.get_mut(ParamId(i)), state, &self.config, lr)?;
        }
        Ok(())
    }
}

/// `lr(epoch) = base_lr · gamma^⌊epoch / step_size⌋`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecaySchedule {
    pub base_lr: f64,
    pub gamma: f64,
    pub step_size: usize,
}

impl StepDecaySchedule {
    pub fn new(base_lr: f64, gamma: f64, step_size: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if step_size == 0 {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(base_lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {base_lr}")));
        }
        Ok(StepDecaySchedule {
            base_lr,
            gamma,
            step_size,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = epoch / self.step_size.max(1);
        self.base_lr * libm::pow(self.gamma, decays as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written out independently of the tensor path.
    fn scalar_adam(mut p: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        p
    }

    fn one_param(value: f64, grad: f64) -> (Parameter, AdamState) {
        let mut p = Parameter::new("w", Tensor::scalar(value));
        p.grad = Tensor::scalar(grad);
        (p, AdamState::new((1, 1)))
    }

    #[test]
    fn first_step_matches_hand_unrolled_value() {
        let (mut p, mut s) = one_param(1.0, 0.5);
        adam_step(&mut p, &mut s, &AdamConfig::default(), 2e-4).unwrap();
        let got = p.value.item().unwrap();
        // m̂ = 0.5, v̂ = 0.25: step = 2e-4 · 0.5 / (0.5 + 1e-8)
        assert!((got - 0.9998).abs() < 1e-11, "{got}");
        assert_eq!(got, scalar_adam(1.0, &[0.5], 2e-4));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_on_fresh_state_is_a_fixed_point() {
        let (mut p, mut s) = one_param(0.37, 0.0);
        for _ in 0..5 {
            adam_step(&mut p, &mut s, &AdamConfig::default(), 1e-3).unwrap();
        }
        assert_eq!(p.value.item().unwrap(), 0.37);
    }

    #[test]
    fn constant_gradient_moves_by_about_lr_per_step() {
        let (mut p, mut s) = one_param(0.0, 3.0);
        let lr = 1e-3;
        let mut prev = 0.0;
        for _ in 0..2 {
            adam_step(&mut p, &mut s, &AdamConfig::default(), lr).unwrap();
            let now = p.value.item().unwrap();
            assert!(((prev - now) / lr - 1.0).abs() < 1e-6);
            prev = now;
        }
        assert_eq!(prev, scalar_adam(0.0, &[3.0, 3.0], lr));
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let (mut p, mut s) = one_param(1.0, f64::NAN);
        let err = adam_step(&mut p, &mut s, &AdamConfig::default(), 1e-3).unwrap_err();
        assert!(matches!(&err, Error::Numeric(msg) if msg.contains("'w'")));
        assert_eq!(p.value.item().unwrap(), 1.0);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn lr_schedule_examples() {
        let s = StepDecaySchedule::new(2e-4, 0.99954, 10).unwrap();
        for e in 0..10 {
            assert_eq!(s.lr_at(e), 2e-4);
        }
        assert!((s.lr_at(10) - 1.99908e-4).abs() < 1e-18);
        let flat = StepDecaySchedule::new(2e-4, 1.0, 10).unwrap();
        assert_eq!(flat.lr_at(12345), 2e-4);
    }

    #[test]
    fn schedule_rejects_bad_gamma() {
        assert!(StepDecaySchedule::new(1e-3, 0.0, 10).is_err());
        assert!(StepDecaySchedule::new(1e-3, 1.5, 10).is_err());
        assert!(StepDecaySchedule::new(1e-3, 0.5, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lr_is_piecewise_constant_and_non_increasing(
                gamma in 0.5f64..=1.0, step in 1usize..20, epoch in 0usize..500
            ) {
                let s = StepDecaySchedule::new(1e-3, gamma, step).unwrap();
                prop_assert!(s.lr_at(epoch + 1) <= s.lr_at(epoch));
                let start = (epoch / step) * step;
                prop_assert_eq!(s.lr_at(epoch), s.lr_at(start));
            }

            #[test]
            fn second_moment_stays_non_negative(grads in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
                let mut p = Parameter::new("w", Tensor::scalar(0.0));
                let mut s = AdamState::new((1, 1));
                for g in grads {
                    p.grad = Tensor::scalar(g);
                    adam_step(&mut p, &mut s, &AdamConfig::default(), 1e-3).unwrap();
                    prop_assert!(s.v.item().unwrap() >= 0.0);
                }
            }
        }
    }
}

//! Central finite-difference checks of tape gradients.
//!
//! Coordinates whose perturbation flips a relu/abs/clamp branch are skipped:
//! the loss is not differentiable there and a difference quotient straddling
//! the kink says nothing about the analytic gradient.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::Sequential;
use crate::error::Result;
use crate::loss::LossKind;
use crate::nets::{CooperativeTriple, Role};
use crate::param::{ParamId, ParamStore};
use crate::tape::{relative_error, Gradients, ParamFilter, Tape};
use crate::tensor::Tensor;
use crate::trainer::CooperativeGraph;

/// A scalar loss over parameters held in a [`ParamStore`].
pub trait Probe {
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Loss value and kink signature of the graph that produced it.
    fn probe(&self) -> Result<(f64, Vec<u8>)>;
    fn analytic(&self) -> Result<Gradients>;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: (f64, f64),
}

/// `per_tensor` random flat indices from every parameter in `range`
/// (all of them when a tensor is smaller).
pub fn sample_coordinates(store: &ParamStore, range: Range<usize>, per_tensor: usize, seed: u64) -> Vec<(ParamId, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in range {
        let n = store.value(ParamId(i)).len();
        if n <= per_tensor {
            out.extend((0..n).map(|k| (ParamId(i), k)));
        } else {
            out.extend((0..per_tensor).map(|_| (ParamId(i), rng.random_range(0..n))));
        }
    }
    out
}

pub fn check_gradients<P: Probe>(target: &mut P, coords: &[(ParamId, usize)], eps: f64, floor: f64) -> Result<GradCheckReport> {
    let analytic = target.analytic()?;
    let (_, base_sig) = target.probe()?;
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_pair: (0.0, 0.0),
    };
    for &(id, k) in coords {
        let original = target.params_mut().value(id).data()[k];
        target.params_mut().get_mut(id).value.data_mut()[k] = original + eps;
        let plus = target.probe();
        target.params_mut().get_mut(id).value.data_mut()[k] = original - eps;
        let minus = target.probe();
        target.params_mut().get_mut(id).value.data_mut()[k] = original;
        let ((fp, sp), (fm, sm)) = (plus?, minus?);
        if sp != base_sig || sm != base_sig {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.param(id).map_or(0.0, |g| g.data()[k]);
        let err = relative_error(a, numeric, floor);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((target.params_mut().get(id).name.clone(), k));
            report.worst_pair = (a, numeric);
        }
    }
    Ok(report)
}

/// One network's model loss, differentiated with respect to that network's parameters.
pub struct TripleObjective<'a> {
    pub triple: &'a mut CooperativeTriple,
    pub x: &'a Tensor,
    pub y: &'a Tensor,
    pub role: Role,
}

impl Probe for TripleObjective<'_> {
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.triple.store
    }

    fn probe(&self) -> Result<(f64, Vec<u8>)> {
        let g = CooperativeGraph::build(self.triple, self.x, self.y)?;
        Ok((g.tape.value(g.objective(self.role)).item()?, g.tape.kink_signature()))
    }

    fn analytic(&self) -> Result<Gradients> {
        CooperativeGraph::build(self.triple, self.x, self.y)?.gradients(self.triple, self.role)
    }
}

/// Mean elementwise loss of a sequential network's output against a target.
pub struct SequentialObjective<'a> {
    pub net: &'a mut Sequential,
    pub x: &'a Tensor,
    pub target: &'a Tensor,
    pub kind: LossKind,
}

impl SequentialObjective<'_> {
    fn graph(&self) -> Result<(Tape, crate::tape::Var)> {
        self.net.loss_graph(self.x, self.target, self.kind)
    }
}

impl Probe for SequentialObjective<'_> {
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }

    fn probe(&self) -> Result<(f64, Vec<u8>)> {
        let (tape, root) = self.graph()?;
        Ok((tape.value(root).item()?, tape.kink_signature()))
    }

    fn analytic(&self) -> Result<Gradients> {
        let (tape, root) = self.graph()?;
        tape.backward(root, &ParamFilter::All)
    }
}


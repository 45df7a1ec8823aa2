//! Per-batch reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value. [`Tape::backward`] replays the record in reverse from a root
//! node. The same tape can be replayed several times with different
//! [`ParamFilter`]s, which is how the trainer obtains one gradient set per
//! network from a single forward pass.
//!
//! Gradient flow is cut in two ways: [`Tape::detach`] creates a node whose
//! upstream never receives gradient, and parameter ranges registered with
//! [`Tape::freeze`] are loaded as constants.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{kernels, Tensor};

/// Probability clamp used by the log loss.
pub const LOG_LOSS_CLAMP: f64 = 1e-7;

/// Half-width of the roundoff band around relu/abs branch points.
pub const KINK_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Constant input, optionally tracked for input gradients.
    Leaf { tracked: bool },
    Param(ParamId),
    Detach,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Activation, Var),
    Abs(Var),
    ConcatCols(Var, Var),
    SumCols(Var),
    MeanAll(Var),
    /// Mean over the batch axis: `b×f → 1×f`.
    MeanRows(Var),
    /// Mean over the feature axis: `b×f → b×1`.
    MeanCols(Var),
    /// Elementwise binary cross-entropy `(prediction, target)`.
    LogLoss(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Which parameters receive gradient during a backward replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamFilter {
    All,
    None,
    Range(Range<usize>),
}

impl ParamFilter {
    #[inline]
    pub fn accepts(&self, id: ParamId) -> bool {
        match self {
            ParamFilter::All => true,
            ParamFilter::None => false,
            ParamFilter::Range(r) => r.contains(&id.0),
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen: Vec<Range<usize>>,
    param_nodes: Vec<Option<Var>>,
}

/// Gradients produced by one backward replay.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to a parameter, if it was reached.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.nodes[v.0].as_ref())
    }

    /// Gradient with respect to a tracked leaf or any intermediate node.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(|g| g.as_ref())
    }

    /// Every reached parameter with its gradient, in ascending id order.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(p, v)| self.nodes[v.0].as_ref().map(|g| (*p, g)))
    }

    /// Adds the gradients into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (id, g) in self.params() {
            store.get_mut(id).grad.accumulate(g)?;
        }
        Ok(())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameters with ids in `range` are loaded as constants from now on.
    pub fn freeze(&mut self, range: Range<usize>) {
        self.frozen.push(range);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { tracked: false })
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { tracked: true })
    }

    /// Loads a parameter. Repeated loads of the same id share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_nodes.get(id.0) {
            return *v;
        }
        let value = store.value(id).clone();
        let frozen = self.frozen.iter().any(|r| r.contains(&id.0));
        let var = if frozen {
            self.push(value, Op::Leaf { tracked: false })
        } else {
            self.push(value, Op::Param(id))
        };
        if self.param_nodes.len() <= id.0 {
            self.param_nodes.resize(id.0 + 1, None);
        }
        self.param_nodes[id.0] = Some(var);
        var
    }

    /// Same value as `x`, but gradient stops here.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Detach)
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(w))?;
        Ok(self.push(value, Op::MatMul(a, w)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(bias))?;
        Ok(self.push(value, Op::AddRow(x, bias)))
    }

    /// `x · weight + bias`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    /// Multiplies every row elementwise by a `1×cols` row.
    pub fn mul_row(&mut self, x: Var, scale: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(scale));
        if sv.rows() != 1 || sv.cols() != xv.cols() {
            return Err(Error::dim("mul_row", xv.shape(), sv.shape()));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (v, &s) in value.row_mut(r).iter_mut().zip(sv.data()) {
                *v *= s;
            }
        }
        Ok(self.push(value, Op::MulRow(x, scale)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        if kind == Activation::None {
            return x;
        }
        let value = kind.apply(self.value(x));
        self.push(value, Op::Act(kind, x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(libm::fabs);
        self.push(value, Op::Abs(x))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Row sums: `b×f → b×1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let value = Tensor::from_vec(xv.rows(), 1, data).expect("row sums");
        self.push(value, Op::SumCols(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(xv.mean());
        Ok(self.push(value, Op::MeanAll(x)))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let value = xv.column_means();
        Ok(self.push(value, Op::MeanRows(x)))
    }

    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let value = xv.row_means();
        Ok(self.push(value, Op::MeanCols(x)))
    }

    /// `−[y·ln p + (1−y)·ln(1−p)]` with `p` clamped to `[1e-7, 1 − 1e-7]`.
    /// Both operands may carry gradient.
    pub fn log_loss(&mut self, p: Var, target: Var) -> Result<Var> {
        let value = self.value(p).zip_map(self.value(target), "log_loss", log_loss_scalar)?;
        Ok(self.push(value, Op::LogLoss(p, target)))
    }

    /// Sign pattern of every non-smooth point on the tape (relu inputs,
    /// abs inputs, log-loss clamps). Two evaluations with equal signatures
    /// lie on the same smooth piece.
    ///
    /// Inputs within [`KINK_BAND`] of zero get their own class. Expressions
    /// such as `|a−b| + |b−c| − |a−c|` vanish identically on whole regions and
    /// then only carry roundoff, whose sign means nothing.
    pub fn kink_signature(&self) -> Vec<u8> {
        let side = |v: f64| if v.abs() <= KINK_BAND { 2 } else { (v > 0.0) as u8 };
        let mut sig = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Act(Activation::Relu, x) | Op::Abs(x) => {
                    sig.extend(self.value(x).data().iter().map(|&v| side(v)));
                }
                Op::LogLoss(p, _) => {
                    sig.extend(self.value(p).data().iter().map(|&v| {
                        (v < LOG_LOSS_CLAMP) as u8 | (((v > 1.0 - LOG_LOSS_CLAMP) as u8) << 1)
                    }));
                }
                _ => {}
            }
        }
        sig
    }

    /// Backward replay from a `1×1` root with unit seed.
    pub fn backward(&self, root: Var, filter: &ParamFilter) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::State("backward called before a forward pass".into()));
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::dim("backward root", shape, (1, 1)));
        }
        self.backward_with(root, Tensor::scalar(1.0), filter)
    }

    /// Backward replay from `root` with an explicit upstream gradient.
    pub fn backward_with(&self, root: Var, upstream: Tensor, filter: &ParamFilter) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::State("backward called before a forward pass".into()));
        }
        let root_shape = self.value(root).shape();
        if upstream.shape() != root_shape {
            return Err(Error::dim("backward upstream", upstream.shape(), root_shape));
        }
        let needs = self.needs_grad(root.0, filter);
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        if needs[root.0] {
            grads[root.0] = Some(upstream);
        }

        for idx in (0..=root.0).rev() {
            if !needs[idx] {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &needs, &mut grads)?;
            grads[idx] = Some(g);
        }

        // Only keep what callers can ask for.
        let mut params = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            match node.op {
                Op::Param(id) if needs[idx] => params.push((id, Var(idx))),
                Op::Leaf { tracked: true } => {}
                _ => {
                    if idx != root.0 {
                        grads[idx] = None;
                    }
                }
            }
        }
        params.sort_by_key(|(id, _)| *id);
        for (_, g) in params.iter().filter_map(|(_, v)| grads[v.0].as_ref().map(|g| (v, g))) {
            if !g.is_finite() {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    /// Marks nodes lying on a path from a gradient sink to `root`.
    fn needs_grad(&self, root: usize, filter: &ParamFilter) -> Vec<bool> {
        let mut needs = vec![false; root + 1];
        for idx in 0..=root {
            let node = &self.nodes[idx];
            needs[idx] = match node.op {
                Op::Leaf { tracked } => tracked,
                Op::Param(id) => filter.accepts(id),
                Op::Detach => false,
                Op::MatMul(a, b)
                | Op::AddRow(a, b)
                | Op::MulRow(a, b)
                | Op::Add(a, b)
                | Op::Sub(a, b)
                | Op::Mul(a, b)
                | Op::ConcatCols(a, b)
                | Op::LogLoss(a, b) => needs[a.0] || needs[b.0],
                Op::Scale(a, _)
                | Op::Act(_, a)
                | Op::Abs(a)
                | Op::SumCols(a)
                | Op::MeanAll(a)
                | Op::MeanRows(a)
                | Op::MeanCols(a) => needs[a.0],
            };
        }
        needs
    }

    fn propagate(&self, idx: usize, g: &Tensor, needs: &[bool], grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match node.op {
            Op::Leaf { .. } | Op::Param(_) | Op::Detach => {}
            Op::MatMul(a, w) => {
                let (av, wv) = (self.value(a), self.value(w));
                if needs[a.0] {
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let wt = wv.transpose();
                    kernels::gemm_acc(g.data(), wt.data(), da.data_mut(), g.rows(), g.cols(), wt.cols());
                    acc(grads, a, da)?;
                }
                if needs[w.0] {
                    let mut dw = Tensor::zeros(wv.rows(), wv.cols());
                    kernels::gemm_tn_acc(av.data(), g.data(), dw.data_mut(), av.rows(), av.cols(), g.cols());
                    acc(grads, w, dw)?;
                }
            }
            Op::AddRow(x, bias) => {
                if needs[x.0] {
                    acc(grads, x, g.clone())?;
                }
                if needs[bias.0] {
                    acc(grads, bias, g.column_sums())?;
                }
            }
            Op::MulRow(x, s) => {
                let (xv, sv) = (self.value(x), self.value(s));
                if needs[x.0] {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        for (d, &sc) in dx.row_mut(r).iter_mut().zip(sv.data()) {
                            *d *= sc;
                        }
                    }
                    acc(grads, x, dx)?;
                }
                if needs[s.0] {
                    let gx = g.zip_map(xv, "mul_row", |a, b| a * b)?;
                    acc(grads, s, gx.column_sums())?;
                }
            }
            Op::Add(a, b) => {
                if needs[a.0] {
                    acc(grads, a, g.clone())?;
                }
                if needs[b.0] {
                    acc(grads, b, g.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if needs[a.0] {
                    acc(grads, a, g.clone())?;
                }
                if needs[b.0] {
                    acc(grads, b, g.map(|v| -v))?;
                }
            }
            Op::Mul(a, b) => {
                if needs[a.0] {
                    let da = g.zip_map(self.value(b), "mul", |x, y| x * y)?;
                    acc(grads, a, da)?;
                }
                if needs[b.0] {
                    let db = g.zip_map(self.value(a), "mul", |x, y| x * y)?;
                    acc(grads, b, db)?;
                }
            }
            Op::Scale(a, f) => acc(grads, a, g.scale(f))?,
            Op::Act(kind, x) => {
                let dx = match kind {
                    Activation::Tanh => g.zip_map(out, "tanh", |d, y| d * (1.0 - y * y))?,
                    Activation::Sigmoid => g.zip_map(out, "sigmoid", |d, y| d * y * (1.0 - y))?,
                    Activation::Relu => {
                        g.zip_map(self.value(x), "relu", |d, v| if v > 0.0 { d } else { 0.0 })?
                    }
                    Activation::None => g.clone(),
                };
                acc(grads, x, dx)?;
            }
            Op::Abs(x) => {
                let dx = g.zip_map(self.value(x), "abs", |d, v| {
                    if v > 0.0 {
                        d
                    } else if v < 0.0 {
                        -d
                    } else {
                        0.0
                    }
                })?;
                acc(grads, x, dx)?;
            }
            Op::ConcatCols(a, b) => {
                let ac = self.value(a).cols();
                let bc = self.value(b).cols();
                if needs[a.0] {
                    let mut da = Tensor::zeros(g.rows(), ac);
                    for r in 0..g.rows() {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    }
                    acc(grads, a, da)?;
                }
                if needs[b.0] {
                    let mut db = Tensor::zeros(g.rows(), bc);
                    for r in 0..g.rows() {
                        db.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                    }
                    acc(grads, b, db)?;
                }
            }
            Op::SumCols(x) => {
                let xv = self.value(x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let d = g.get(r, 0);
                    dx.row_mut(r).iter_mut().for_each(|v| *v = d);
                }
                acc(grads, x, dx)?;
            }
            Op::MeanAll(x) => {
                let xv = self.value(x);
                let d = g.get(0, 0) / xv.len() as f64;
                acc(grads, x, Tensor::filled(xv.rows(), xv.cols(), d))?;
            }
            Op::MeanRows(x) => {
                let xv = self.value(x);
                let n = xv.rows() as f64;
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    for (v, &d) in dx.row_mut(r).iter_mut().zip(g.data()) {
                        *v = d / n;
                    }
                }
                acc(grads, x, dx)?;
            }
            Op::MeanCols(x) => {
                let xv = self.value(x);
                let n = xv.cols() as f64;
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let d = g.get(r, 0) / n;
                    dx.row_mut(r).iter_mut().for_each(|v| *v = d);
                }
                acc(grads, x, dx)?;
            }
            Op::LogLoss(p, y) => {
                if needs[y.0] {
                    // dℓ/dy = ln((1 − p) / p) on the clamped p
                    let dy = g.zip_map(self.value(p), "log_loss", |up, pp| {
                        let pc = pp.clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP);
                        up * (libm::log(1.0 - pc) - libm::log(pc))
                    })?;
                    acc(grads, y, dy)?;
                }
                if !needs[p.0] {
                    return Ok(());
                }
                let (pv, yv) = (self.value(p), self.value(y));
                let mut dp = Tensor::zeros(pv.rows(), pv.cols());
                for (((d, &up), &pp), &yy) in dp.data_mut().iter_mut().zip(g.data()).zip(pv.data()).zip(yv.data()) {
                    // dℓ/dp = (p − y) / (p(1 − p)), zero where the clamp is active
                    if (LOG_LOSS_CLAMP..=1.0 - LOG_LOSS_CLAMP).contains(&pp) {
                        *d = up * (pp - yy) / (pp * (1.0 - pp));
                    }
                }
                acc(grads, p, dp)?;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn log_loss_scalar(p: f64, y: f64) -> f64 {
    let p = p.clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP);
    -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
}

fn acc(grads: &mut [Option<Tensor>], target: Var, contribution: Tensor) -> Result<()> {
    match &mut grads[target.0] {
        Some(existing) => existing.accumulate(&contribution),
        slot @ None => {
            *slot = Some(contribution);
            Ok(())
        }
    }
}

impl Tensor {
    /// Per-column sums as a `1×cols` row.
    pub fn column_sums(&self) -> Tensor {
        let mut out = Tensor::zeros(1, self.cols());
        for r in 0..self.rows() {
            for (a, &v) in out.data_mut().iter_mut().zip(self.row(r)) {
                *a += v;
            }
        }
        out
    }
}

/// Central-difference gradient of a scalar function:
/// `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / (2·eps)` per coordinate.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, point: &Tensor, eps: f64) -> Tensor {
    let mut grad = Tensor::zeros(point.rows(), point.cols());
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = point.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Relative error used by gradient checks: `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(floor);
    libm::fabs(analytic - numeric) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn scalar_grad(kind: Activation, x: f64) -> f64 {
        let mut tape = Tape::new();
        let v = tape.variable(Tensor::scalar(x));
        let y = tape.activation(kind, v);
        let g = tape.backward(y, &ParamFilter::All).unwrap();
        g.wrt(v).unwrap().item().unwrap()
    }

    #[test]
    fn activation_derivatives_at_zero() {
        assert_eq!(scalar_grad(Activation::Sigmoid, 0.0), 0.25);
        assert_eq!(scalar_grad(Activation::Tanh, 0.0), 1.0);
        assert_eq!(scalar_grad(Activation::Relu, 0.5), 1.0);
        assert_eq!(scalar_grad(Activation::Relu, -0.5), 0.0);
    }

    #[test]
    fn backward_on_empty_tape_is_state_error() {
        let tape = Tape::new();
        let err = tape.backward(Var(0), &ParamFilter::All).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn detached_nodes_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.variable(t(&[&[1.0, 2.0]]));
        let d = tape.detach(x);
        let s = tape.add(x, d).unwrap();
        let m = tape.mean_all(s).unwrap();
        let g = tape.backward(m, &ParamFilter::All).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn frozen_params_become_constants() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let b = store.add("b", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        tape.freeze(1..2);
        let av = tape.param(&store, a);
        let bv = tape.param(&store, b);
        let y = tape.mul(av, bv).unwrap();
        let g = tape.backward(y, &ParamFilter::All).unwrap();
        assert_eq!(g.param(a).unwrap().item().unwrap(), 3.0);
        assert!(g.param(b).is_none());
    }

    #[test]
    fn filter_masks_parameters_but_not_flow() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let b = store.add("b", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let bv = tape.param(&store, b);
        let h = tape.mul(av, bv).unwrap();
        let y = tape.mul(h, av).unwrap(); // a²b
        let g = tape.backward(y, &ParamFilter::Range(0..1)).unwrap();
        assert_eq!(g.param(a).unwrap().item().unwrap(), 12.0);
        assert!(g.param(b).is_none());
        let g = tape.backward(y, &ParamFilter::Range(1..2)).unwrap();
        assert_eq!(g.param(b).unwrap().item().unwrap(), 4.0);
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x.get(0, 0) * x.get(0, 0), &Tensor::scalar(3.0), 1e-5);
        assert!((g.item().unwrap() - 6.0).abs() < 1e-8);
        let p = t(&[&[0.3, -1.0, 2.5], &[4.0, 0.0, 1.0]]);
        let g = finite_diff_grad(|x| x.sum(), &p, 1e-5);
        assert!(g.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn log_loss_is_finite_at_the_boundaries() {
        let mut tape = Tape::new();
        let p = tape.variable(t(&[&[0.0, 1.0, 0.3]]));
        let y = tape.input(t(&[&[1.0, 0.0, 1.0]]));
        let l = tape.log_loss(p, y).unwrap();
        assert!(tape.value(l).is_finite());
        let m = tape.mean_all(l).unwrap();
        let g = tape.backward(m, &ParamFilter::All).unwrap();
        let d = g.wrt(p).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 1), 0.0);
        assert!((d.get(0, 2) - (-1.0 / 0.3) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        // f(x) = mean(|concat(tanh(x·W + b) ⊙ s, sigmoid(x)) − c|) + mean over
        // batch/layer reductions and row sums of a product.
        let x0 = t(&[&[0.3, -0.7, 1.1], &[-0.2, 0.5, 0.9]]);
        let w = t(&[&[0.2, -0.4], &[0.7, 0.1], &[-0.3, 0.5]]);
        let bias = t(&[&[0.05, -0.1]]);
        let s = t(&[&[1.5, -0.5]]);
        let c = t(&[&[0.1, 0.2, 0.3, 0.4, 0.5], &[-0.3, 0.0, 0.8, 0.2, 0.9]]);
        let eval = |x: &Tensor, want_grad: bool| -> (f64, Option<Tensor>) {
            let mut tape = Tape::new();
            let xv = tape.variable(x.clone());
            let wv = tape.input(w.clone());
            let bv = tape.input(bias.clone());
            let sv = tape.input(s.clone());
            let cv = tape.input(c.clone());
            let h = tape.affine(xv, wv, bv).unwrap();
            let h = tape.activation(Activation::Tanh, h);
            let h = tape.mul_row(h, sv).unwrap();
            let sg = tape.activation(Activation::Sigmoid, xv);
            let cat = tape.concat_cols(h, sg).unwrap();
            let diff = tape.sub(cat, cv).unwrap();
            let a = tape.abs(diff);
            let l1 = tape.mean_all(a).unwrap();
            let sq = tape.mul(cat, cat).unwrap();
            let rs = tape.sum_cols(sq);
            let rb = tape.mean_cols(sq).unwrap();
            let rl = tape.mean_rows(sq).unwrap();
            let m1 = tape.mean_all(rs).unwrap();
            let m2 = tape.mean_all(rb).unwrap();
            let m3 = tape.mean_all(rl).unwrap();
            let t1 = tape.add(l1, m1).unwrap();
            let t2 = tape.sub(m2, m3).unwrap();
            let t3 = tape.scale(t2, 0.5);
            let root = tape.add(t1, t3).unwrap();
            let v = tape.value(root).item().unwrap();
            let g = want_grad.then(|| {
                tape.backward(root, &ParamFilter::All)
                    .unwrap()
                    .wrt(xv)
                    .unwrap()
                    .clone()
            });
            (v, g)
        };
        let analytic = eval(&x0, true).1.unwrap();
        let numeric = finite_diff_grad(|x| eval(x, false).0, &x0, 1e-5);
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            assert!(relative_error(*a, *n, 1e-8) < 1e-6, "{a} vs {n}");
        }
    }
}

//! Tape-based reverse-mode differentiation over the tensor kernels.
//!
//! A [`Tape`] records every operation executed through it together with the
//! produced value. [`Tape::backward`] replays the record in reverse and adds
//! the resulting gradients into the [`Parameter`]s that fed the graph.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Shape, Tensor};

/// A named trainable tensor with an accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    name: String,
    dims: Vec<usize>,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    /// `dims` is the logical shape written to checkpoints (a bias is rank 1
    /// even though it is stored as `(1, C, 1, 1)`).
    pub fn new(name: impl Into<String>, dims: Vec<usize>, value: Tensor) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), value.len());
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            dims,
            value,
            grad,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered parameter collection; enumeration order is insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, param: Parameter) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
        pad: usize,
    },
    LeakyRelu {
        x: Var,
        slope: f32,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ScaleChannels {
        x: Var,
        a: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    PixelShuffle {
        x: Var,
        s: usize,
    },
    ContrastPool {
        x: Var,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Tensor,
    },
    MeanAbsDiff {
        x: Var,
        target: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    /// Full-precision value of scalar reductions.
    scalar: Option<f64>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a reduction node, kept in `f64`.
    pub fn scalar(&self, v: Var) -> f64 {
        let node = &self.nodes[v.0];
        node.scalar.unwrap_or_else(|| node.value.data()[0] as f64)
    }

    fn push(&mut self, op: Op, value: Tensor, scalar: Option<f64>) -> Var {
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param(_) => true,
            op => parents(op).iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            scalar,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t, None)
    }

    /// Parameter leaf. Repeated calls for the same id return the same var.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), store.get(id).value.clone(), None);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var, pad: usize) -> Result<Var> {
        let y = ops::conv2d_raw(self.value(x), self.value(kernel), self.value(bias), pad)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                kernel,
                bias,
                pad,
            },
            y,
            None,
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let y = ops::leaky_relu(self.value(x), slope);
        self.push(Op::LeakyRelu { x, slope }, y, None)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(Op::Relu { x }, y, None)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid(self.value(x));
        self.push(Op::Sigmoid { x }, y, None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add { a, b }, y, None))
    }

    pub fn scale_channels(&mut self, x: Var, a: Var) -> Result<Var> {
        let y = ops::scale_channels(self.value(x), self.value(a))?;
        Ok(self.push(Op::ScaleChannels { x, a }, y, None))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let y = ops::concat_channels(&values)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            y,
            None,
        ))
    }

    pub fn pixel_shuffle(&mut self, x: Var, s: usize) -> Result<Var> {
        let y = ops::pixel_shuffle(self.value(x), s)?;
        Ok(self.push(Op::PixelShuffle { x, s }, y, None))
    }

    pub fn global_contrast_pool(&mut self, x: Var) -> Var {
        let y = ops::global_contrast_pool(self.value(x));
        self.push(Op::ContrastPool { x }, y, None)
    }

    /// Sum of all elements as a `(1, 1, 1, 1)` scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Op::Sum { x }, scalar_tensor(s), Some(s))
    }

    /// `sum(x * weights)` as a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != weights.shape() {
            return Err(Error::shape("weighted_sum", xv.shape(), weights.shape()));
        }
        let s: f64 = xv
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        Ok(self.push(Op::WeightedSum { x, weights }, scalar_tensor(s), Some(s)))
    }

    /// Mean absolute difference against a constant target.
    pub fn mean_abs_diff(&mut self, x: Var, target: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(Error::shape("l1 loss", xv.shape(), target.shape()));
        }
        let s = xv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / xv.len().max(1) as f64;
        Ok(self.push(
            Op::MeanAbsDiff {
                x,
                target: target.clone(),
            },
            scalar_tensor(s),
            Some(s),
        ))
    }

    /// Backpropagate from the most recently recorded node.
    pub fn backward(&mut self, loss_grad: &Tensor, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Empty("backward on an empty tape".into()));
        }
        let last = Var(self.nodes.len() - 1);
        self.backward_from(last, loss_grad, store)
    }

    /// Backpropagate from `output`, adding into the grads held by `store`.
    /// A tape can be replayed once.
    pub fn backward_from(
        &mut self,
        output: Var,
        loss_grad: &Tensor,
        store: &mut ParamStore,
    ) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let out_shape = self.value(output).shape();
        if loss_grad.shape() != out_shape {
            return Err(Error::shape("backward", out_shape, loss_grad.shape()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(loss_grad.clone());

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    for (d, s) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                Op::Conv2d {
                    x,
                    kernel,
                    bias,
                    pad,
                } => {
                    let xv = &self.nodes[x.0];
                    let kv = &self.nodes[kernel.0];
                    if xv.requires_grad {
                        let gx = ops::conv2d_backward_input(&g, xv.value.shape(), &kv.value, *pad)?;
                        accumulate(&mut grads, *x, gx);
                    }
                    if kv.requires_grad || self.nodes[bias.0].requires_grad {
                        let (gk, gb) =
                            ops::conv2d_backward_weights(&g, &xv.value, kv.value.shape(), *pad)?;
                        let gb = gb.reshape(self.nodes[bias.0].value.shape())?;
                        accumulate(&mut grads, *kernel, gk);
                        accumulate(&mut grads, *bias, gb);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let gx = ops::leaky_relu_backward(&g, &self.nodes[x.0].value, *slope);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu { x } => {
                    let gx = ops::relu_backward(&g, &self.nodes[x.0].value);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid { x } => {
                    let gx = ops::sigmoid_backward(&g, &node.value);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::ScaleChannels { x, a } => {
                    let (gx, ga) = ops::scale_channels_backward(
                        &g,
                        &self.nodes[x.0].value,
                        &self.nodes[a.0].value,
                    );
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat { parts } => {
                    let widths: Vec<usize> = parts
                        .iter()
                        .map(|p| self.nodes[p.0].value.shape().c)
                        .collect();
                    for (p, gp) in parts.iter().zip(ops::split_channels(&g, &widths)?) {
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::PixelShuffle { x, s } => {
                    accumulate(&mut grads, *x, ops::pixel_unshuffle(&g, *s)?);
                }
                Op::ContrastPool { x } => {
                    let gx = ops::global_contrast_pool_backward(&g, &self.nodes[x.0].value);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sum { x } => {
                    let shape = self.nodes[x.0].value.shape();
                    accumulate(&mut grads, *x, Tensor::full(shape, g.data()[0]));
                }
                Op::WeightedSum { x, weights } => {
                    accumulate(&mut grads, *x, weights.scale(g.data()[0]));
                }
                Op::MeanAbsDiff { x, target } => {
                    let xv = &self.nodes[x.0].value;
                    let k = g.data()[0] / xv.len().max(1) as f32;
                    let data = xv
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &t)| sign(p - t) * k)
                        .collect();
                    accumulate(&mut grads, *x, Tensor::from_vec(xv.shape(), data)?);
                }
            }
        }
        Ok(())
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn scalar_tensor(v: f64) -> Tensor {
    Tensor::full(Shape::new(1, 1, 1, 1), v as f32)
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Input | Op::Param(_) => vec![],
        Op::Conv2d {
            x, kernel, bias, ..
        } => vec![*x, *kernel, *bias],
        Op::LeakyRelu { x, .. }
        | Op::Relu { x }
        | Op::Sigmoid { x }
        | Op::PixelShuffle { x, .. }
        | Op::ContrastPool { x }
        | Op::Sum { x }
        | Op::WeightedSum { x, .. }
        | Op::MeanAbsDiff { x, .. } => vec![*x],
        Op::Add { a, b } => vec![*a, *b],
        Op::ScaleChannels { x, a } => vec![*x, *a],
        Op::Concat { parts } => parts.clone(),
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (d, s) in existing.data_mut().iter_mut().zip(g.data()) {
                *d += s;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Settings for [`finite_diff_check`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f32,
    /// Coordinates sampled across all checked parameters.
    pub samples: usize,
    pub seed: u64,
    /// Skip coordinates whose analytic gradient, probed at five evenly spaced
    /// points across `p ± eps`, deviates from a straight line by more than this
    /// relative amount (a kink lies inside the difference interval). `None`
    /// checks every sampled coordinate.
    pub kink_threshold: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-3,
            samples: 64,
            seed: 0,
            kink_threshold: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// `(parameter, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients against central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps` on sampled coordinates of `ids`.
///
/// `f` records a scalar-valued computation on the given tape. Relative error
/// is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`. Parameter
/// values are restored and grads of `ids` are left holding the analytic
/// gradient at the unperturbed point.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    cfg: &GradCheck,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if cfg.eps <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite difference eps must be > 0".into(),
        ));
    }
    let analytic = analytic_grads(store, ids, &f)?;

    let sizes: Vec<usize> = ids.iter().map(|&id| store.get(id).value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = sample(&mut rng, total, cfg.samples.min(total)).into_vec();
    picks.sort_unstable();

    let mut report = GradCheckReport::default();
    for flat in picks {
        let (slot, idx) = locate(&sizes, flat);
        let id = ids[slot];
        let orig = store.get(id).value.data()[idx];
        let a = analytic[slot].data()[idx] as f64;

        store.get_mut(id).value.data_mut()[idx] = orig + cfg.eps;
        let fp = evaluate(store, &f)?;
        store.get_mut(id).value.data_mut()[idx] = orig - cfg.eps;
        let fm = evaluate(store, &f)?;
        let kinked = match cfg.kink_threshold {
            Some(th) => {
                let mut probes = [0.0f64; 5];
                for (k, g) in probes.iter_mut().enumerate() {
                    if k == 2 {
                        *g = a;
                        continue;
                    }
                    let t = (k as f32 - 2.0) / 2.0;
                    store.get_mut(id).value.data_mut()[idx] = orig + t * cfg.eps;
                    *g = analytic_grads(store, &[id], &f)?[0].data()[idx] as f64;
                }
                nonlinearity(&probes) > th
            }
            None => false,
        };
        store.get_mut(id).value.data_mut()[idx] = orig;
        if kinked {
            report.skipped_kinks += 1;
            continue;
        }

        let numeric = (fp - fm) / (2.0 * cfg.eps as f64);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((store.get(id).name().to_string(), idx, a, numeric));
        }
    }

    for (&id, g) in ids.iter().zip(analytic) {
        store.get_mut(id).grad = g;
    }
    Ok(report)
}

/// Largest residual of a least-squares line through gradients sampled at
/// equally spaced offsets, relative to their magnitude. Smooth objectives give
/// nearly linear gradients over a small interval; a kink shows up as a step.
fn nonlinearity(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let gm = g.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in g.iter().enumerate() {
        let t = i as f64 - tm;
        sxy += t * (v - gm);
        sxx += t * t;
    }
    let slope = sxy / sxx;
    let scale = g.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
    g.iter()
        .enumerate()
        .map(|(i, &v)| (v - gm - slope * (i as f64 - tm)).abs() / scale)
        .fold(0.0, f64::max)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &s) in sizes.iter().enumerate() {
        if flat < s {
            return (i, flat);
        }
        flat -= s;
    }
    unreachable!("flat index within total size")
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::NonFinite("finite-difference objective".into()));
    }
    Ok(v)
}

fn analytic_grads<F>(store: &mut ParamStore, ids: &[ParamId], f: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    for &id in ids {
        store.get_mut(id).zero_grad();
    }
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite("finite-difference objective".into()));
    }
    if tape.value(out).len() != 1 {
        return Err(Error::shape(
            "finite_diff_check",
            Shape::new(1, 1, 1, 1),
            tape.value(out).shape(),
        ));
    }
    tape.backward_from(out, &Tensor::full(Shape::new(1, 1, 1, 1), 1.0), store)?;
    Ok(ids.iter().map(|&id| store.get(id).grad.clone()).collect())
}

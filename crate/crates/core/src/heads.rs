//! Classification heads over the flattened pooled representation and the
//! label-smoothed cross-entropy objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HasParams, Param, Real, Rng, Tensor};

pub const DEFAULT_LABEL_SMOOTHING: f64 = 0.1;
pub const DEFAULT_MLP_HIDDEN: usize = 128;

/// `out[b] = bias + weight . x[b]`, accumulated starting from the bias.
fn affine_forward<S: Real>(x: &[S], batch: usize, weight: &[S], bias: &[S]) -> Vec<S> {
    let out_dim = bias.len();
    let in_dim = weight.len() / out_dim;
    let mut out = vec![S::zero(); batch * out_dim];
    for (xb, ob) in x.chunks(in_dim).zip(out.chunks_mut(out_dim)) {
        for (k, o) in ob.iter_mut().enumerate() {
            let row = &weight[k * in_dim..(k + 1) * in_dim];
            let mut acc = bias[k];
            for (&w, &v) in row.iter().zip(xb) {
                acc += w * v;
            }
            *o = acc;
        }
    }
    out
}

/// Accumulates into `weight`/`bias` grads and returns the input gradient.
fn affine_backward<S: Real>(x: &[S], grad: &[S], w: &[S], wg: &mut [S], bg: &mut [S]) -> Vec<S> {
    let out_dim = bg.len();
    let in_dim = wg.len() / out_dim;
    let mut gx = vec![S::zero(); x.len()];
    for ((xb, gb), gxb) in x
        .chunks(in_dim)
        .zip(grad.chunks(out_dim))
        .zip(gx.chunks_mut(in_dim))
    {
        for (k, &g) in gb.iter().enumerate() {
            bg[k] += g;
            let row = &w[k * in_dim..(k + 1) * in_dim];
            let grow = &mut wg[k * in_dim..(k + 1) * in_dim];
            for i in 0..in_dim {
                grow[i] += g * xb[i];
                gxb[i] += g * row[i];
            }
        }
    }
    gx
}

fn check_input<S: Real>(x: &Tensor<S>, in_dim: usize, op: &'static str) -> Result<usize> {
    match x.shape() {
        &[b, n] if n == in_dim => Ok(b),
        other => Err(Error::shape(op, other, &[0, in_dim])),
    }
}

#[derive(Clone, Debug)]
pub struct LinearHead<S> {
    in_dim: usize,
    weight: Param<S>,
    bias: Param<S>,
    input: Option<Tensor<S>>,
}

impl<S: Real> LinearHead<S> {
    pub fn new(prefix: &str, in_dim: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if in_dim == 0 || classes == 0 {
            return Err(Error::InvalidConfig(
                "linear head needs positive dimensions".into(),
            ));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Self {
            in_dim,
            weight: Param::new(
                format!("{prefix}.weight"),
                rng.uniform(-bound, bound, &[classes, in_dim])?,
            ),
            bias: Param::new(format!("{prefix}.bias"), Tensor::zeros(&[classes])),
            input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.numel()
    }

    pub fn weight_mut(&mut self) -> &mut Param<S> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Param<S> {
        &mut self.bias
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let b = check_input(x, self.in_dim, "linear_head")?;
        let out = affine_forward(
            x.data(),
            b,
            self.weight.value.data(),
            self.bias.value.data(),
        );
        self.input = Some(x.clone());
        Tensor::new(&[b, self.out_dim()], out)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("linear head"))?;
        let b = x.shape()[0];
        if grad.shape() != [b, self.out_dim()] {
            return Err(Error::shape(
                "linear_head_backward",
                grad.shape(),
                &[b, self.out_dim()],
            ));
        }
        let gx = affine_backward(
            x.data(),
            grad.data(),
            self.weight.value.data(),
            self.weight.grad.data_mut(),
            self.bias.grad.data_mut(),
        );
        Tensor::new(x.shape(), gx)
    }

    fn cast<T: Real>(&self) -> LinearHead<T> {
        LinearHead {
            in_dim: self.in_dim,
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            input: None,
        }
    }
}

impl<S: Real> HasParams<S> for LinearHead<S> {
    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Affine, ReLU, affine.
#[derive(Clone, Debug)]
pub struct MlpHead<S> {
    pub hidden: LinearHead<S>,
    pub output: LinearHead<S>,
    pre_activation: Option<Tensor<S>>,
}

impl<S: Real> MlpHead<S> {
    pub fn new(in_dim: usize, hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidConfig("mlp hidden size must be >= 1".into()));
        }
        Ok(Self {
            hidden: LinearHead::new("head.hidden", in_dim, hidden, rng)?,
            output: LinearHead::new("head.output", hidden, classes, rng)?,
            pre_activation: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let pre = self.hidden.forward(x)?;
        let mut act = pre.clone();
        act.data_mut()
            .iter_mut()
            .for_each(|v| *v = v.max(S::zero()));
        self.pre_activation = Some(pre);
        self.output.forward(&act)
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let pre = self
            .pre_activation
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("mlp head"))?;
        let mut g = self.output.backward(grad)?;
        g.data_mut().iter_mut().zip(pre.data()).for_each(|(g, &x)| {
            if x <= S::zero() {
                *g = S::zero()
            }
        });
        self.hidden.backward(&g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Clone, Debug)]
pub enum Head<S> {
    Linear(LinearHead<S>),
    Mlp(MlpHead<S>),
}

impl<S: Real> Head<S> {
    pub fn new(kind: HeadKind, in_dim: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        Ok(match kind {
            HeadKind::Linear => Head::Linear(LinearHead::new("head", in_dim, classes, rng)?),
            HeadKind::Mlp { hidden } => Head::Mlp(MlpHead::new(in_dim, hidden, classes, rng)?),
        })
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Head::Linear(h) => h.forward(x),
            Head::Mlp(h) => h.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Head::Linear(h) => h.backward(grad),
            Head::Mlp(h) => h.backward(grad),
        }
    }

    pub fn cast<T: Real>(&self) -> Head<T> {
        match self {
            Head::Linear(h) => Head::Linear(h.cast()),
            Head::Mlp(h) => Head::Mlp(MlpHead {
                hidden: h.hidden.cast(),
                output: h.output.cast(),
                pre_activation: None,
            }),
        }
    }
}

impl<S: Real> HasParams<S> for Head<S> {
    fn params(&self) -> Vec<&Param<S>> {
        match self {
            Head::Linear(h) => h.params(),
            Head::Mlp(h) => {
                let mut v = h.hidden.params();
                v.extend(h.output.params());
                v
            }
        }
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        match self {
            Head::Linear(h) => h.params_mut(),
            Head::Mlp(h) => {
                let mut v = h.hidden.params_mut();
                v.extend(h.output.params_mut());
                v
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<S: Real>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `(1 - eps) * onehot(y) + eps / classes`.
pub fn smoothed_target(label: usize, classes: usize, eps: f64) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::InvalidArgument(format!(
            "target {label} out of range for {classes} classes"
        )));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "label smoothing must be in [0, 1), got {eps}"
        )));
    }
    let mut t = vec![eps / classes as f64; classes];
    t[label] += 1.0 - eps;
    Ok(t)
}

/// Batch-mean label-smoothed cross-entropy of `logits: (B, K)`. Returns the
/// loss and its gradient with respect to the logits.
pub fn smoothed_cross_entropy<S: Real>(
    logits: &Tensor<S>,
    targets: &[usize],
    eps: f64,
) -> Result<(f64, Tensor<S>)> {
    let &[b, k] = logits.shape() else {
        return Err(Error::shape(
            "cross_entropy",
            logits.shape(),
            &[targets.len(), 0],
        ));
    };
    if b != targets.len() {
        return Err(Error::shape(
            "cross_entropy",
            logits.shape(),
            &[targets.len(), k],
        ));
    }
    let inv_b = S::one() / S::of(b as f64);
    let mut loss = 0.0;
    let mut grad = vec![S::zero(); b * k];
    for ((row, &y), g) in logits.data().chunks(k).zip(targets).zip(grad.chunks_mut(k)) {
        let target = smoothed_target(y, k, eps)?;
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let shifted: Vec<S> = row.iter().map(|&v| v - max).collect();
        let log_z = shifted.iter().map(|v| v.exp()).sum::<S>().ln();
        let mut sample = S::zero();
        for i in 0..k {
            let log_p = shifted[i] - log_z;
            let ti = S::of(target[i]);
            sample -= ti * log_p;
            g[i] = (log_p.exp() - ti) * inv_b;
        }
        loss += sample.as_f64();
    }
    let loss = loss / b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, Tensor::new(&[b, k], grad)?))
}

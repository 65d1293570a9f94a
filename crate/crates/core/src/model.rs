//! Model configuration and the assembled classifiers.

use serde::{Deserialize, Serialize};

use crate::embedding::{patch_count, EmbeddingShape, PatchEmbedding, DEFAULT_LN_DELTA};
use crate::error::{Error, Result};
use crate::filterbank::{validate_kernel_sizes, SymmetricFilterBank, DEFAULT_NORM_EPS};
use crate::heads::{Head, HeadKind, LinearHead};
use crate::numerics::{HasParams, Param, Real, Rng, Tensor};

/// Hyperparameters that fix the architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: usize,
    pub length: usize,
    pub num_classes: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub symmetric: bool,
    pub norm_eps: f64,
    pub patch_len: usize,
    pub embed_dim: usize,
    pub ln_delta: f64,
    pub head: HeadKind,
    pub fuse_relu: bool,
    pub dropout: f64,
    pub share_embedding_across_channels: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            length: 128,
            num_classes: 4,
            kernel_sizes: vec![11, 21, 51, 71],
            filters_per_size: 2,
            symmetric: true,
            norm_eps: DEFAULT_NORM_EPS,
            patch_len: 8,
            embed_dim: 128,
            ln_delta: DEFAULT_LN_DELTA,
            head: HeadKind::Linear,
            fuse_relu: false,
            dropout: 0.0,
            share_embedding_across_channels: false,
        }
    }
}

impl ModelConfig {
    /// Small-footprint configuration used for the sleep-staging comparison:
    /// nine channels of 30 s at 100 Hz, five stages.
    pub fn isruc_small() -> Self {
        Self {
            channels: 9,
            length: 3000,
            num_classes: 5,
            kernel_sizes: vec![7, 15, 25],
            embed_dim: 26,
            ..Self::default()
        }
    }

    pub fn num_filters(&self) -> usize {
        self.kernel_sizes.len() * self.filters_per_size
    }

    pub fn patches(&self) -> usize {
        patch_count(self.length, self.patch_len).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.channels == 0 || self.length == 0 {
            return bad("channels and length must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        validate_kernel_sizes(&self.kernel_sizes, false)?;
        if self.filters_per_size == 0 {
            return bad("filters_per_size must be >= 1".into());
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k > 2 * self.length) {
            return bad(format!(
                "kernel size {k} exceeds twice the length {}",
                self.length
            ));
        }
        if !(self.norm_eps > 0.0) || !(self.ln_delta > 0.0) {
            return bad("norm_eps and ln_delta must be > 0".into());
        }
        if self.patch_len < 2 || self.patch_len % 2 != 0 {
            return bad(format!(
                "patch_len must be even and >= 2, got {}",
                self.patch_len
            ));
        }
        if self.length < self.patch_len {
            return bad(format!(
                "length {} is shorter than patch_len {}",
                self.length, self.patch_len
            ));
        }
        if self.embed_dim < 2 {
            return bad(format!("embed_dim must be >= 2, got {}", self.embed_dim));
        }
        if let HeadKind::Mlp { hidden: 0 } = self.head {
            return bad("mlp hidden size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.share_embedding_across_channels {
            return bad("share_embedding_across_channels is reserved and must be false".into());
        }
        Ok(())
    }
}

/// A model that maps `(B, C, T)` inputs to `(B, classes)` logits and can
/// back-propagate a logit gradient into its parameters.
pub trait Classifier<S: Real>: HasParams<S> {
    fn num_classes(&self) -> usize;

    /// Passing an rng selects training mode (stochastic layers active).
    fn forward(&mut self, x: &Tensor<S>, rng: Option<&mut Rng>) -> Result<Tensor<S>>;

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad_logits: &Tensor<S>) -> Result<Tensor<S>>;

    fn predict(&mut self, x: &Tensor<S>) -> Result<Vec<usize>> {
        let logits = self.forward(x, None)?;
        Ok(argmax_rows(&logits))
    }
}

/// Index of the largest entry per row; the first wins on ties.
pub fn argmax_rows<S: Real>(logits: &Tensor<S>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Filter bank, patch embedding, norm, pooling and a classification head.
#[derive(Clone, Debug)]
pub struct PrismModel<S> {
    pub config: ModelConfig,
    pub bank: SymmetricFilterBank<S>,
    pub embedding: PatchEmbedding<S>,
    pub head: Head<S>,
}

impl<S: Real> PrismModel<S> {
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let bank = SymmetricFilterBank::new(
            config.channels,
            &config.kernel_sizes,
            config.filters_per_size,
            config.symmetric,
            config.norm_eps,
            rng,
        )?;
        let embedding = PatchEmbedding::new(
            EmbeddingShape {
                channels: config.channels,
                filters: config.num_filters(),
                patch_len: config.patch_len,
                embed_dim: config.embed_dim,
            },
            config.ln_delta,
            config.fuse_relu,
            config.dropout,
            rng,
        )?;
        let head = Head::new(
            config.head,
            config.channels * config.embed_dim,
            config.num_classes,
            rng,
        )?;
        Ok(Self {
            config: config.clone(),
            bank,
            embedding,
            head,
        })
    }

    /// Pooled representation `(B, C, D)`.
    pub fn features(&mut self, x: &Tensor<S>, rng: Option<&mut Rng>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let h = self.bank.forward(x)?;
        Ok(self.embedding.forward(&h.values, true, rng)?.into_tensor())
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        match x.shape() {
            &[_, c, t] if c == self.config.channels && t == self.config.length => Ok(()),
            other => Err(Error::shape(
                "model_forward",
                other,
                &[0, self.config.channels, self.config.length],
            )),
        }
    }

    pub fn cast<T: Real>(&self) -> PrismModel<T> {
        PrismModel {
            config: self.config.clone(),
            bank: self.bank.cast(),
            embedding: self.embedding.cast(),
            head: self.head.cast(),
        }
    }
}

impl<S: Real> HasParams<S> for PrismModel<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut v = self.bank.params();
        v.extend(self.embedding.params());
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let mut v = self.bank.params_mut();
        v.extend(self.embedding.params_mut());
        v.extend(self.head.params_mut());
        v
    }
}

impl<S: Real> Classifier<S> for PrismModel<S> {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn forward(&mut self, x: &Tensor<S>, rng: Option<&mut Rng>) -> Result<Tensor<S>> {
        let pooled = self.features(x, rng)?;
        let b = pooled.shape()[0];
        let flat = pooled.reshape(&[b, self.config.channels * self.config.embed_dim])?;
        self.head.forward(&flat)
    }

    fn backward(&mut self, grad_logits: &Tensor<S>) -> Result<Tensor<S>> {
        let g_flat = self.head.backward(grad_logits)?;
        let b = g_flat.shape()[0];
        let g_pooled = g_flat.reshape(&[b, self.config.channels, self.config.embed_dim])?;
        let g_bank = self.embedding.backward(&g_pooled)?;
        self.bank.backward(&g_bank)
    }
}

/// Reference classifier: one linear layer on the raw flattened `(C * T)`
/// signal.
#[derive(Clone, Debug)]
pub struct FlatLinear<S> {
    channels: usize,
    length: usize,
    head: LinearHead<S>,
}

impl<S: Real> FlatLinear<S> {
    pub fn new(channels: usize, length: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            channels,
            length,
            head: LinearHead::new("flat", channels * length, classes, rng)?,
        })
    }
}

impl<S: Real> HasParams<S> for FlatLinear<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.head.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.head.params_mut()
    }
}

impl<S: Real> Classifier<S> for FlatLinear<S> {
    fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    fn forward(&mut self, x: &Tensor<S>, _rng: Option<&mut Rng>) -> Result<Tensor<S>> {
        let b = x.shape()[0];
        if x.shape() != [b, self.channels, self.length] {
            return Err(Error::shape(
                "flat_linear",
                x.shape(),
                &[b, self.channels, self.length],
            ));
        }
        self.head
            .forward(&x.clone().reshape(&[b, self.channels * self.length])?)
    }

    fn backward(&mut self, grad_logits: &Tensor<S>) -> Result<Tensor<S>> {
        let g = self.head.backward(grad_logits)?;
        let b = g.shape()[0];
        g.reshape(&[b, self.channels, self.length])
    }
}

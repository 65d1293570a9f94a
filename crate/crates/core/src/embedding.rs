//! Resolution-informed patch embedding, per-channel LayerNorm and pooling.
//!
//! Per channel, the `(F, T)` filter-bank output is cut into overlapping
//! patches of length `p` with stride `p / 2`. A depthwise kernel of length `p`
//! per resolution band reduces each patch to one scalar per band, and a
//! pointwise projection fuses the `F` band scalars into a `D`-dimensional
//! token. Tokens are LayerNorm-ed and optionally mean-pooled over patches.
//!
//! Depthwise, pointwise and norm parameters are owned per input channel;
//! nothing mixes information across input channels.

use crate::error::{Error, Result};
use crate::numerics::{HasParams, Param, Real, Rng, Tensor};

pub const DEFAULT_LN_DELTA: f64 = 1e-5;

/// `floor((T - p) / (p / 2)) + 1`; a trailing partial patch is dropped.
pub fn patch_count(t: usize, p: usize) -> Result<usize> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "patch length must be even and >= 2, got {p}"
        )));
    }
    if t < p {
        return Err(Error::InvalidArgument(format!(
            "sequence length {t} is shorter than the patch length {p}"
        )));
    }
    Ok((t - p) / (p / 2) + 1)
}

fn depthwise_into<S: Real>(h: &[S], t: usize, kernels: &[&[S]], p: usize, l_p: usize, z: &mut [S]) {
    let f_count = kernels.len();
    let stride = p / 2;
    for (f, v) in kernels.iter().enumerate() {
        let band = &h[f * t..(f + 1) * t];
        for l in 0..l_p {
            let window = &band[l * stride..l * stride + p];
            let mut acc = S::zero();
            for (&vj, &hj) in v.iter().zip(window) {
                acc += vj * hj;
            }
            z[l * f_count + f] = acc;
        }
    }
}

/// `h: (F, T)`, `v: (F, p)` to `z: (L_p, F)` with
/// `z[l, f] = sum_j v[f, j] * h[f, l * p / 2 + j]`.
pub fn depthwise_patch_conv<S: Real>(h: &Tensor<S>, v: &Tensor<S>) -> Result<Tensor<S>> {
    let (&[f_count, t], &[f2, p]) = (h.shape(), v.shape()) else {
        return Err(Error::shape("depthwise_patch_conv", h.shape(), v.shape()));
    };
    if f_count != f2 {
        return Err(Error::shape("depthwise_patch_conv", h.shape(), v.shape()));
    }
    let l_p = patch_count(t, p)?;
    let kernels: Vec<&[S]> = v.data().chunks(p).collect();
    let mut z = vec![S::zero(); l_p * f_count];
    depthwise_into(h.data(), t, &kernels, p, l_p, &mut z);
    Tensor::new(&[l_p, f_count], z)
}

fn pointwise_into<S: Real>(z: &[S], f_count: usize, proj: &[&[S]], bias: &[S], out: &mut [S]) {
    let d = bias.len();
    for (zl, xl) in z.chunks(f_count).zip(out.chunks_mut(d)) {
        xl.copy_from_slice(bias);
        for (f, &zf) in zl.iter().enumerate() {
            for (x, &pf) in xl.iter_mut().zip(proj[f]) {
                *x += pf * zf;
            }
        }
    }
}

/// `z: (L_p, F)`, `p: (F, D)`, `bias: (D)` to `X: (L_p, D)` with
/// `X[l] = bias + sum_f p[f] * z[l, f]`.
pub fn pointwise_fuse<S: Real>(
    z: &Tensor<S>,
    proj: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (&[l_p, f_count], &[f2, d]) = (z.shape(), proj.shape()) else {
        return Err(Error::shape("pointwise_fuse", z.shape(), proj.shape()));
    };
    if f_count != f2 || bias.len() != d {
        return Err(Error::shape("pointwise_fuse", proj.shape(), bias.shape()));
    }
    let rows: Vec<&[S]> = proj.data().chunks(d).collect();
    let mut out = vec![S::zero(); l_p * d];
    pointwise_into(z.data(), f_count, &rows, bias.data(), &mut out);
    Tensor::new(&[l_p, d], out)
}

/// Normalises one token in place and records `xhat` and `1/sqrt(var+delta)`.
fn layer_norm_token<S: Real>(
    x: &[S],
    gain: &[S],
    bias: &[S],
    delta: S,
    xhat: &mut [S],
    out: &mut [S],
) -> S {
    let d = S::of(x.len() as f64);
    let mut sum = S::zero();
    for &v in x {
        sum += v;
    }
    let mean = sum / d;
    let mut sq = S::zero();
    for &v in x {
        let c = v - mean;
        sq += c * c;
    }
    let var = sq / d;
    let inv_std = S::one() / (var + delta).sqrt();
    for i in 0..x.len() {
        let n = (x[i] - mean) * inv_std;
        xhat[i] = n;
        out[i] = n * gain[i] + bias[i];
    }
    inv_std
}

/// Per-token standardisation over the last axis followed by `gain`/`bias`.
pub fn layer_norm<S: Real>(
    x: &Tensor<S>,
    gain: &Tensor<S>,
    bias: &Tensor<S>,
    delta: f64,
) -> Result<Tensor<S>> {
    let &[_, d] = x.shape() else {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    };
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    }
    let mut out = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); d];
    for (xl, ol) in x.data().chunks(d).zip(out.chunks_mut(d)) {
        layer_norm_token(xl, gain.data(), bias.data(), S::of(delta), &mut xhat, ol);
    }
    Tensor::new(x.shape(), out)
}

fn mean_pool_into<S: Real>(x: &[S], d: usize, out: &mut [S]) {
    let l_p = x.len() / d;
    out.iter_mut().for_each(|o| *o = S::zero());
    for xl in x.chunks(d) {
        for (o, &v) in out.iter_mut().zip(xl) {
            *o += v;
        }
    }
    let n = S::of(l_p as f64);
    for o in out.iter_mut() {
        *o = *o / n;
    }
}

/// Mean over the patch axis of `(L_p, D)`.
pub fn mean_pool<S: Real>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let &[l_p, d] = x.shape() else {
        return Err(Error::shape("mean_pool", x.shape(), &[]));
    };
    if l_p == 0 {
        return Err(Error::Empty("mean_pool over zero patches".into()));
    }
    let mut out = vec![S::zero(); d];
    mean_pool_into(x.data(), d, &mut out);
    Tensor::new(&[d], out)
}

/// Per-channel affine LayerNorm parameters.
#[derive(Clone, Debug)]
pub struct ChannelLayerNorm<S> {
    pub delta: S,
    gains: Vec<Param<S>>,
    biases: Vec<Param<S>>,
}

impl<S: Real> ChannelLayerNorm<S> {
    pub fn new(channels: usize, dim: usize, delta: f64) -> Self {
        Self {
            delta: S::of(delta),
            gains: (0..channels)
                .map(|c| Param::new(format!("norm.ch{c}.gain"), Tensor::full(&[dim], S::one())))
                .collect(),
            biases: (0..channels)
                .map(|c| Param::new(format!("norm.ch{c}.bias"), Tensor::zeros(&[dim])))
                .collect(),
        }
    }

    pub fn gain(&self, channel: usize) -> &Param<S> {
        &self.gains[channel]
    }

    pub fn bias(&self, channel: usize) -> &Param<S> {
        &self.biases[channel]
    }
}

#[derive(Clone, Debug)]
pub enum TokenOutput<S> {
    /// `(B, C, D)`.
    Pooled(Tensor<S>),
    /// `(B, C, L_p, D)`.
    Unpooled(Tensor<S>),
}

impl<S: Real> TokenOutput<S> {
    pub fn tensor(&self) -> &Tensor<S> {
        match self {
            TokenOutput::Pooled(t) | TokenOutput::Unpooled(t) => t,
        }
    }

    pub fn into_tensor(self) -> Tensor<S> {
        match self {
            TokenOutput::Pooled(t) | TokenOutput::Unpooled(t) => t,
        }
    }
}

#[derive(Clone, Debug)]
struct EmbedCache<S> {
    /// `(B, C, F, T)`.
    bank_out: Tensor<S>,
    /// `(B, C, L_p, F)`.
    z: Vec<S>,
    /// Fused tokens before activation, `(B, C, L_p, D)`.
    fused: Vec<S>,
    /// Dropout scale per fused element (0 or 1/(1-rate)); empty when inactive.
    dropout_mask: Vec<S>,
    xhat: Vec<S>,
    inv_std: Vec<S>,
    pooled: bool,
    batch: usize,
    length: usize,
}

#[derive(Clone, Debug)]
pub struct PatchEmbedding<S> {
    channels: usize,
    filters: usize,
    patch_len: usize,
    embed_dim: usize,
    fuse_relu: bool,
    dropout: f64,
    /// Ordered by channel then band.
    depthwise: Vec<Param<S>>,
    pointwise: Vec<Param<S>>,
    biases: Vec<Param<S>>,
    pub norm: ChannelLayerNorm<S>,
    cache: Option<EmbedCache<S>>,
}

#[derive(Clone, Copy, Debug)]
pub struct EmbeddingShape {
    pub channels: usize,
    pub filters: usize,
    pub patch_len: usize,
    pub embed_dim: usize,
}

impl<S: Real> PatchEmbedding<S> {
    pub fn new(
        shape: EmbeddingShape,
        ln_delta: f64,
        fuse_relu: bool,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let EmbeddingShape {
            channels,
            filters,
            patch_len,
            embed_dim,
        } = shape;
        if patch_len < 2 || patch_len % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "patch length must be even and >= 2, got {patch_len}"
            )));
        }
        if embed_dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "embed_dim must be >= 2, got {embed_dim}"
            )));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0, 1), got {dropout}"
            )));
        }
        if !(ln_delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ln_delta must be > 0, got {ln_delta}"
            )));
        }
        let dw_bound = 1.0 / (patch_len as f64).sqrt();
        let pw_bound = 1.0 / (filters as f64).sqrt();
        let mut depthwise = Vec::with_capacity(channels * filters);
        let mut pointwise = Vec::with_capacity(channels * filters);
        let mut biases = Vec::with_capacity(channels);
        for c in 0..channels {
            for f in 0..filters {
                depthwise.push(Param::new(
                    format!("embedding.ch{c}.depthwise.f{f}"),
                    rng.uniform(-dw_bound, dw_bound, &[patch_len])?,
                ));
            }
            for f in 0..filters {
                pointwise.push(Param::new(
                    format!("embedding.ch{c}.pointwise.f{f}"),
                    rng.uniform(-pw_bound, pw_bound, &[embed_dim])?,
                ));
            }
            biases.push(Param::new(
                format!("embedding.ch{c}.bias"),
                Tensor::zeros(&[embed_dim]),
            ));
        }
        Ok(Self {
            channels,
            filters,
            patch_len,
            embed_dim,
            fuse_relu,
            dropout,
            depthwise,
            pointwise,
            biases,
            norm: ChannelLayerNorm::new(channels, embed_dim, ln_delta),
            cache: None,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn depthwise(&self, channel: usize, band: usize) -> &Param<S> {
        &self.depthwise[channel * self.filters + band]
    }

    pub fn pointwise(&self, channel: usize, band: usize) -> &Param<S> {
        &self.pointwise[channel * self.filters + band]
    }

    pub fn bias(&self, channel: usize) -> &Param<S> {
        &self.biases[channel]
    }

    /// `bank_out: (B, C, F, T)`. Passing an rng enables dropout (training
    /// mode); without one the layer is deterministic.
    pub fn forward(
        &mut self,
        bank_out: &Tensor<S>,
        pooled: bool,
        rng: Option<&mut Rng>,
    ) -> Result<TokenOutput<S>> {
        let &[b, c, f_count, t] = bank_out.shape() else {
            return Err(Error::shape(
                "embed_forward",
                bank_out.shape(),
                &[0, self.channels, self.filters, 0],
            ));
        };
        if c != self.channels || f_count != self.filters {
            return Err(Error::shape(
                "embed_forward",
                bank_out.shape(),
                &[b, self.channels, self.filters, t],
            ));
        }
        let p = self.patch_len;
        let d = self.embed_dim;
        let l_p = patch_count(t, p)?;
        let hd = bank_out.data();

        let mut z = vec![S::zero(); b * c * l_p * f_count];
        let mut fused = vec![S::zero(); b * c * l_p * d];
        for bi in 0..b {
            for ch in 0..c {
                let slab = (bi * c + ch) * f_count * t;
                let kernels: Vec<&[S]> = (0..f_count)
                    .map(|f| self.depthwise(ch, f).value.data())
                    .collect();
                let zs = &mut z[(bi * c + ch) * l_p * f_count..(bi * c + ch + 1) * l_p * f_count];
                depthwise_into(&hd[slab..slab + f_count * t], t, &kernels, p, l_p, zs);
                let proj: Vec<&[S]> = (0..f_count)
                    .map(|f| self.pointwise(ch, f).value.data())
                    .collect();
                let xs = &mut fused[(bi * c + ch) * l_p * d..(bi * c + ch + 1) * l_p * d];
                pointwise_into(zs, f_count, &proj, self.biases[ch].value.data(), xs);
            }
        }

        let mut act = fused.clone();
        if self.fuse_relu {
            act.iter_mut().for_each(|v| *v = v.max(S::zero()));
        }
        let mut dropout_mask = Vec::new();
        if let (Some(rng), true) = (rng, self.dropout > 0.0) {
            let keep = S::of(1.0 / (1.0 - self.dropout));
            dropout_mask = (0..act.len())
                .map(|_| {
                    if rng.uniform_f64(0.0, 1.0) < self.dropout {
                        S::zero()
                    } else {
                        keep
                    }
                })
                .collect();
            act.iter_mut()
                .zip(&dropout_mask)
                .for_each(|(v, &m)| *v *= m);
        }

        let mut normed = vec![S::zero(); act.len()];
        let mut xhat = vec![S::zero(); act.len()];
        let mut inv_std = vec![S::zero(); b * c * l_p];
        for bi in 0..b {
            for ch in 0..c {
                let gain = self.norm.gains[ch].value.data();
                let beta = self.norm.biases[ch].value.data();
                for l in 0..l_p {
                    let tok = ((bi * c + ch) * l_p + l) * d;
                    inv_std[(bi * c + ch) * l_p + l] = layer_norm_token(
                        &act[tok..tok + d],
                        gain,
                        beta,
                        self.norm.delta,
                        &mut xhat[tok..tok + d],
                        &mut normed[tok..tok + d],
                    );
                }
            }
        }

        let out = if pooled {
            let mut r = vec![S::zero(); b * c * d];
            for (tokens, o) in normed.chunks(l_p * d).zip(r.chunks_mut(d)) {
                mean_pool_into(tokens, d, o);
            }
            TokenOutput::Pooled(Tensor::new(&[b, c, d], r)?)
        } else {
            TokenOutput::Unpooled(Tensor::new(&[b, c, l_p, d], normed)?)
        };
        self.cache = Some(EmbedCache {
            bank_out: bank_out.clone(),
            z,
            fused,
            dropout_mask,
            xhat,
            inv_std,
            pooled,
            batch: b,
            length: t,
        });
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the gradient with respect to
    /// the filter-bank output.
    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("embedding"))?;
        let (b, c, f_count, t) = (cache.batch, self.channels, self.filters, cache.length);
        let (p, d) = (self.patch_len, self.embed_dim);
        let l_p = patch_count(t, p)?;
        let expected: Vec<usize> = if cache.pooled {
            vec![b, c, d]
        } else {
            vec![b, c, l_p, d]
        };
        if grad.shape() != expected.as_slice() {
            return Err(Error::shape("embed_backward", grad.shape(), &expected));
        }
        let gd = grad.data();

        // gradient wrt normalised tokens
        let mut g_norm = vec![S::zero(); b * c * l_p * d];
        if cache.pooled {
            let inv_l = S::one() / S::of(l_p as f64);
            for (gr, gt) in gd.chunks(d).zip(g_norm.chunks_mut(l_p * d)) {
                for tok in gt.chunks_mut(d) {
                    for (o, &g) in tok.iter_mut().zip(gr) {
                        *o = g * inv_l;
                    }
                }
            }
        } else {
            g_norm.copy_from_slice(gd);
        }

        // LayerNorm
        let mut g_act = vec![S::zero(); g_norm.len()];
        let inv_d = S::one() / S::of(d as f64);
        for bi in 0..b {
            for ch in 0..c {
                let gain = self.norm.gains[ch].value.data().to_vec();
                for l in 0..l_p {
                    let tok = ((bi * c + ch) * l_p + l) * d;
                    let gy = &g_norm[tok..tok + d];
                    let xh = &cache.xhat[tok..tok + d];
                    {
                        let gg = self.norm.gains[ch].grad.data_mut();
                        for i in 0..d {
                            gg[i] += gy[i] * xh[i];
                        }
                    }
                    {
                        let gb = self.norm.biases[ch].grad.data_mut();
                        for i in 0..d {
                            gb[i] += gy[i];
                        }
                    }
                    let mut mean_g = S::zero();
                    let mut mean_gx = S::zero();
                    for i in 0..d {
                        let gx = gy[i] * gain[i];
                        mean_g += gx;
                        mean_gx += gx * xh[i];
                    }
                    mean_g *= inv_d;
                    mean_gx *= inv_d;
                    let r = cache.inv_std[(bi * c + ch) * l_p + l];
                    for i in 0..d {
                        let gx = gy[i] * gain[i];
                        g_act[tok + i] = r * (gx - mean_g - xh[i] * mean_gx);
                    }
                }
            }
        }

        // dropout and activation
        if !cache.dropout_mask.is_empty() {
            g_act
                .iter_mut()
                .zip(&cache.dropout_mask)
                .for_each(|(g, &m)| *g *= m);
        }
        if self.fuse_relu {
            g_act.iter_mut().zip(&cache.fused).for_each(|(g, &x)| {
                if x <= S::zero() {
                    *g = S::zero()
                }
            });
        }

        // pointwise fusion and depthwise patch convolution
        let hd = cache.bank_out.data();
        let mut g_bank = vec![S::zero(); b * c * f_count * t];
        let stride = p / 2;
        for bi in 0..b {
            for ch in 0..c {
                let blk = bi * c + ch;
                let mut g_z = vec![S::zero(); l_p * f_count];
                for l in 0..l_p {
                    let gx = &g_act[(blk * l_p + l) * d..(blk * l_p + l + 1) * d];
                    {
                        let gb = self.biases[ch].grad.data_mut();
                        for i in 0..d {
                            gb[i] += gx[i];
                        }
                    }
                    for f in 0..f_count {
                        let zf = cache.z[(blk * l_p + l) * f_count + f];
                        let pf_idx = ch * f_count + f;
                        let mut acc = S::zero();
                        {
                            let pv = self.pointwise[pf_idx].value.data();
                            for i in 0..d {
                                acc += gx[i] * pv[i];
                            }
                        }
                        g_z[l * f_count + f] = acc;
                        let pg = self.pointwise[pf_idx].grad.data_mut();
                        for i in 0..d {
                            pg[i] += gx[i] * zf;
                        }
                    }
                }
                for f in 0..f_count {
                    let idx = ch * f_count + f;
                    let band = (blk * f_count + f) * t;
                    let v = self.depthwise[idx].value.data().to_vec();
                    let vg = self.depthwise[idx].grad.data_mut();
                    for l in 0..l_p {
                        let gz = g_z[l * f_count + f];
                        let start = band + l * stride;
                        for j in 0..p {
                            vg[j] += gz * hd[start + j];
                            g_bank[start + j] += gz * v[j];
                        }
                    }
                }
            }
        }
        Tensor::new(&[b, c, f_count, t], g_bank)
    }

    pub fn cast<T: Real>(&self) -> PatchEmbedding<T> {
        PatchEmbedding {
            channels: self.channels,
            filters: self.filters,
            patch_len: self.patch_len,
            embed_dim: self.embed_dim,
            fuse_relu: self.fuse_relu,
            dropout: self.dropout,
            depthwise: self.depthwise.iter().map(|p| p.cast()).collect(),
            pointwise: self.pointwise.iter().map(|p| p.cast()).collect(),
            biases: self.biases.iter().map(|p| p.cast()).collect(),
            norm: ChannelLayerNorm {
                delta: T::of(self.norm.delta.as_f64()),
                gains: self.norm.gains.iter().map(|p| p.cast()).collect(),
                biases: self.norm.biases.iter().map(|p| p.cast()).collect(),
            },
            cache: None,
        }
    }
}

impl<S: Real> HasParams<S> for PatchEmbedding<S> {
    fn params(&self) -> Vec<&Param<S>> {
        let mut out = Vec::new();
        for c in 0..self.channels {
            let r = c * self.filters..(c + 1) * self.filters;
            out.extend(self.depthwise[r.clone()].iter());
            out.extend(self.pointwise[r].iter());
            out.push(&self.biases[c]);
        }
        for c in 0..self.channels {
            out.push(&self.norm.gains[c]);
            out.push(&self.norm.biases[c]);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        let f = self.filters;
        let mut dw = self.depthwise.iter_mut();
        let mut pw = self.pointwise.iter_mut();
        let mut out = Vec::new();
        for bias in self.biases.iter_mut() {
            out.extend(dw.by_ref().take(f));
            out.extend(pw.by_ref().take(f));
            out.push(bias);
        }
        for (g, b) in self.norm.gains.iter_mut().zip(self.norm.biases.iter_mut()) {
            out.push(g);
            out.push(b);
        }
        out
    }
}

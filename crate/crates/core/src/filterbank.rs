//! Multi-resolution banks of learnable FIR filters.
//!
//! Each input channel owns `n_f` filters for every kernel size. In symmetric
//! mode a filter of odd length `k` stores only its `(k + 1) / 2` half-weights,
//! center tap first, and is mirrored on every forward pass, so the expanded
//! kernel is palindromic by construction. Every kernel is L2-normalised
//! (`w / (|w| + eps)`) before use and gradients flow through that map.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HasParams, Param, Real, Rng, Tensor};

pub const DEFAULT_NORM_EPS: f64 = 1e-8;

/// Mirror center-first half-weights into a palindromic kernel of length `k`.
pub fn expand_symmetric<S: Real>(half: &[S], k: usize) -> Result<Vec<S>> {
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "symmetric kernels need odd length, got {k}"
        )));
    }
    if half.len() != (k + 1) / 2 {
        return Err(Error::InvalidArgument(format!(
            "kernel of length {k} needs {} half-weights, got {}",
            (k + 1) / 2,
            half.len()
        )));
    }
    let m = (k - 1) / 2;
    let mut out = vec![S::zero(); k];
    for (j, &w) in half.iter().enumerate() {
        out[m + j] = w;
        out[m - j] = w;
    }
    Ok(out)
}

/// Euclidean norm, accumulated in index order.
pub fn l2_norm<S: Real>(w: &[S]) -> S {
    let mut acc = S::zero();
    for &v in w {
        acc += v * v;
    }
    acc.sqrt()
}

/// `w / (|w|_2 + epsilon)`. A zero vector maps to zero.
pub fn normalize_l2<S: Real>(w: &[S], epsilon: S) -> Vec<S> {
    let denom = l2_norm(w) + epsilon;
    w.iter().map(|&v| v / denom).collect()
}

/// Pull a gradient with respect to `normalize_l2(w)` back to `w`.
fn normalize_l2_backward<S: Real>(w: &[S], norm: S, epsilon: S, grad_norm: &[S], out: &mut [S]) {
    let denom = norm + epsilon;
    if norm > S::zero() {
        let mut dot = S::zero();
        for (&wi, &gi) in w.iter().zip(grad_norm) {
            dot += wi * gi;
        }
        let coef = dot / (norm * denom * denom);
        for ((o, &wi), &gi) in out.iter_mut().zip(w).zip(grad_norm) {
            *o = gi / denom - wi * coef;
        }
    } else {
        for (o, &gi) in out.iter_mut().zip(grad_norm) {
            *o = gi / denom;
        }
    }
}

/// Centered cross-correlation with zero padding: output has the input length
/// and `out[t] = sum_j w[m + j] * x[t + j]` for `j` in `-m..=m`.
pub fn conv_same<S: Real>(x: &[S], w: &[S]) -> Result<Vec<S>> {
    if w.len() % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv_same needs an odd kernel, got length {}",
            w.len()
        )));
    }
    let mut out = vec![S::zero(); x.len()];
    conv_same_into(x, w, &mut out);
    Ok(out)
}

fn conv_same_into<S: Real>(x: &[S], w: &[S], out: &mut [S]) {
    let t_len = x.len() as isize;
    let m = (w.len() / 2) as isize;
    for (t, o) in out.iter_mut().enumerate() {
        let t = t as isize;
        // taps whose input index t + j falls inside the signal
        let j_lo = (-m).max(-t);
        let j_hi = m.min(t_len - 1 - t);
        let mut acc = S::zero();
        for j in j_lo..=j_hi {
            acc += w[(j + m) as usize] * x[(t + j) as usize];
        }
        *o = acc;
    }
}

/// Adjoint of [`conv_same_into`]: accumulates into `grad_x` and `grad_w`.
fn conv_same_backward<S: Real>(
    x: &[S],
    w: &[S],
    grad_out: &[S],
    grad_x: &mut [S],
    grad_w: &mut [S],
) {
    let t_len = x.len() as isize;
    let m = (w.len() / 2) as isize;
    for (t, &g) in grad_out.iter().enumerate() {
        if g == S::zero() {
            continue;
        }
        let t = t as isize;
        let j_lo = (-m).max(-t);
        let j_hi = m.min(t_len - 1 - t);
        for j in j_lo..=j_hi {
            let wi = (j + m) as usize;
            let xi = (t + j) as usize;
            grad_w[wi] += g * x[xi];
            grad_x[xi] += g * w[wi];
        }
    }
}

/// DFT of a kernel zero-padded to `n_points`.
#[derive(Clone, Debug)]
pub struct FrequencyResponse {
    pub spectrum: Vec<Complex64>,
    pub magnitude: Vec<f64>,
}

pub fn frequency_response(w: &[f64], n_points: usize) -> Result<FrequencyResponse> {
    if w.is_empty() || n_points < w.len() {
        return Err(Error::InvalidArgument(format!(
            "frequency response needs n_points >= kernel length, got {n_points} < {}",
            w.len()
        )));
    }
    let mut buf: Vec<Complex64> = (0..n_points)
        .map(|i| Complex64::new(w.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::new()
        .plan_fft_forward(n_points)
        .process(&mut buf);
    let magnitude = buf.iter().map(|c| c.norm()).collect();
    Ok(FrequencyResponse {
        spectrum: buf,
        magnitude,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterInfo {
    pub kernel_size: usize,
    pub slot: usize,
}

#[derive(Clone, Debug)]
pub struct BankOutput<S> {
    /// `(B, C, F, T)`.
    pub values: Tensor<S>,
    pub filters: Vec<FilterInfo>,
}

#[derive(Clone, Debug)]
struct BankCache<S> {
    input: Tensor<S>,
    /// Expanded, unnormalised kernels per (channel, filter).
    raw: Vec<Vec<S>>,
    norms: Vec<S>,
    kernels: Vec<Vec<S>>,
}

#[derive(Clone, Debug)]
pub struct SymmetricFilterBank<S> {
    channels: usize,
    kernel_sizes: Vec<usize>,
    filters_per_size: usize,
    symmetric: bool,
    epsilon: S,
    /// Ordered by channel, then kernel size, then slot.
    weights: Vec<Param<S>>,
    cache: Option<BankCache<S>>,
}

/// Number of free reals stored per filter of length `k`.
pub fn stored_len(k: usize, symmetric: bool) -> usize {
    if symmetric {
        (k + 1) / 2
    } else {
        k
    }
}

impl<S: Real> SymmetricFilterBank<S> {
    pub fn new(
        channels: usize,
        kernel_sizes: &[usize],
        filters_per_size: usize,
        symmetric: bool,
        epsilon: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        validate_kernel_sizes(kernel_sizes, false)?;
        if channels == 0 || filters_per_size == 0 {
            return Err(Error::InvalidConfig(
                "filter bank needs at least one channel and one filter per size".into(),
            ));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "norm epsilon must be > 0, got {epsilon}"
            )));
        }
        let mut weights = Vec::with_capacity(channels * kernel_sizes.len() * filters_per_size);
        for ch in 0..channels {
            for &k in kernel_sizes {
                let n = stored_len(k, symmetric);
                let bound = 1.0 / (n as f64).sqrt();
                for slot in 0..filters_per_size {
                    let value = rng.uniform(-bound, bound, &[n])?;
                    weights.push(Param::new(format!("filterbank.ch{ch}.k{k}.f{slot}"), value));
                }
            }
        }
        Ok(Self {
            channels,
            kernel_sizes: kernel_sizes.to_vec(),
            filters_per_size,
            symmetric,
            epsilon: S::of(epsilon),
            weights,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel_sizes(&self) -> &[usize] {
        &self.kernel_sizes
    }

    pub fn filters_per_size(&self) -> usize {
        self.filters_per_size
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Total filters per channel, `n_k * n_f`.
    pub fn num_filters(&self) -> usize {
        self.kernel_sizes.len() * self.filters_per_size
    }

    pub fn filter_info(&self) -> Vec<FilterInfo> {
        self.kernel_sizes
            .iter()
            .flat_map(|&k| {
                (0..self.filters_per_size).map(move |slot| FilterInfo {
                    kernel_size: k,
                    slot,
                })
            })
            .collect()
    }

    fn kernel_size_of(&self, filter: usize) -> usize {
        self.kernel_sizes[filter / self.filters_per_size]
    }

    /// Expanded kernel before normalisation.
    pub fn raw_kernel(&self, channel: usize, filter: usize) -> Vec<S> {
        let p = &self.weights[channel * self.num_filters() + filter];
        if self.symmetric {
            expand_symmetric(p.value.data(), self.kernel_size_of(filter))
                .expect("stored lengths are validated at construction")
        } else {
            p.value.data().to_vec()
        }
    }

    /// Kernel as applied in the forward pass.
    pub fn kernel(&self, channel: usize, filter: usize) -> Vec<S> {
        normalize_l2(&self.raw_kernel(channel, filter), self.epsilon)
    }

    /// All effective kernels, ordered by channel then filter.
    pub fn kernels(&self) -> Vec<Vec<S>> {
        (0..self.channels)
            .flat_map(|c| (0..self.num_filters()).map(move |f| (c, f)))
            .map(|(c, f)| self.kernel(c, f))
            .collect()
    }

    /// `x: (B, C, T)` to `(B, C, F, T)`.
    pub fn forward(&mut self, x: &Tensor<S>) -> Result<BankOutput<S>> {
        let &[b, c, t] = x.shape() else {
            return Err(Error::shape(
                "bank_forward",
                x.shape(),
                &[0, self.channels, 0],
            ));
        };
        if c != self.channels {
            return Err(Error::shape(
                "bank_forward",
                x.shape(),
                &[b, self.channels, t],
            ));
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k > 2 * t) {
            return Err(Error::InvalidArgument(format!(
                "kernel size {k} exceeds twice the signal length {t}"
            )));
        }
        let f_count = self.num_filters();
        let mut raw = Vec::with_capacity(c * f_count);
        let mut norms = Vec::with_capacity(c * f_count);
        let mut kernels: Vec<Vec<S>> = Vec::with_capacity(c * f_count);
        for ch in 0..c {
            for f in 0..f_count {
                let w = self.raw_kernel(ch, f);
                let n = l2_norm(&w);
                let denom = n + self.epsilon;
                kernels.push(w.iter().map(|&v| v / denom).collect());
                norms.push(n);
                raw.push(w);
            }
        }
        let mut out = vec![S::zero(); b * c * f_count * t];
        let xd = x.data();
        for bi in 0..b {
            for ch in 0..c {
                let signal = &xd[(bi * c + ch) * t..(bi * c + ch + 1) * t];
                for f in 0..f_count {
                    let base = ((bi * c + ch) * f_count + f) * t;
                    conv_same_into(signal, &kernels[ch * f_count + f], &mut out[base..base + t]);
                }
            }
        }
        self.cache = Some(BankCache {
            input: x.clone(),
            raw,
            norms,
            kernels,
        });
        Ok(BankOutput {
            values: Tensor::new(&[b, c, f_count, t], out)?,
            filters: self.filter_info(),
        })
    }

    /// Accumulates weight gradients and returns the gradient with respect to
    /// the input signal.
    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("filterbank"))?;
        let &[b, c, t] = cache.input.shape() else {
            unreachable!()
        };
        let f_count = self.num_filters();
        if grad_out.shape() != [b, c, f_count, t] {
            return Err(Error::shape(
                "bank_backward",
                grad_out.shape(),
                &[b, c, f_count, t],
            ));
        }
        let xd = cache.input.data();
        let gd = grad_out.data();
        let mut grad_x = vec![S::zero(); b * c * t];
        let mut grad_kernels: Vec<Vec<S>> = cache
            .kernels
            .iter()
            .map(|k| vec![S::zero(); k.len()])
            .collect();
        for bi in 0..b {
            for ch in 0..c {
                let row = (bi * c + ch) * t;
                let signal = &xd[row..row + t];
                for f in 0..f_count {
                    let idx = ch * f_count + f;
                    let base = ((bi * c + ch) * f_count + f) * t;
                    conv_same_backward(
                        signal,
                        &cache.kernels[idx],
                        &gd[base..base + t],
                        &mut grad_x[row..row + t],
                        &mut grad_kernels[idx],
                    );
                }
            }
        }
        for (idx, gk) in grad_kernels.iter().enumerate() {
            let mut g_raw = vec![S::zero(); gk.len()];
            normalize_l2_backward(
                &cache.raw[idx],
                cache.norms[idx],
                self.epsilon,
                gk,
                &mut g_raw,
            );
            let param = &mut self.weights[idx];
            let gp = param.grad.data_mut();
            if self.symmetric {
                let m = (g_raw.len() - 1) / 2;
                gp[0] += g_raw[m];
                for j in 1..=m {
                    gp[j] += g_raw[m + j] + g_raw[m - j];
                }
            } else {
                for (o, &g) in gp.iter_mut().zip(&g_raw) {
                    *o += g;
                }
            }
        }
        Tensor::new(&[b, c, t], grad_x)
    }

    pub fn cast<T: Real>(&self) -> SymmetricFilterBank<T> {
        SymmetricFilterBank {
            channels: self.channels,
            kernel_sizes: self.kernel_sizes.clone(),
            filters_per_size: self.filters_per_size,
            symmetric: self.symmetric,
            epsilon: T::of(self.epsilon.as_f64()),
            weights: self.weights.iter().map(|p| p.cast()).collect(),
            cache: None,
        }
    }
}

impl<S: Real> HasParams<S> for SymmetricFilterBank<S> {
    fn params(&self) -> Vec<&Param<S>> {
        self.weights.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.weights.iter_mut().collect()
    }
}

pub(crate) fn validate_kernel_sizes(sizes: &[usize], allow_unit: bool) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one kernel size is required".into(),
        ));
    }
    let min = if allow_unit { 1 } else { 3 };
    for &k in sizes {
        if k % 2 == 0 || k < min {
            return Err(Error::InvalidConfig(format!(
                "kernel sizes must be odd and >= {min}, got {k}"
            )));
        }
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "kernel sizes must be strictly increasing, got {sizes:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_examples() {
        assert_eq!(expand_symmetric(&[1.0f64], 1).unwrap(), vec![1.0]);
        assert_eq!(
            expand_symmetric(&[2.0f64, 1.0], 3).unwrap(),
            vec![1.0, 2.0, 1.0]
        );
        assert_eq!(
            expand_symmetric(&[5.0f64, 3.0, 1.0], 5).unwrap(),
            vec![1.0, 3.0, 5.0, 3.0, 1.0]
        );
        assert!(expand_symmetric(&[1.0f64, 2.0], 4).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_l2(&[3.0f64, 4.0], 1e-300);
        assert!((n[0] - 0.6).abs() < 1e-15 && (n[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize_l2(&[0.0f64; 3], 1e-8), vec![0.0; 3]);
    }

    #[test]
    fn normalized_energy_bound() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let w: Tensor<f64> = rng.normal(0.0, 1.0, &[9]).unwrap();
            let scale = 2.0 / l2_norm(w.data());
            let w: Vec<f64> = w.data().iter().map(|v| v * scale).collect();
            let out = l2_norm(&normalize_l2(&w, 1e-8));
            assert!((out - (1.0 - 1e-8 / 2.0)).abs() < 1e-9);
            assert!((out - 1.0).abs() <= 1e-8 / 2.0 + 1e-15);
        }
    }

    #[test]
    fn conv_examples() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(conv_same(&x, &[0.0, 1.0, 0.0]).unwrap(), x.to_vec());
        assert_eq!(
            conv_same(&x, &[1.0, 1.0, 1.0]).unwrap(),
            vec![3.0, 6.0, 9.0, 7.0]
        );
        let mut imp = vec![0.0f64; 11];
        imp[5] = 1.0;
        let y = conv_same(&imp, &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(&y[4..7], &[1.0, 2.0, 1.0]);
        assert!(y
            .iter()
            .enumerate()
            .all(|(i, &v)| (4..7).contains(&i) || v == 0.0));
        assert!(conv_same(&x, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn delta_is_all_pass() {
        let r = frequency_response(&[1.0], 16).unwrap();
        assert!(r.magnitude.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        assert!(frequency_response(&[1.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn box_filter_magnitude_is_cosine_sum() {
        let n = 64;
        let r = frequency_response(&[1.0, 1.0, 1.0], n).unwrap();
        for (i, m) in r.magnitude.iter().enumerate() {
            let omega = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            assert!((m - (1.0 + 2.0 * omega.cos()).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_kernel_has_linear_phase() {
        let n = 32;
        let r = frequency_response(&[1.0, 2.0, 1.0], n).unwrap();
        for (i, h) in r.spectrum.iter().enumerate() {
            let omega = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let rotated = h * Complex64::from_polar(1.0, omega);
            assert!(rotated.im.abs() < 1e-9);
        }
    }

    #[test]
    fn stored_parameter_counts() {
        let mut rng = Rng::new(0);
        let sym = SymmetricFilterBank::<f32>::new(2, &[3, 5], 2, true, 1e-8, &mut rng).unwrap();
        let asym = SymmetricFilterBank::<f32>::new(2, &[3, 5], 2, false, 1e-8, &mut rng).unwrap();
        assert_eq!(sym.num_params(), 2 * 2 * (2 + 3));
        assert_eq!(asym.num_params(), 2 * 2 * (3 + 5));
    }

    #[test]
    fn config_validation() {
        let mut rng = Rng::new(0);
        assert!(SymmetricFilterBank::<f32>::new(1, &[4], 1, true, 1e-8, &mut rng).is_err());
        assert!(SymmetricFilterBank::<f32>::new(1, &[5, 3], 1, true, 1e-8, &mut rng).is_err());
        assert!(SymmetricFilterBank::<f32>::new(1, &[1], 1, true, 1e-8, &mut rng).is_err());
        assert!(SymmetricFilterBank::<f32>::new(1, &[3], 1, true, 0.0, &mut rng).is_err());
    }

    #[test]
    fn backward_before_forward() {
        let mut bank =
            SymmetricFilterBank::<f64>::new(1, &[3], 1, true, 1e-8, &mut Rng::new(0)).unwrap();
        let g = Tensor::zeros(&[1, 1, 1, 4]);
        assert!(matches!(
            bank.backward(&g),
            Err(Error::BackwardBeforeForward(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::new(1);
        let mut bank =
            SymmetricFilterBank::<f64>::new(2, &[3, 5], 2, true, 1e-8, &mut rng).unwrap();
        let x = rng.normal(0.0, 1.0, &[2, 2, 10]).unwrap();
        let out = bank.forward(&x).unwrap();
        let gx = bank.backward(&Tensor::zeros(out.values.shape())).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(bank
            .params()
            .iter()
            .all(|p| p.grad.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn channel_shape_mismatch() {
        let mut bank =
            SymmetricFilterBank::<f64>::new(2, &[3], 1, true, 1e-8, &mut Rng::new(0)).unwrap();
        assert!(bank.forward(&Tensor::zeros(&[1, 3, 8])).is_err());
    }
}

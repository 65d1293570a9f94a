//! Deliberately naive reference implementations used as test oracles.
//!
//! Nothing here shares code with the library: inputs and outputs are plain
//! nested vectors, loops are written out in full, and padding is materialised.

use std::f64::consts::PI;

/// Mirror a centre-first half kernel `[w_0, w_1, .., w_m]` into length `2m+1`.
pub fn mirror(half: &[f64]) -> Vec<f64> {
    let m = half.len() - 1;
    let mut w = vec![0.0; 2 * m + 1];
    for j in 0..=m {
        w[m + j] = half[j];
        w[m - j] = half[j];
    }
    w
}

/// `w / (||w|| + eps)`.
pub fn unit_kernel(w: &[f64], eps: f64) -> Vec<f64> {
    let mut ss = 0.0;
    for v in w {
        ss += v * v;
    }
    let n = ss.sqrt() + eps;
    w.iter().map(|v| v / n).collect()
}

/// Centered correlation over an explicitly zero-padded copy of `x`.
pub fn conv_same_padded(x: &[f64], w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let m = k / 2;
    let mut padded = vec![0.0; x.len() + 2 * m];
    padded[m..m + x.len()].copy_from_slice(x);
    let mut out = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut acc = 0.0;
        for j in 0..k {
            acc += w[j] * padded[t + j];
        }
        out[t] = acc;
    }
    out
}

/// `x[b][c][t]`, `kernels[c][f]` to `out[b][c][f][t]`.
pub fn bank_forward(x: &[Vec<Vec<f64>>], kernels: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    x.iter()
        .map(|sample| {
            sample
                .iter()
                .zip(kernels)
                .map(|(signal, ks)| ks.iter().map(|w| conv_same_padded(signal, w)).collect())
                .collect()
        })
        .collect()
}

/// `h[f][t]`, `v[f][j]` to `z[l][f]` with stride `p / 2` and no partial patch.
pub fn depthwise(h: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = v[0].len();
    let t = h[0].len();
    let stride = p / 2;
    let mut z = Vec::new();
    let mut start = 0;
    while start + p <= t {
        let mut row = Vec::new();
        for f in 0..h.len() {
            let mut acc = 0.0;
            for j in 0..p {
                acc += v[f][j] * h[f][start + j];
            }
            row.push(acc);
        }
        z.push(row);
        start += stride;
    }
    z
}

/// `z[l][f]`, `proj[f][d]`, `bias[d]` to `x[l][d] = bias[d] + sum_f proj[f][d] z[l][f]`.
pub fn pointwise(z: &[Vec<f64>], proj: &[Vec<f64>], bias: &[f64]) -> Vec<Vec<f64>> {
    z.iter()
        .map(|zl| {
            (0..bias.len())
                .map(|d| {
                    let mut acc = bias[d];
                    for f in 0..zl.len() {
                        acc += proj[f][d] * zl[f];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Magnitude of `sum_t w[t] exp(-2 pi i k t / n)` for `k = 0..=n/2`.
pub fn dft_magnitude(w: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in w.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Complex DFT `(re, im)` of `w` zero-padded to `n`, bins `0..=n/2`.
pub fn dft(w: &[f64], n: usize) -> Vec<(f64, f64)> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in w.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re, im)
        })
        .collect()
}

/// `1 - cos` between two magnitude vectors.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Rank-sum statistic of `a` by direct pair comparison.
pub fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact one-sided p-values `(P(U <= u), P(U >= u))` by enumerating every
/// way to choose which pooled values belong to the first sample.
pub fn mann_whitney_exhaustive(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let k = a.len();
    let u_obs = u_by_pairs(a, b);
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    let mut pick: Vec<usize> = (0..k).collect();
    loop {
        let mut first = Vec::with_capacity(k);
        let mut second = Vec::with_capacity(n - k);
        let mut next = 0;
        for (i, &v) in pooled.iter().enumerate() {
            if next < k && pick[next] == i {
                first.push(v);
                next += 1;
            } else {
                second.push(v);
            }
        }
        let u = u_by_pairs(&first, &second);
        total += 1;
        if u <= u_obs {
            le += 1;
        }
        if u >= u_obs {
            ge += 1;
        }
        // next k-combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return (u_obs, le as f64 / total as f64, ge as f64 / total as f64);
            }
            i -= 1;
            if pick[i] < n - k + i {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..k {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// Floating-point arithmetic that counts every operation it performs.
#[derive(Default, Debug)]
pub struct Tally {
    pub flops: u64,
}

impl Tally {
    pub fn add(&mut self, a: f64, b: f64) -> f64 {
        self.flops += 1;
        a + b
    }
    pub fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.flops += 1;
        a - b
    }
    pub fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.flops += 1;
        a * b
    }
    pub fn div(&mut self, a: f64, b: f64) -> f64 {
        self.flops += 1;
        a / b
    }
    pub fn sqrt(&mut self, a: f64) -> f64 {
        self.flops += 1;
        a.sqrt()
    }
    /// `acc + a * b`, two operations.
    pub fn mac(&mut self, acc: f64, a: f64, b: f64) -> f64 {
        let p = self.mul(a, b);
        self.add(acc, p)
    }
}

pub enum OracleHead {
    /// `w[k][i]`, `b[k]`.
    Linear { w: Vec<Vec<f64>>, b: Vec<f64> },
    Mlp {
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<Vec<f64>>,
        b2: Vec<f64>,
    },
}

/// The whole inference pipeline written out with counted arithmetic.
pub struct OracleModel {
    /// Expanded, normalised kernels `[c][f]`.
    pub kernels: Vec<Vec<Vec<f64>>>,
    /// `[c][f][j]`.
    pub depthwise: Vec<Vec<Vec<f64>>>,
    /// `[c][f][d]`.
    pub pointwise: Vec<Vec<Vec<f64>>>,
    /// `[c][d]`.
    pub bias: Vec<Vec<f64>>,
    pub ln_gain: Vec<Vec<f64>>,
    pub ln_bias: Vec<Vec<f64>>,
    pub ln_delta: f64,
    pub fuse_relu: bool,
    pub head: OracleHead,
}

fn counted_affine(tally: &mut Tally, x: &[f64], w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(b)
        .map(|(row, &bias)| {
            let mut acc = bias;
            for (wi, xi) in row.iter().zip(x) {
                acc = tally.mac(acc, *wi, *xi);
            }
            acc
        })
        .collect()
}

impl OracleModel {
    /// Logits for one sample `x[c][t]` and the number of FLOPs spent.
    pub fn forward(&self, x: &[Vec<f64>]) -> (Vec<f64>, u64) {
        let mut tally = Tally::default();
        let mut features = Vec::new();
        for (c, signal) in x.iter().enumerate() {
            let t_len = signal.len();
            // filter bank over an explicit zero-padded signal
            let mut h = Vec::new();
            for w in &self.kernels[c] {
                let m = w.len() / 2;
                let mut padded = vec![0.0; t_len + 2 * m];
                padded[m..m + t_len].copy_from_slice(signal);
                let mut out = vec![0.0; t_len];
                for t in 0..t_len {
                    let mut acc = 0.0;
                    for j in 0..w.len() {
                        acc = tally.mac(acc, w[j], padded[t + j]);
                    }
                    out[t] = acc;
                }
                h.push(out);
            }
            // patch tokens
            let p = self.depthwise[c][0].len();
            let d = self.bias[c].len();
            let mut tokens = Vec::new();
            let mut start = 0;
            while start + p <= t_len {
                let mut z = Vec::new();
                for (f, v) in self.depthwise[c].iter().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..p {
                        acc = tally.mac(acc, v[j], h[f][start + j]);
                    }
                    z.push(acc);
                }
                let mut tok = self.bias[c].clone();
                for (f, zf) in z.iter().enumerate() {
                    for k in 0..d {
                        tok[k] = tally.mac(tok[k], self.pointwise[c][f][k], *zf);
                    }
                }
                if self.fuse_relu {
                    for v in tok.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                tokens.push(tok);
                start += p / 2;
            }
            // layer norm per token
            let dd = d as f64;
            let mut normed = Vec::new();
            for tok in &tokens {
                let mut sum = 0.0;
                for &v in tok {
                    sum = tally.add(sum, v);
                }
                let mean = tally.div(sum, dd);
                let mut sq = 0.0;
                for &v in tok {
                    let c0 = tally.sub(v, mean);
                    sq = tally.mac(sq, c0, c0);
                }
                let var = tally.div(sq, dd);
                let shifted = tally.add(var, self.ln_delta);
                let root = tally.sqrt(shifted);
                let inv = tally.div(1.0, root);
                let mut out = Vec::new();
                for k in 0..d {
                    let c0 = tally.sub(tok[k], mean);
                    let n = tally.mul(c0, inv);
                    let g = tally.mul(n, self.ln_gain[c][k]);
                    out.push(tally.add(g, self.ln_bias[c][k]));
                }
                normed.push(out);
            }
            // mean pool
            let mut pooled = vec![0.0; d];
            for tok in &normed {
                for k in 0..d {
                    pooled[k] = tally.add(pooled[k], tok[k]);
                }
            }
            for v in pooled.iter_mut() {
                *v = tally.div(*v, normed.len() as f64);
            }
            features.extend(pooled);
        }
        let logits = match &self.head {
            OracleHead::Linear { w, b } => counted_affine(&mut tally, &features, w, b),
            OracleHead::Mlp { w1, b1, w2, b2 } => {
                let hidden: Vec<f64> = counted_affine(&mut tally, &features, w1, b1)
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .collect();
                counted_affine(&mut tally, &hidden, w2, b2)
            }
        };
        (logits, tally.flops)
    }
}

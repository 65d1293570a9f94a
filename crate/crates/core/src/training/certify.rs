//! Analytic backward passes checked against central differences in 64-bit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::heads::{smoothed_cross_entropy, HeadKind, DEFAULT_LABEL_SMOOTHING};
use crate::model::{Classifier, ModelConfig, PrismModel};
use crate::numerics::{
    finite_diff_grad, max_relative_error, HasParams, Param, Rng, Tensor, DEFAULT_STEP,
};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Parameter groups in report order. `loss` is the gradient with respect to
/// the logits, `input` the gradient with respect to the signal.
const GROUPS: [&str; 6] = ["filterbank", "embedding", "norm", "head", "loss", "input"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub batch: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Negate every analytic gradient before comparing, to show that the
    /// harness catches a broken backward pass.
    pub corrupt_sign: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            batch: 2,
            step: DEFAULT_STEP,
            tolerance: GRADIENT_TOLERANCE,
            corrupt_sign: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub cases: usize,
    pub tolerance: f64,
    pub groups: Vec<GroupResult>,
    pub passed: bool,
}

/// The small reference configuration the command-line gradcheck ships with.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        channels: 2,
        length: 32,
        num_classes: 3,
        kernel_sizes: vec![3, 5],
        filters_per_size: 2,
        patch_len: 4,
        embed_dim: 6,
        ..ModelConfig::default()
    }
}

/// A small valid configuration with every architectural switch drawn at
/// random; lengths fall in `8..=max_len`.
pub fn random_small_config(rng: &mut Rng, max_len: usize) -> ModelConfig {
    let length = 8 + rng.below(max_len.max(8) - 7);
    let mut sizes: Vec<usize> = Vec::new();
    let mut k = 3 + 2 * rng.below(2);
    for _ in 0..1 + rng.below(3) {
        if k <= 2 * length {
            sizes.push(k);
        }
        k += 2 + 2 * rng.below(4);
    }
    ModelConfig {
        channels: 1 + rng.below(3),
        length,
        num_classes: 2 + rng.below(3),
        kernel_sizes: sizes,
        filters_per_size: 1 + rng.below(3),
        symmetric: rng.below(4) != 0,
        patch_len: 2 * (1 + rng.below((length / 2).min(4))),
        embed_dim: 2 + rng.below(6),
        head: if rng.below(3) == 0 {
            HeadKind::Mlp {
                hidden: 1 + rng.below(6),
            }
        } else {
            HeadKind::Linear
        },
        fuse_relu: rng.below(2) == 0,
        ..ModelConfig::default()
    }
}

fn group_of(name: &str) -> &'static str {
    GROUPS
        .iter()
        .find(|g| name.starts_with(&format!("{g}.")))
        .copied()
        .unwrap_or("head")
}

struct Tally {
    coords: [usize; GROUPS.len()],
    worst: [f64; GROUPS.len()],
}

impl Tally {
    fn add(&mut self, group: &str, analytic: &Tensor<f64>, numeric: &Tensor<f64>, flip: bool) {
        let i = GROUPS
            .iter()
            .position(|g| *g == group)
            .expect("known group");
        let a = if flip {
            Tensor::new(
                analytic.shape(),
                analytic.data().iter().map(|v| -v).collect(),
            )
            .expect("same shape")
        } else {
            analytic.clone()
        };
        self.coords[i] += a.len();
        self.worst[i] = self.worst[i].max(max_relative_error(&a, numeric));
    }
}

/// Compare analytic and finite-difference gradients for one randomly
/// initialised model per config (dropout disabled), on random inputs drawn
/// from `seed`. Groups that no config exercises are omitted.
pub fn certify_gradients(
    configs: &[ModelConfig],
    seed: u64,
    options: &CertifyOptions,
) -> Result<CertifyReport> {
    let mut rng = Rng::new(seed);
    let mut tally = Tally {
        coords: [0; GROUPS.len()],
        worst: [0.0; GROUPS.len()],
    };
    let eps = DEFAULT_LABEL_SMOOTHING;
    for cfg in configs {
        let cfg = ModelConfig {
            dropout: 0.0,
            ..cfg.clone()
        };
        let mut model = PrismModel::<f64>::new(&cfg, &mut rng)?;
        let b = options.batch.max(1);
        let x = rng.normal::<f64>(0.0, 1.0, &[b, cfg.channels, cfg.length])?;
        let y: Vec<usize> = (0..b).map(|_| rng.below(cfg.num_classes)).collect();

        model.zero_grad();
        let logits = model.forward(&x, None)?;
        let (_, g_logits) = smoothed_cross_entropy(&logits, &y, eps)?;
        let g_x = model.backward(&g_logits)?;
        let analytic: Vec<(String, Tensor<f64>)> = model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.grad.clone()))
            .collect();

        let numeric = finite_diff_grad(&mut model, options.step, |m| {
            let l = m.forward(&x, None)?;
            Ok(smoothed_cross_entropy(&l, &y, eps)?.0)
        })?;
        for ((name, a), n) in analytic.iter().zip(&numeric) {
            tally.add(group_of(name), a, n, options.corrupt_sign);
        }

        let mut logit_param = vec![Param::new("logits", logits)];
        let n_logits = finite_diff_grad(&mut logit_param, options.step, |p| {
            Ok(smoothed_cross_entropy(&p[0].value, &y, eps)?.0)
        })?;
        tally.add("loss", &g_logits, &n_logits[0], options.corrupt_sign);

        let mut input_param = vec![Param::new("input", x.clone())];
        let n_x = finite_diff_grad(&mut input_param, options.step, |p| {
            let l = model.forward(&p[0].value, None)?;
            Ok(smoothed_cross_entropy(&l, &y, eps)?.0)
        })?;
        tally.add("input", &g_x, &n_x[0], options.corrupt_sign);
    }
    let groups: Vec<GroupResult> = GROUPS
        .iter()
        .enumerate()
        .filter(|(i, _)| tally.coords[*i] > 0)
        .map(|(i, g)| GroupResult {
            group: g.to_string(),
            coordinates: tally.coords[i],
            max_rel_error: tally.worst[i],
            passed: tally.worst[i] < options.tolerance,
        })
        .collect();
    Ok(CertifyReport {
        cases: configs.len(),
        tolerance: options.tolerance,
        passed: !groups.is_empty() && groups.iter().all(|g| g.passed),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        tiny_config()
    }

    #[test]
    fn random_configs_are_valid() {
        let mut rng = Rng::new(0);
        for _ in 0..200 {
            random_small_config(&mut rng, 40).validate().unwrap();
        }
    }

    #[test]
    fn tiny_linear_model_certifies() {
        for seed in 0..3 {
            let r = certify_gradients(&[tiny()], seed, &CertifyOptions::default()).unwrap();
            assert!(r.passed, "{r:?}");
            assert_eq!(r.groups.len(), 6);
        }
    }

    #[test]
    fn mlp_head_certifies() {
        let cfg = ModelConfig {
            head: HeadKind::Mlp { hidden: 5 },
            ..tiny()
        };
        let r = certify_gradients(&[cfg], 4, &CertifyOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sign_flip_is_detected() {
        let opts = CertifyOptions {
            corrupt_sign: true,
            ..CertifyOptions::default()
        };
        let r = certify_gradients(&[tiny()], 0, &opts).unwrap();
        assert!(!r.passed);
        assert!(r.groups.iter().all(|g| g.max_rel_error > 0.1), "{r:?}");
    }
}

//! Helpers shared by the integration tests: random configurations and
//! conversion of a live model into the plain-vector reference model.

#![allow(dead_code)]

use prism_core::heads::HeadKind;
use prism_core::{HasParams, ModelConfig, PrismModel, Rng, Tensor};
use prism_testkit::{mirror, unit_kernel, OracleHead, OracleModel};

pub fn random_config(rng: &mut Rng, max_len: usize) -> ModelConfig {
    prism_core::training::random_small_config(rng, max_len)
}

fn param(model: &PrismModel<f64>, name: &str) -> Vec<f64> {
    model
        .params()
        .into_iter()
        .find(|p| p.name == name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .value
        .data()
        .to_vec()
}

fn rows(flat: Vec<f64>, width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(|r| r.to_vec()).collect()
}

/// Rebuild `model` as an [`OracleModel`] from its raw stored parameters.
pub fn oracle_of(model: &PrismModel<f64>) -> OracleModel {
    let cfg = &model.config;
    let mut kernels = Vec::new();
    let mut depthwise = Vec::new();
    let mut pointwise = Vec::new();
    let mut bias = Vec::new();
    let mut ln_gain = Vec::new();
    let mut ln_bias = Vec::new();
    for c in 0..cfg.channels {
        let mut ks = Vec::new();
        for &k in &cfg.kernel_sizes {
            for slot in 0..cfg.filters_per_size {
                let stored = param(model, &format!("filterbank.ch{c}.k{k}.f{slot}"));
                let full = if cfg.symmetric {
                    mirror(&stored)
                } else {
                    stored
                };
                ks.push(unit_kernel(&full, cfg.norm_eps));
            }
        }
        kernels.push(ks);
        let f_count = cfg.num_filters();
        depthwise.push(
            (0..f_count)
                .map(|f| param(model, &format!("embedding.ch{c}.depthwise.f{f}")))
                .collect(),
        );
        pointwise.push(
            (0..f_count)
                .map(|f| param(model, &format!("embedding.ch{c}.pointwise.f{f}")))
                .collect(),
        );
        bias.push(param(model, &format!("embedding.ch{c}.bias")));
        ln_gain.push(param(model, &format!("norm.ch{c}.gain")));
        ln_bias.push(param(model, &format!("norm.ch{c}.bias")));
    }
    let in_dim = cfg.channels * cfg.embed_dim;
    let head = match cfg.head {
        HeadKind::Linear => OracleHead::Linear {
            w: rows(param(model, "head.weight"), in_dim),
            b: param(model, "head.bias"),
        },
        HeadKind::Mlp { hidden } => OracleHead::Mlp {
            w1: rows(param(model, "head.hidden.weight"), in_dim),
            b1: param(model, "head.hidden.bias"),
            w2: rows(param(model, "head.output.weight"), hidden),
            b2: param(model, "head.output.bias"),
        },
    };
    OracleModel {
        kernels,
        depthwise,
        pointwise,
        bias,
        ln_gain,
        ln_bias,
        ln_delta: cfg.ln_delta,
        fuse_relu: cfg.fuse_relu,
        head,
    }
}

/// `(B, C, T)` tensor as nested vectors.
pub fn nested(x: &Tensor<f64>) -> Vec<Vec<Vec<f64>>> {
    let s = x.shape();
    x.data()
        .chunks(s[1] * s[2])
        .map(|b| b.chunks(s[2]).map(|r| r.to_vec()).collect())
        .collect()
}

/// Randomise every parameter so that biases, gains and heads are all
/// exercised away from their initial values.
pub fn jitter(model: &mut PrismModel<f64>, rng: &mut Rng) {
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.normal_f64(0.0, 0.3);
        }
    }
}

mod common;

use prism_core::heads::{smoothed_cross_entropy, HeadKind, LinearHead};
use prism_core::numerics::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
use prism_core::training::{certify_gradients, CertifyOptions};
use prism_core::{HasParams, ModelConfig, Rng};

#[test]
fn randomized_configs_certify() {
    let mut rng = Rng::new(5);
    let configs: Vec<ModelConfig> = (0..5)
        .map(|_| common::random_config(&mut rng, 24))
        .collect();
    let r = certify_gradients(&configs, 17, &CertifyOptions::default()).unwrap();
    for g in &r.groups {
        assert!(g.max_rel_error < 1e-4, "{g:?}");
    }
    assert!(r.passed);
}

#[test]
fn asymmetric_mlp_relu_config_certifies() {
    let cfg = ModelConfig {
        channels: 2,
        length: 20,
        num_classes: 4,
        kernel_sizes: vec![3, 7],
        symmetric: false,
        patch_len: 6,
        embed_dim: 5,
        head: HeadKind::Mlp { hidden: 7 },
        fuse_relu: true,
        ..ModelConfig::default()
    };
    let r = certify_gradients(
        &[cfg],
        2,
        &CertifyOptions {
            batch: 3,
            ..CertifyOptions::default()
        },
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn linear_head_alone() {
    let mut rng = Rng::new(1);
    let mut head = LinearHead::<f64>::new("h", 6, 3, &mut rng).unwrap();
    let x = rng.normal::<f64>(0.0, 1.0, &[4, 6]).unwrap();
    let y = [0, 2, 1, 2];
    head.zero_grad();
    let logits = head.forward(&x).unwrap();
    let (_, g) = smoothed_cross_entropy(&logits, &y, 0.1).unwrap();
    head.backward(&g).unwrap();
    let analytic: Vec<_> = head.params().iter().map(|p| p.grad.clone()).collect();
    let numeric = finite_diff_grad(&mut head, DEFAULT_STEP, |h| {
        let l = h.forward(&x)?;
        Ok(smoothed_cross_entropy(&l, &y, 0.1)?.0)
    })
    .unwrap();
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!(max_relative_error(a, n) < 1e-6);
    }
}

mod common;

use prism_core::analysis::{complexity_report, count_flops, count_params};
use prism_core::heads::HeadKind;
use prism_core::{Classifier, HasParams, ModelConfig, PrismModel, Rng};

#[test]
fn closed_form_params_equal_live_enumeration() {
    let mut rng = Rng::new(41);
    for case in 0..100 {
        let cfg = common::random_config(&mut rng, 40);
        let model = PrismModel::<f32>::new(&cfg, &mut rng).unwrap();
        let stages = count_params(&cfg).unwrap();
        let total: u64 = stages.iter().map(|s| s.params).sum();
        assert_eq!(total, model.num_params() as u64, "case {case}: {cfg:?}");
        let bank: usize = model
            .params()
            .iter()
            .filter(|p| p.name.starts_with("filterbank."))
            .map(|p| p.numel())
            .sum();
        assert_eq!(stages[0].params, bank as u64, "case {case}");
    }
}

#[test]
fn closed_form_flops_equal_instrumented_forward() {
    let mut rng = Rng::new(42);
    for case in 0..10 {
        let cfg = common::random_config(&mut rng, 24);
        let mut model = PrismModel::<f64>::new(&cfg, &mut rng).unwrap();
        common::jitter(&mut model, &mut rng);
        let oracle = common::oracle_of(&model);
        let b = 1 + rng.below(3);
        let x = rng
            .normal::<f64>(0.0, 1.0, &[b, cfg.channels, cfg.length])
            .unwrap();
        let logits = model.forward(&x, None).unwrap();
        let mut flops = 0;
        for (i, sample) in common::nested(&x).iter().enumerate() {
            let (want, n) = oracle.forward(sample);
            assert_eq!(
                &logits.data()[i * cfg.num_classes..(i + 1) * cfg.num_classes],
                &want[..],
                "case {case}"
            );
            flops += n;
        }
        let counted: u64 = count_flops(&cfg, b).unwrap().iter().sum();
        assert_eq!(counted, flops, "case {case}: {cfg:?}");
    }
}

#[test]
fn hand_sized_config_matches_oracle() {
    let cfg = ModelConfig {
        channels: 1,
        length: 8,
        num_classes: 2,
        kernel_sizes: vec![3],
        filters_per_size: 1,
        patch_len: 4,
        embed_dim: 2,
        ..ModelConfig::default()
    };
    let mut rng = Rng::new(0);
    let model = PrismModel::<f64>::new(&cfg, &mut rng).unwrap();
    let x = vec![(0..8).map(|i| i as f64 * 0.1).collect::<Vec<_>>()];
    let (_, n) = common::oracle_of(&model).forward(&x);
    assert_eq!(complexity_report(&cfg, 1).unwrap().total_flops, n);
}

#[test]
fn mlp_head_counts() {
    let cfg = ModelConfig {
        head: HeadKind::Mlp { hidden: 16 },
        ..ModelConfig::default()
    };
    let model = PrismModel::<f32>::new(&cfg, &mut Rng::new(0)).unwrap();
    assert_eq!(
        complexity_report(&cfg, 1).unwrap().total_params,
        model.num_params() as u64
    );
}

#[test]
fn isruc_small_within_factor_two_of_reference_budget() {
    let r = complexity_report(&ModelConfig::isruc_small(), 1).unwrap();
    let params = r.total_params as f64;
    assert!(params / 3817.0 <= 2.0 && 3817.0 / params <= 2.0, "{params}");
    assert!(
        r.mflops / 8.3 <= 2.0 && 8.3 / r.mflops <= 2.0,
        "{}",
        r.mflops
    );
    assert_eq!(r.symbols.kernel_sizes, vec![7, 15, 25]);
    assert_eq!(r.symbols.embed_dim, 26);
}

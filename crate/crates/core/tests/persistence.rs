mod common;

use prism_core::data::{
    generate_synth, parse_csv, parse_raw, to_csv, to_raw, Checkpoint, Dataset, SynthSpec,
};
use prism_core::{Classifier, HasParams, PrismModel, Rng, Tensor};
use proptest::prelude::*;

#[test]
fn checkpoint_predictions_are_bit_identical() {
    let mut rng = Rng::new(21);
    let dir = tempfile::tempdir().unwrap();
    for case in 0..10 {
        let cfg = common::random_config(&mut rng, 40);
        let mut model = PrismModel::<f32>::new(&cfg, &mut rng).unwrap();
        let x = rng
            .normal::<f32>(0.0, 1.0, &[5, cfg.channels, cfg.length])
            .unwrap();
        let path = dir.path().join(format!("m{case}.ckpt"));
        Checkpoint::from_model(&model).save(&path).unwrap();
        let mut back = Checkpoint::load(&path).unwrap().to_model().unwrap();
        assert_eq!(back.config, model.config);
        let before = model.forward(&x, None).unwrap();
        let after = back.forward(&x, None).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&before), bits(&after), "case {case}");
        assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());
        let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
        let names_back: Vec<String> = back.params().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names, names_back);
        assert_eq!(
            std::fs::read(&path).unwrap(),
            Checkpoint::from_model(&back).to_bytes()
        );
    }
}

#[test]
fn synth_roundtrips_through_both_formats() {
    let data = generate_synth(&SynthSpec {
        per_class: 5,
        ..SynthSpec::default()
    })
    .unwrap();
    assert_eq!(parse_raw(&to_raw(&data)).unwrap(), data);
    assert_eq!(parse_csv(&to_csv(&data)).unwrap(), data);
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..5, 1usize..4, 1usize..9, 2usize..5).prop_flat_map(|(n, c, t, k)| {
        (
            prop::collection::vec(
                any::<f32>().prop_filter("finite", |v| v.is_finite()),
                n * c * t,
            ),
            prop::collection::vec(0..k, n),
        )
            .prop_map(move |(v, y)| {
                let k = k.max(y.iter().max().map_or(0, |m| m + 1)).max(2);
                Dataset::new(Tensor::new(&[n, c, t], v).unwrap(), y, k).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn raw_roundtrip_is_exact(d in dataset_strategy()) {
        prop_assert_eq!(parse_raw(&to_raw(&d)).unwrap(), d);
    }

    #[test]
    fn csv_roundtrip_preserves_bits(d in dataset_strategy()) {
        let back = parse_csv(&to_csv(&d)).unwrap();
        let bits = |x: &Dataset| x.samples().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&d));
        prop_assert_eq!(back.labels(), d.labels());
    }
}

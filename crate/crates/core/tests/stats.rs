use prism_core::analysis::mann_whitney_u;
use prism_core::Rng;
use prism_testkit::mann_whitney_exhaustive;

#[test]
fn exact_test_matches_enumeration() {
    let mut rng = Rng::new(8);
    let mut cases = 0;
    while cases < 200 {
        let n_a = 1 + rng.below(10);
        let n_b = 1 + rng.below(10);
        if n_a * n_b > 100 {
            continue;
        }
        // coarse grid so ties are common
        let levels = 2 + rng.below(8);
        let mut draw = |n: usize| (0..n).map(|_| rng.below(levels) as f64).collect::<Vec<_>>();
        let a = draw(n_a);
        let b = draw(n_b);
        let r = mann_whitney_u(&a, &b).unwrap();
        let (u, le, ge) = mann_whitney_exhaustive(&a, &b);
        assert_eq!(r.u, u, "{a:?} {b:?}");
        if a.iter().chain(&b).all(|&v| v == a[0]) {
            assert_eq!(r.p_two_sided, 1.0);
        } else {
            assert!(r.exact);
            assert!(
                (r.p_less - le).abs() < 1e-12,
                "{a:?} {b:?}: {} vs {le}",
                r.p_less
            );
            assert!((r.p_greater - ge).abs() < 1e-12, "{a:?} {b:?}");
            assert!((r.p_two_sided - (2.0 * le.min(ge)).min(1.0)).abs() < 1e-12);
        }
        cases += 1;
    }
}

#[test]
fn one_sided_p_of_separated_triplets() {
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.u, 0.0);
    assert_eq!(r.p_less, 1.0 / 20.0);
}

#[test]
fn null_calibration() {
    let mut rng = Rng::new(77);
    let mut kept = 0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..40).map(|_| rng.normal_f64(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.normal_f64(0.0, 1.0)).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        if r.p_two_sided > 0.01 {
            kept += 1;
        }
    }
    assert!(kept >= 95, "{kept}");
}

#[test]
fn swapping_samples_mirrors_u() {
    let a = [0.3, 1.2, 0.7, 2.0, 0.1];
    let b = [1.1, 0.9, 2.5];
    let ab = mann_whitney_u(&a, &b).unwrap();
    let ba = mann_whitney_u(&b, &a).unwrap();
    assert_eq!(ab.u + ba.u, 15.0);
    assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
}

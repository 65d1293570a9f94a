mod common;

use prism_core::analysis::{magnitude_spectrum, pairwise_fft_cosine};
use prism_core::data::{generate_synth, SynthSpec};
use prism_core::embedding::{depthwise_patch_conv, pointwise_fuse};
use prism_core::filterbank::{frequency_response, SymmetricFilterBank};
use prism_core::{Rng, Tensor};
use prism_testkit as oracle;

#[test]
fn bank_forward_matches_padded_loops_exactly() {
    let mut rng = Rng::new(100);
    for case in 0..100 {
        let t = 4 + rng.below(61);
        let c = 1 + rng.below(3);
        let b = 1 + rng.below(3);
        let mut sizes = vec![1 + 2 * (1 + rng.below(3))];
        if rng.below(2) == 0 && sizes[0] + 4 <= 2 * t {
            sizes.push(sizes[0] + 4);
        }
        sizes.retain(|&k| k <= 2 * t);
        let symmetric = case % 4 != 0;
        let mut bank =
            SymmetricFilterBank::<f64>::new(c, &sizes, 1 + rng.below(2), symmetric, 1e-8, &mut rng)
                .unwrap();
        let x = rng.normal::<f64>(0.0, 1.0, &[b, c, t]).unwrap();
        let got = bank.forward(&x).unwrap().values;
        let kernels: Vec<Vec<Vec<f64>>> = (0..c)
            .map(|ch| {
                (0..bank.num_filters())
                    .map(|f| bank.kernel(ch, f))
                    .collect()
            })
            .collect();
        let want = oracle::bank_forward(&common::nested(&x), &kernels);
        let flat: Vec<f64> = want.into_iter().flatten().flatten().flatten().collect();
        assert_eq!(got.data(), &flat[..], "case {case}");
    }
}

#[test]
fn kernels_match_mirrored_and_normalised_oracle() {
    let mut rng = Rng::new(7);
    let bank = SymmetricFilterBank::<f64>::new(2, &[3, 7, 11], 2, true, 1e-8, &mut rng).unwrap();
    for c in 0..2 {
        for f in 0..6 {
            let stored = bank.raw_kernel(c, f);
            let m = stored.len() / 2;
            let half = stored[m..].to_vec();
            assert_eq!(
                bank.kernel(c, f),
                oracle::unit_kernel(&oracle::mirror(&half), 1e-8)
            );
        }
    }
}

#[test]
fn depthwise_and_pointwise_match_loops_exactly() {
    let mut rng = Rng::new(200);
    for case in 0..100 {
        let t = 2 + rng.below(63);
        let p = 2 * (1 + rng.below((t / 2).min(6)));
        let f = 1 + rng.below(5);
        let d = 1 + rng.below(6);
        let h = rng.normal::<f64>(0.0, 1.0, &[f, t]).unwrap();
        let v = rng.normal::<f64>(0.0, 1.0, &[f, p]).unwrap();
        let z = depthwise_patch_conv(&h, &v).unwrap();
        let hr: Vec<Vec<f64>> = h.data().chunks(t).map(|r| r.to_vec()).collect();
        let vr: Vec<Vec<f64>> = v.data().chunks(p).map(|r| r.to_vec()).collect();
        let zo = oracle::depthwise(&hr, &vr);
        assert_eq!(z.shape(), &[zo.len(), f], "case {case}");
        assert_eq!(z.data(), &zo.concat()[..], "case {case}");

        let proj = rng.normal::<f64>(0.0, 1.0, &[f, d]).unwrap();
        let bias = rng.normal::<f64>(0.0, 1.0, &[d]).unwrap();
        let x = pointwise_fuse(&z, &proj, &bias).unwrap();
        let pr: Vec<Vec<f64>> = proj.data().chunks(d).map(|r| r.to_vec()).collect();
        let xo = oracle::pointwise(&zo, &pr, bias.data());
        assert_eq!(x.data(), &xo.concat()[..], "case {case}");
    }
}

#[test]
fn fft_matches_direct_dft() {
    let mut rng = Rng::new(3);
    for n in [8usize, 16, 64, 256] {
        let k = 1 + rng.below(n.min(31));
        let w: Vec<f64> = (0..k).map(|_| rng.normal_f64(0.0, 1.0)).collect();
        let fast = magnitude_spectrum(&w, n).unwrap();
        let slow = oracle::dft_magnitude(&w, n);
        assert_eq!(fast.len(), n / 2 + 1);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn delta_versus_box_distance() {
    let delta = vec![0.0, 1.0, 0.0];
    let s = 1.0 / 3f64.sqrt();
    let boxed = vec![s, s, s];
    let d = pairwise_fft_cosine(&[delta.clone(), boxed.clone()], 8).unwrap();
    let want = oracle::cosine_distance(
        &oracle::dft_magnitude(&delta, 8),
        &oracle::dft_magnitude(&boxed, 8),
    );
    assert!((d.distances[0] - want).abs() < 1e-12);
    // |H_box(k)| / sqrt(3) = |1 + 2 cos(2 pi k / 8)| / 3 over k = 0..=4
    let mags: Vec<f64> = (0..=4)
        .map(|k| (1.0 + 2.0 * (std::f64::consts::PI * k as f64 / 4.0).cos()).abs())
        .collect();
    let hand = 1.0
        - mags.iter().sum::<f64>() / (5f64.sqrt() * mags.iter().map(|m| m * m).sum::<f64>().sqrt());
    assert!((d.distances[0] - hand).abs() < 1e-12);
}

#[test]
fn symmetric_kernel_response_has_linear_phase() {
    let mut rng = Rng::new(9);
    let bank = SymmetricFilterBank::<f64>::new(1, &[5, 21, 71], 1, true, 1e-8, &mut rng).unwrap();
    for f in 0..3 {
        let w = bank.kernel(0, f);
        let n = 256;
        let delay = (w.len() - 1) as f64 / 2.0;
        let h = frequency_response(&w, n).unwrap();
        for (k, z) in h.spectrum.iter().enumerate() {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let rot = z * rustfft::num_complex::Complex64::from_polar(1.0, omega * delay);
            assert!(rot.im.abs() < 1e-9, "bin {k}: {}", rot.im);
        }
    }
}

#[test]
fn noiseless_synth_peaks_inside_class_band() {
    let spec = SynthSpec {
        noise_std: 0.0,
        amplitude: (1.0, 1.0 + 1e-9),
        per_class: 50,
        ..SynthSpec::default()
    };
    let data = generate_synth(&spec).unwrap();
    let t = spec.length;
    let n = 4096;
    // Hann window to suppress leakage from the negative-frequency image.
    let hann: Vec<f64> = (0..t)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (t - 1) as f64).cos())
        .collect();
    for i in 0..data.len() {
        let (lo, hi) = spec.bands[data.labels()[i]];
        for row in data.sample(i).chunks(t) {
            let w: Vec<f64> = row.iter().zip(&hann).map(|(&v, h)| v as f64 * h).collect();
            let mag = magnitude_spectrum(&w, n).unwrap();
            let peak = (0..mag.len())
                .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
                .unwrap();
            let f = peak as f64 / n as f64;
            assert!(
                f >= lo && f <= hi,
                "sample {i}: peak {f} outside [{lo}, {hi}]"
            );
        }
    }
}

#[test]
fn tensor_shapes_from_oracle_agree() {
    let h = Tensor::<f64>::zeros(&[2, 10]);
    let v = Tensor::<f64>::zeros(&[2, 4]);
    assert_eq!(depthwise_patch_conv(&h, &v).unwrap().shape(), &[4, 2]);
}

//! Frequency-band classification tasks.
//!
//! Every sample of class `c` is, per channel, a sum of sinusoids whose
//! frequencies are drawn from band `c`, plus white Gaussian noise. Telling the
//! classes apart requires frequency selectivity, and the low bands need long
//! kernels to resolve.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// `[f_lo, f_hi]` per class, in cycles per sample.
    pub bands: Vec<(f64, f64)>,
    pub channels: usize,
    pub length: usize,
    pub per_class: usize,
    pub sinusoids: usize,
    pub noise_std: f64,
    pub amplitude: (f64, f64),
    pub allow_overlap: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            bands: vec![(0.02, 0.06), (0.08, 0.14), (0.18, 0.26), (0.30, 0.42)],
            channels: 3,
            length: 128,
            per_class: 200,
            sinusoids: 1,
            noise_std: 0.5,
            amplitude: (0.5, 1.5),
            allow_overlap: false,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.bands.len() < 2 {
            return bad("synthetic task needs at least two bands".into());
        }
        for &(lo, hi) in &self.bands {
            if !(0.0 < lo && lo < hi && hi < 0.5) {
                return bad(format!("band [{lo}, {hi}] must satisfy 0 < lo < hi < 0.5"));
            }
        }
        if !self.allow_overlap {
            let mut sorted = self.bands.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = sorted.windows(2).find(|w| w[1].0 < w[0].1) {
                return bad(format!("bands {:?} and {:?} overlap", w[0], w[1]));
            }
        }
        if self.channels == 0 || self.length == 0 || self.per_class == 0 || self.sinusoids == 0 {
            return bad("channels, length, per_class and sinusoids must be positive".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        let (a, b) = self.amplitude;
        if !(0.0 <= a && a < b) {
            return bad(format!("amplitude range [{a}, {b}) is empty"));
        }
        Ok(())
    }
}

pub fn generate_synth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (c, t) = (spec.channels, spec.length);
    let n = spec.bands.len() * spec.per_class;
    let mut data = Vec::with_capacity(n * c * t);
    let mut labels = Vec::with_capacity(n);
    let tau = 2.0 * std::f64::consts::PI;
    for (class, &(lo, hi)) in spec.bands.iter().enumerate() {
        for _ in 0..spec.per_class {
            for _ in 0..c {
                let mut signal = vec![0.0f64; t];
                for _ in 0..spec.sinusoids {
                    let f = rng.uniform_f64(lo, hi);
                    let amp = rng.uniform_f64(spec.amplitude.0, spec.amplitude.1);
                    let phase = rng.uniform_f64(0.0, tau);
                    for (i, s) in signal.iter_mut().enumerate() {
                        *s += amp * (tau * f * i as f64 + phase).sin();
                    }
                }
                for s in signal.iter_mut() {
                    *s += rng.normal_f64(0.0, spec.noise_std);
                }
                data.extend(signal.into_iter().map(|v| v as f32));
            }
            labels.push(class);
        }
    }
    Dataset::new(Tensor::new(&[n, c, t], data)?, labels, spec.bands.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_per_class() {
        let spec = SynthSpec {
            per_class: 50,
            length: 32,
            ..SynthSpec::default()
        };
        let d = generate_synth(&spec).unwrap();
        assert_eq!(d.len(), 200);
        for c in 0..4 {
            assert_eq!(d.labels().iter().filter(|&&y| y == c).count(), 50);
        }
    }

    #[test]
    fn seeded() {
        let spec = SynthSpec {
            per_class: 3,
            length: 16,
            ..SynthSpec::default()
        };
        let a = generate_synth(&spec).unwrap();
        assert_eq!(a, generate_synth(&spec).unwrap());
        let b = generate_synth(&SynthSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn band_validation() {
        let bad = |bands: Vec<(f64, f64)>| {
            SynthSpec {
                bands,
                ..SynthSpec::default()
            }
            .validate()
            .is_err()
        };
        assert!(bad(vec![(0.1, 0.2), (0.3, 0.5)]));
        assert!(bad(vec![(0.2, 0.1), (0.3, 0.4)]));
        assert!(bad(vec![(0.1, 0.3), (0.2, 0.4)]));
        let overlap_ok = SynthSpec {
            bands: vec![(0.1, 0.3), (0.2, 0.4)],
            allow_overlap: true,
            ..SynthSpec::default()
        };
        overlap_ok.validate().unwrap();
    }
}

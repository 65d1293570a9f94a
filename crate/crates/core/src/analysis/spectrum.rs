//! Spectral diversity of learned filters: pairwise cosine distances between
//! normalised DFT magnitude spectra.

use serde::{Deserialize, Serialize};

use crate::analysis::stats::{mann_whitney_u, MannWhitney};
use crate::error::{Error, Result};
use crate::filterbank::frequency_response;

pub const DEFAULT_FFT_POINTS: usize = 256;

/// Magnitude over bins `0..=n_points/2` of a kernel zero-padded to `n_points`.
pub fn magnitude_spectrum(kernel: &[f64], n_points: usize) -> Result<Vec<f64>> {
    let mut mag = frequency_response(kernel, n_points)?.magnitude;
    mag.truncate(n_points / 2 + 1);
    Ok(mag)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDistances {
    /// Filter index pairs `(i, j)`, `i < j`, in lexicographic order.
    pub pairs: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    /// Filters with an all-zero spectrum, left out of every pair.
    pub excluded: Vec<usize>,
}

/// `1 - <a_hat, b_hat>` for every unordered pair of filters.
pub fn pairwise_fft_cosine(filters: &[Vec<f64>], n_points: usize) -> Result<PairwiseDistances> {
    if filters.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 filters, got {}",
            filters.len()
        )));
    }
    let mut unit: Vec<Option<Vec<f64>>> = Vec::with_capacity(filters.len());
    let mut excluded = Vec::new();
    for (i, k) in filters.iter().enumerate() {
        let mag = magnitude_spectrum(k, n_points)?;
        let norm = mag.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            unit.push(Some(mag.into_iter().map(|v| v / norm).collect()));
        } else {
            log::warn!(
                "filter {i} has a zero magnitude spectrum; excluded from pairwise distances"
            );
            excluded.push(i);
            unit.push(None);
        }
    }
    let mut pairs = Vec::new();
    let mut distances = Vec::new();
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            if let (Some(a), Some(b)) = (&unit[i], &unit[j]) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                pairs.push((i, j));
                distances.push((1.0 - dot).clamp(0.0, 2.0));
            }
        }
    }
    Ok(PairwiseDistances {
        pairs,
        distances,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub against: String,
    pub other_mean: f64,
    pub test: MannWhitney,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub set: String,
    pub n_points: usize,
    pub filters: usize,
    pub distances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub comparison: Option<Comparison>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl DiversityReport {
    /// Summarise pooled distances of `filters` kernels.
    pub fn new(
        set: impl Into<String>,
        n_points: usize,
        filters: usize,
        distances: Vec<f64>,
    ) -> Self {
        let mean = if distances.is_empty() {
            f64::NAN
        } else {
            distances.iter().sum::<f64>() / distances.len() as f64
        };
        Self {
            set: set.into(),
            n_points,
            filters,
            median: median(&distances),
            mean,
            distances,
            comparison: None,
        }
    }

    /// Attach a rank-sum test of these distances against `other`'s.
    pub fn compare(mut self, other: &DiversityReport) -> Result<Self> {
        self.comparison = Some(Comparison {
            against: other.set.clone(),
            other_mean: other.mean,
            test: mann_whitney_u(&self.distances, &other.distances)?,
        });
        Ok(self)
    }
}

/// Long-format CSV `filter,kernel_size,bin,frequency,magnitude`, one row per
/// (filter, non-negative frequency bin). Frequency is in cycles per sample.
pub fn spectra_csv(names: &[String], filters: &[Vec<f64>], n_points: usize) -> Result<String> {
    let mut out = String::from("filter,kernel_size,bin,frequency,magnitude\n");
    for (name, k) in names.iter().zip(filters) {
        for (bin, m) in magnitude_spectrum(k, n_points)?.iter().enumerate() {
            out.push_str(&format!(
                "{name},{},{bin},{:.6},{:.9}\n",
                k.len(),
                bin as f64 / n_points as f64,
                m
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_scaled_filters_have_zero_distance() {
        let a = vec![0.2, -0.5, 1.0, -0.5, 0.2];
        let b: Vec<f64> = a.iter().map(|v| v * 5.0).collect();
        let d = pairwise_fft_cosine(&[a.clone(), a, b], 64).unwrap();
        assert_eq!(d.pairs, vec![(0, 1), (0, 2), (1, 2)]);
        assert!(d.distances.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_filter_is_excluded() {
        let d = pairwise_fft_cosine(&[vec![0.0, 1.0, 0.0], vec![0.0; 3], vec![1.0, 1.0, 1.0]], 8)
            .unwrap();
        assert_eq!(d.excluded, vec![1]);
        assert_eq!(d.pairs, vec![(0, 2)]);
    }

    #[test]
    fn needs_two_filters() {
        assert!(pairwise_fft_cosine(&[vec![1.0]], 8).is_err());
    }

    #[test]
    fn report_summary() {
        let r = DiversityReport::new("s", 8, 3, vec![0.3, 0.1, 0.2, 0.4]);
        assert!((r.mean - 0.25).abs() < 1e-15);
        assert!((r.median - 0.25).abs() < 1e-15);
    }
}

use crate::error::{Error, Result};
use crate::numerics::{Real, Rng, Tensor};

/// Labelled multichannel sequences, `(N, C, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Tensor<f32>,
    labels: Vec<usize>,
    num_classes: usize,
    pub channel_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(samples: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let &[n, _, _] = samples.shape() else {
            return Err(Error::InvalidArgument(format!(
                "dataset samples must be (N, C, T), got {:?}",
                samples.shape()
            )));
        };
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{n} samples but {} labels",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} of sample {i} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            num_classes,
            channel_names: None,
        })
    }

    /// Same samples under a larger (or equal) label space.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(&y) = self.labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn length(&self) -> usize {
        self.samples.shape()[2]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn samples(&self) -> &Tensor<f32> {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let w = self.channels() * self.length();
        &self.samples.data()[i * w..(i + 1) * w]
    }

    /// Gather the given samples into a `(B, C, T)` batch.
    pub fn batch<S: Real>(&self, indices: &[usize]) -> (Tensor<S>, Vec<usize>) {
        let w = self.channels() * self.length();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend(self.sample(i).iter().map(|&v| S::of(v as f64)));
        }
        let x = Tensor::new(&[indices.len(), self.channels(), self.length()], data)
            .expect("batch of a validated dataset");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Empty("subset with no samples".into()));
        }
        let (x, y) = self.batch::<f32>(indices);
        let mut d = Dataset::new(x, y, self.num_classes)?;
        d.channel_names = self.channel_names.clone();
        Ok(d)
    }

    /// Seeded split into two disjoint parts; the second receives
    /// `round(fraction * N)` samples.
    pub fn split(&self, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        let (a, b) = split_indices(self.len(), fraction, rng)?;
        Ok((self.subset(&a)?, self.subset(&b)?))
    }
}

/// Shuffle `0..n` and cut it into `(rest, held_out)` with
/// `held_out.len() == round(fraction * n)`. Both parts are returned sorted.
pub fn split_indices(n: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let held = (fraction * n as f64).round() as usize;
    if held == 0 || held == n {
        return Err(Error::Empty(format!(
            "splitting {n} samples at {fraction} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut held_out = idx[..held].to_vec();
    let mut rest = idx[held..].to_vec();
    held_out.sort_unstable();
    rest.sort_unstable();
    Ok((rest, held_out))
}

/// Train/validation/test partition.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Hold out `test_fraction` of `data` for testing, then `val_fraction` of
    /// the remainder for validation.
    pub fn from_single(
        data: &Dataset,
        test_fraction: f64,
        val_fraction: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (rest, test) = data.split(test_fraction, rng)?;
        let (train, val) = rest.split(val_fraction, rng)?;
        Ok(Self { train, val, test })
    }

    /// Carve validation out of a given training set.
    pub fn from_train_test(
        train: &Dataset,
        test: Dataset,
        val_fraction: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (train, val) = train.split(val_fraction, rng)?;
        Ok(Self { train, val, test })
    }

    /// Standardise every split with statistics of the training split.
    pub fn standardized(&self) -> Self {
        let stats = ChannelStats::fit(&self.train);
        Self {
            train: stats.apply(&self.train),
            val: stats.apply(&self.val),
            test: stats.apply(&self.test),
        }
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STANDARDIZE_EPS: f64 = 1e-8;

/// Spread below which a channel counts as constant.
const MIN_SPREAD: f64 = 1e-12;

impl ChannelStats {
    pub fn fit(data: &Dataset) -> Self {
        let (c, t) = (data.channels(), data.length());
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for i in 0..data.len() {
            for (ch, row) in data.sample(i).chunks(t).enumerate() {
                for &v in row {
                    sum[ch] += v as f64;
                }
            }
        }
        let count = (data.len() * t) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        for i in 0..data.len() {
            for (ch, row) in data.sample(i).chunks(t).enumerate() {
                for &v in row {
                    sq[ch] += (v as f64 - mean[ch]).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count).sqrt()).collect();
        Self { mean, std }
    }

    /// `(x - mean) / (std + 1e-8)`; channels with zero spread map to 0.
    pub fn apply(&self, data: &Dataset) -> Dataset {
        let (c, t) = (data.channels(), data.length());
        let mut out = data.samples().data().to_vec();
        for sample in out.chunks_mut(c * t) {
            for (ch, row) in sample.chunks_mut(t).enumerate() {
                let (m, s) = (self.mean[ch], self.std[ch]);
                for v in row.iter_mut() {
                    *v = if s > MIN_SPREAD {
                        ((*v as f64 - m) / (s + STANDARDIZE_EPS)) as f32
                    } else {
                        0.0
                    };
                }
            }
        }
        let mut d = Dataset::new(
            Tensor::new(data.samples().shape(), out).expect("same shape"),
            data.labels().to_vec(),
            data.num_classes(),
        )
        .expect("labels already validated");
        d.channel_names = data.channel_names.clone();
        d
    }
}

//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use prism_core::analysis::{AblationAxis, DEFAULT_FFT_POINTS};
use prism_core::data::{DataFormat, SynthSpec};
use prism_core::heads::{HeadKind, DEFAULT_MLP_HIDDEN};
use prism_core::training::TrainConfig;
use prism_core::ModelConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "PRISM_SEED";

/// `(key, description)` in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "model initialisation and shuffling seed"),
    ("split_seed", "seed of the train/validation/test split"),
    ("precision", "compute precision: f32 | f64"),
    ("channels", "input channels C"),
    ("length", "sequence length T"),
    ("num_classes", "number of classes"),
    (
        "kernel_sizes",
        "comma-separated odd kernel sizes, increasing",
    ),
    ("filters_per_size", "filters per kernel size"),
    (
        "symmetric",
        "store half-kernels and mirror them (linear phase)",
    ),
    ("norm_eps", "epsilon of the kernel L2 normalisation"),
    ("patch_len", "patch length p (even); stride is p/2"),
    ("embed_dim", "embedding size D"),
    ("ln_delta", "LayerNorm variance floor"),
    ("head", "classification head: linear | mlp"),
    ("mlp_hidden", "hidden units of the mlp head"),
    ("fuse_relu", "ReLU after the pointwise fuse"),
    ("dropout", "dropout rate after the pointwise fuse"),
    ("epochs", "training epochs"),
    ("batch_size", "mini-batch size"),
    ("lr", "AdamW learning rate"),
    ("weight_decay", "AdamW decoupled weight decay"),
    ("beta1", "AdamW first-moment decay"),
    ("beta2", "AdamW second-moment decay"),
    ("adam_eps", "AdamW denominator epsilon"),
    ("label_smoothing", "label smoothing of the cross-entropy"),
    (
        "val_fraction",
        "fraction of the training data held out for validation",
    ),
    (
        "test_fraction",
        "fraction held out for testing when no test_data is given",
    ),
    (
        "standardize",
        "per-channel standardisation with training statistics",
    ),
    ("data", "dataset file; empty generates the synthetic task"),
    ("test_data", "optional separate test dataset file"),
    ("data_format", "dataset file format: csv | bin"),
    (
        "synth_bands",
        "class bands lo:hi in cycles/sample, comma-separated",
    ),
    ("synth_per_class", "synthetic samples per class"),
    (
        "synth_sinusoids",
        "sinusoids per synthetic sample and channel",
    ),
    ("synth_noise", "synthetic white-noise standard deviation"),
    (
        "synth_amp_lo",
        "lower bound of synthetic sinusoid amplitudes",
    ),
    (
        "synth_amp_hi",
        "upper bound of synthetic sinusoid amplitudes",
    ),
    ("synth_allow_overlap", "permit overlapping synthetic bands"),
    ("synth_seed", "seed of the synthetic generator"),
    (
        "checkpoint",
        "checkpoint file(s) for eval/spectra, comma-separated",
    ),
    (
        "compare_checkpoint",
        "checkpoint file(s) whose filters spectra compares against",
    ),
    ("fft_points", "FFT length for spectral analysis"),
    ("flops_batch", "batch size B for FLOP counts"),
    ("ablate_axis", "ablation axis: scales | kernels_per_scale"),
    (
        "ablate_levels",
        "ablation levels separated by ';' (kernel sets use ',')",
    ),
    (
        "ablate_seeds",
        "comma-separated seeds averaged per ablation level",
    ),
    (
        "gradcheck_cases",
        "randomised configs certified besides the tiny one",
    ),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub split_seed: u64,
    pub precision: Precision,
    pub model: ModelConfig,
    pub mlp_hidden: usize,
    pub train: TrainConfig,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub standardize: bool,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub data_format: DataFormat,
    pub synth: SynthSpec,
    pub checkpoint: Vec<PathBuf>,
    pub compare_checkpoint: Vec<PathBuf>,
    pub fft_points: usize,
    pub flops_batch: usize,
    pub ablate_axis: String,
    pub ablate_levels: String,
    pub ablate_seeds: Vec<u64>,
    pub gradcheck_cases: usize,
}

pub const PRESETS: &[&str] = &["default", "isruc-small"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let base = Self {
            seed: 0,
            split_seed: 0,
            precision: Precision::F32,
            model: ModelConfig::default(),
            mlp_hidden: DEFAULT_MLP_HIDDEN,
            train: TrainConfig::default(),
            val_fraction: 0.2,
            test_fraction: 0.2,
            standardize: true,
            data: None,
            test_data: None,
            data_format: DataFormat::Csv,
            synth: SynthSpec::default(),
            checkpoint: Vec::new(),
            compare_checkpoint: Vec::new(),
            fft_points: DEFAULT_FFT_POINTS,
            flops_batch: 1,
            ablate_axis: "scales".into(),
            ablate_levels: "15;15,31;15,31,51;15,31,51,71".into(),
            ablate_seeds: vec![0, 1, 2],
            gradcheck_cases: 4,
        };
        match name {
            "default" => Ok(base),
            "isruc-small" => Ok(Self {
                model: ModelConfig::isruc_small(),
                // channels and length always follow the model keys
                synth: SynthSpec {
                    bands: vec![
                        (0.005, 0.02),
                        (0.03, 0.06),
                        (0.08, 0.12),
                        (0.15, 0.22),
                        (0.28, 0.4),
                    ],
                    ..SynthSpec::default()
                },
                ..base
            }),
            other => Err(CliError::Config(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let m = &mut self.model;
        let o = &mut self.train.optimizer;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(key, v, "f32 | f64")),
                }
            }
            "channels" => m.channels = parse(key, v)?,
            "length" => m.length = parse(key, v)?,
            "num_classes" => m.num_classes = parse(key, v)?,
            "kernel_sizes" => m.kernel_sizes = parse_list(key, v, ',')?,
            "filters_per_size" => m.filters_per_size = parse(key, v)?,
            "symmetric" => m.symmetric = parse_bool(key, v)?,
            "norm_eps" => m.norm_eps = parse(key, v)?,
            "patch_len" => m.patch_len = parse(key, v)?,
            "embed_dim" => m.embed_dim = parse(key, v)?,
            "ln_delta" => m.ln_delta = parse(key, v)?,
            "head" => {
                m.head = match v {
                    "linear" => HeadKind::Linear,
                    "mlp" => HeadKind::Mlp {
                        hidden: self.mlp_hidden,
                    },
                    _ => return Err(bad(key, v, "linear | mlp")),
                }
            }
            "mlp_hidden" => {
                self.mlp_hidden = parse(key, v)?;
                if let HeadKind::Mlp { hidden } = &mut m.head {
                    *hidden = self.mlp_hidden;
                }
            }
            "fuse_relu" => m.fuse_relu = parse_bool(key, v)?,
            "dropout" => m.dropout = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lr" => o.lr = parse(key, v)?,
            "weight_decay" => o.weight_decay = parse(key, v)?,
            "beta1" => o.beta1 = parse(key, v)?,
            "beta2" => o.beta2 = parse(key, v)?,
            "adam_eps" => o.adam_eps = parse(key, v)?,
            "label_smoothing" => self.train.label_smoothing = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "standardize" => self.standardize = parse_bool(key, v)?,
            "data" => self.data = opt_path(v),
            "test_data" => self.test_data = opt_path(v),
            "data_format" => {
                self.data_format =
                    DataFormat::from_str(v).map_err(|e| CliError::Config(e.to_string()))?
            }
            "synth_bands" => {
                self.synth.bands = v
                    .split(',')
                    .map(|band| {
                        let (lo, hi) = band
                            .split_once(':')
                            .ok_or_else(|| bad(key, v, "lo:hi,lo:hi,..."))?;
                        Ok((parse(key, lo.trim())?, parse(key, hi.trim())?))
                    })
                    .collect::<Result<_, CliError>>()?
            }
            "synth_per_class" => self.synth.per_class = parse(key, v)?,
            "synth_sinusoids" => self.synth.sinusoids = parse(key, v)?,
            "synth_noise" => self.synth.noise_std = parse(key, v)?,
            "synth_amp_lo" => self.synth.amplitude.0 = parse(key, v)?,
            "synth_amp_hi" => self.synth.amplitude.1 = parse(key, v)?,
            "synth_allow_overlap" => self.synth.allow_overlap = parse_bool(key, v)?,
            "synth_seed" => self.synth.seed = parse(key, v)?,
            "checkpoint" => self.checkpoint = path_list(v),
            "compare_checkpoint" => self.compare_checkpoint = path_list(v),
            "fft_points" => self.fft_points = parse(key, v)?,
            "flops_batch" => self.flops_batch = parse(key, v)?,
            "ablate_axis" => match v {
                "scales" | "kernels_per_scale" => self.ablate_axis = v.into(),
                _ => return Err(bad(key, v, "scales | kernels_per_scale")),
            },
            "ablate_levels" => self.ablate_levels = v.into(),
            "ablate_seeds" => self.ablate_seeds = parse_list(key, v, ',')?,
            "gradcheck_cases" => self.gradcheck_cases = parse(key, v)?,
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let m = &self.model;
        let o = &self.train.optimizer;
        let join = |v: &[PathBuf]| {
            v.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match key {
            "seed" => self.seed.to_string(),
            "split_seed" => self.split_seed.to_string(),
            "precision" => match self.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            "channels" => m.channels.to_string(),
            "length" => m.length.to_string(),
            "num_classes" => m.num_classes.to_string(),
            "kernel_sizes" => list(&m.kernel_sizes, ","),
            "filters_per_size" => m.filters_per_size.to_string(),
            "symmetric" => m.symmetric.to_string(),
            "norm_eps" => m.norm_eps.to_string(),
            "patch_len" => m.patch_len.to_string(),
            "embed_dim" => m.embed_dim.to_string(),
            "ln_delta" => m.ln_delta.to_string(),
            "head" => match m.head {
                HeadKind::Linear => "linear".into(),
                HeadKind::Mlp { .. } => "mlp".into(),
            },
            "mlp_hidden" => self.mlp_hidden.to_string(),
            "fuse_relu" => m.fuse_relu.to_string(),
            "dropout" => m.dropout.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lr" => o.lr.to_string(),
            "weight_decay" => o.weight_decay.to_string(),
            "beta1" => o.beta1.to_string(),
            "beta2" => o.beta2.to_string(),
            "adam_eps" => o.adam_eps.to_string(),
            "label_smoothing" => self.train.label_smoothing.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "standardize" => self.standardize.to_string(),
            "data" => self
                .data
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "test_data" => self
                .test_data
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "data_format" => match self.data_format {
                DataFormat::Csv => "csv".into(),
                DataFormat::Bin => "bin".into(),
            },
            "synth_bands" => self
                .synth
                .bands
                .iter()
                .map(|(lo, hi)| format!("{lo}:{hi}"))
                .collect::<Vec<_>>()
                .join(","),
            "synth_per_class" => self.synth.per_class.to_string(),
            "synth_sinusoids" => self.synth.sinusoids.to_string(),
            "synth_noise" => self.synth.noise_std.to_string(),
            "synth_amp_lo" => self.synth.amplitude.0.to_string(),
            "synth_amp_hi" => self.synth.amplitude.1.to_string(),
            "synth_allow_overlap" => self.synth.allow_overlap.to_string(),
            "synth_seed" => self.synth.seed.to_string(),
            "checkpoint" => join(&self.checkpoint),
            "compare_checkpoint" => join(&self.compare_checkpoint),
            "fft_points" => self.fft_points.to_string(),
            "flops_batch" => self.flops_batch.to_string(),
            "ablate_axis" => self.ablate_axis.clone(),
            "ablate_levels" => self.ablate_levels.clone(),
            "ablate_seeds" => list(&self.ablate_seeds, ","),
            "gradcheck_cases" => self.gradcheck_cases.to_string(),
            _ => unreachable!("key table and getter disagree on {key}"),
        }
    }

    /// Apply a config file's `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{origin}:{}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Resolved configuration in the same syntax it is read in.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, doc) in KEYS {
            writeln!(out, "# {doc}").unwrap();
            writeln!(out, "{k} = {}", self.get(k)).unwrap();
        }
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn ablation_axis(&self) -> Result<AblationAxis, CliError> {
        let levels = self
            .ablate_levels
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty());
        match self.ablate_axis.as_str() {
            "scales" => Ok(AblationAxis::Scales(
                levels
                    .map(|l| parse_list("ablate_levels", l, ','))
                    .collect::<Result<_, _>>()?,
            )),
            _ => Ok(AblationAxis::KernelsPerScale(
                levels
                    .map(|l| parse("ablate_levels", l))
                    .collect::<Result<_, _>>()?,
            )),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        for (k, f) in [
            ("val_fraction", self.val_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!("{k} must be in (0, 1), got {f}")));
            }
        }
        if self.fft_points < 2 {
            return Err(CliError::Config("fft_points must be >= 2".into()));
        }
        if self.flops_batch == 0 {
            return Err(CliError::Config("flops_batch must be >= 1".into()));
        }
        if self.ablate_seeds.is_empty() {
            return Err(CliError::Config(
                "ablate_seeds must list at least one seed".into(),
            ));
        }
        Ok(())
    }
}

/// Every key with its default under each preset, for `--help`.
pub fn key_help() -> String {
    let presets: Vec<RunConfig> = PRESETS
        .iter()
        .map(|p| RunConfig::preset(p).expect("built-in preset"))
        .collect();
    let mut out =
        String::from("CONFIG KEYS (key = value; defaults for presets default / isruc-small):\n");
    for (k, doc) in KEYS {
        let d0 = presets[0].get(k);
        let d1 = presets[1].get(k);
        let shown = |s: String| if s.is_empty() { "\"\"".to_string() } else { s };
        if d0 == d1 {
            writeln!(out, "  {k:<20} {doc} [default: {}]", shown(d0)).unwrap();
        } else {
            writeln!(
                out,
                "  {k:<20} {doc} [default: {} / {}]",
                shown(d0),
                shown(d1)
            )
            .unwrap();
        }
    }
    write!(out, "\n{SEED_ENV} overrides the seed key when set.").unwrap();
    out
}

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!(
        "{key}: invalid value {value:?} (expected {expected})"
    ))
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| bad(key, v, std::any::type_name::<T>()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "true | false")),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str, sep: char) -> Result<Vec<T>, CliError> {
    v.split(sep).map(|s| parse(key, s.trim())).collect()
}

fn list<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn path_list(v: &str) -> Vec<PathBuf> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips_through_text() {
        for p in PRESETS {
            let cfg = RunConfig::preset(p).unwrap();
            let mut back = RunConfig::preset("default").unwrap();
            back.apply_text(&cfg.to_text(), "echo").unwrap();
            assert_eq!(back, cfg, "{p}");
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::preset("default").unwrap();
        let err = cfg.apply_text("epochs = 3\nbogus = 1\n", "f").unwrap_err();
        assert!(err.message().contains("f:2"), "{}", err.message());
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = RunConfig::preset("default").unwrap();
        cfg.apply_text(
            "# header\n\nepochs = 7 # trailing\nkernel_sizes = 3, 5\n",
            "f",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.model.kernel_sizes, vec![3, 5]);
    }

    #[test]
    fn presets_carry_reference_hyperparameters() {
        let d = RunConfig::preset("default").unwrap();
        assert_eq!(d.model.kernel_sizes, vec![11, 21, 51, 71]);
        assert_eq!(d.model.embed_dim, 128);
        assert_eq!(
            (
                d.train.optimizer.lr,
                d.train.optimizer.weight_decay,
                d.train.epochs
            ),
            (1e-3, 1e-4, 100)
        );
        let s = RunConfig::preset("isruc-small").unwrap();
        assert_eq!(s.model.kernel_sizes, vec![7, 15, 25]);
        assert_eq!(s.model.embed_dim, 26);
        s.validate().unwrap();
        s.synth.validate().unwrap();
    }

    #[test]
    fn help_lists_every_key() {
        let h = key_help();
        for (k, _) in KEYS {
            assert!(h.contains(k), "{k}");
        }
    }

    #[test]
    fn head_and_hidden_in_either_order() {
        let mut a = RunConfig::preset("default").unwrap();
        a.apply_text("head = mlp\nmlp_hidden = 9\n", "f").unwrap();
        let mut b = RunConfig::preset("default").unwrap();
        b.apply_text("mlp_hidden = 9\nhead = mlp\n", "f").unwrap();
        assert_eq!(a.model.head, HeadKind::Mlp { hidden: 9 });
        assert_eq!(a, b);
    }
}

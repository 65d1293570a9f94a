use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use prism_core::analysis::{
    complexity_report, pairwise_fft_cosine, run_ablation, spectra_csv, DiversityReport,
};
use prism_core::data::{
    generate_synth, load_dataset, save_dataset, ChannelStats, Checkpoint, DataFormat, Dataset,
    Splits,
};
use prism_core::training::{
    certify_gradients, evaluate, evaluate_loss, random_small_config, tiny_config, train,
    CertifyOptions,
};
use prism_core::{ModelConfig, PrismModel, Real, Rng};

use crate::config::{Precision, RunConfig};
use crate::error::CliError;

/// Files written under `--out`, recorded for the manifest.
pub struct Output {
    dir: PathBuf,
    files: Vec<(String, usize)>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.record(name, bytes.len());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = to_json(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn record(&mut self, name: &str, bytes: usize) {
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), bytes));
    }

    pub fn finish(mut self, command: &str) -> Result<(), CliError> {
        let artifacts: Vec<_> = self
            .files
            .iter()
            .map(|(n, b)| json!({ "file": n, "bytes": b }))
            .collect();
        let manifest = json!({ "command": command, "artifacts": artifacts });
        self.write_json("manifest.json", &manifest)?;
        Ok(())
    }
}

/// Print to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numeric(format!("cannot serialise output: {e}")))
}

fn synth_dataset(cfg: &RunConfig, model: &ModelConfig) -> Result<Dataset, CliError> {
    let spec = prism_core::data::SynthSpec {
        channels: model.channels,
        length: model.length,
        ..cfg.synth.clone()
    };
    if spec.bands.len() != model.num_classes {
        return Err(CliError::Config(format!(
            "synth_bands has {} bands but num_classes is {}",
            spec.bands.len(),
            model.num_classes
        )));
    }
    Ok(generate_synth(&spec)?)
}

fn load_checked(path: &Path, cfg: &RunConfig, model: &ModelConfig) -> Result<Dataset, CliError> {
    let data = load_dataset(path, cfg.data_format)?;
    if data.channels() != model.channels || data.length() != model.length {
        return Err(CliError::Config(format!(
            "{}: samples are {}x{} but the model expects channels = {}, length = {}",
            path.display(),
            data.channels(),
            data.length(),
            model.channels,
            model.length
        )));
    }
    data.with_num_classes(model.num_classes)
        .map_err(|e| CliError::Config(format!("{}: {e} (raise num_classes)", path.display())))
}

/// The splits every command that touches data agrees on, plus the
/// standardisation statistics fitted on the training split.
fn build_splits(
    cfg: &RunConfig,
    model: &ModelConfig,
) -> Result<(Splits, Option<ChannelStats>), CliError> {
    let data = match &cfg.data {
        Some(p) => load_checked(p, cfg, model)?,
        None => synth_dataset(cfg, model)?,
    };
    let mut rng = Rng::new(cfg.split_seed);
    let splits = match &cfg.test_data {
        Some(p) => Splits::from_train_test(
            &data,
            load_checked(p, cfg, model)?,
            cfg.val_fraction,
            &mut rng,
        )?,
        None => Splits::from_single(&data, cfg.test_fraction, cfg.val_fraction, &mut rng)?,
    };
    if cfg.standardize {
        let stats = ChannelStats::fit(&splits.train);
        let standardized = Splits {
            train: stats.apply(&splits.train),
            val: stats.apply(&splits.val),
            test: stats.apply(&splits.test),
        };
        Ok((standardized, Some(stats)))
    } else {
        Ok((splits, None))
    }
}

pub fn synth(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let data = synth_dataset(cfg, &cfg.model)?;
    let name = match cfg.data_format {
        DataFormat::Csv => "synth.csv",
        DataFormat::Bin => "synth.bin",
    };
    save_dataset(out.path(name), &data, cfg.data_format)?;
    let bytes = std::fs::metadata(out.path(name))?.len() as usize;
    out.record(name, bytes);
    emit(&to_json(&json!({
        "file": name,
        "samples": data.len(),
        "channels": data.channels(),
        "length": data.length(),
        "num_classes": data.num_classes(),
    }))?);
    Ok(())
}

fn train_as<S: Real>(
    cfg: &RunConfig,
    splits: &Splits,
) -> Result<(PrismModel<f32>, prism_core::training::TrainOutcome), CliError> {
    let mut model = PrismModel::<S>::new(&cfg.model, &mut Rng::new(cfg.seed))?;
    let outcome = train(&mut model, splits, &cfg.train_config())?;
    Ok((model.cast::<f32>(), outcome))
}

pub fn train_cmd(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let (splits, stats) = build_splits(cfg, &cfg.model)?;
    let (model, outcome) = match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg, &splits)?,
        Precision::F64 => train_as::<f64>(cfg, &splits)?,
    };
    out.write("model.ckpt", &Checkpoint::from_model(&model).to_bytes())?;
    out.write_json("train_report.json", &outcome.report)?;
    if let Some(s) = stats {
        out.write_json("standardize.json", &json!({ "mean": s.mean, "std": s.std }))?;
    }
    out.write_json(
        "timings.json",
        &json!({ "epoch_seconds": outcome.epoch_seconds }),
    )?;
    let r = &outcome.report;
    emit(&to_json(&json!({
        "best_epoch": r.best_epoch,
        "best_val_loss": r.best_val_loss,
        "test_loss": r.test_loss,
        "test": r.test,
    }))?);
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load(path)?)
}

fn first_checkpoint(cfg: &RunConfig) -> Result<&PathBuf, CliError> {
    cfg.checkpoint
        .first()
        .ok_or_else(|| CliError::Config("this command needs checkpoint = <file>".into()))
}

/// Scores the checkpoint on the test split rebuilt from the data keys, with
/// the standardisation of the training split.
pub fn eval(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let path = first_checkpoint(cfg)?;
    let ckpt = load_checkpoint(path)?;
    let mut model = ckpt.to_model()?;
    let (splits, _) = build_splits(cfg, &ckpt.config)?;
    let (loss, preds) = evaluate_loss(
        &mut model,
        &splits.test,
        cfg.train.batch_size,
        cfg.train.label_smoothing,
    )?;
    let metrics = evaluate(&preds, splits.test.labels(), ckpt.config.num_classes)?;
    let report = json!({
        "checkpoint": path.display().to_string(),
        "samples": splits.test.len(),
        "loss": loss,
        "metrics": metrics,
    });
    out.write_json("metrics.json", &report)?;
    emit(&to_json(&report)?);
    Ok(())
}

pub fn complexity(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let report = complexity_report(&cfg.model, cfg.flops_batch)?;
    out.write_json("complexity.json", &report)?;
    emit(&to_json(&report)?);
    Ok(())
}

struct FilterSet {
    names: Vec<String>,
    filters: Vec<Vec<f64>>,
    distances: Vec<f64>,
}

/// Effective kernels of each checkpoint; distances are taken within a model
/// and pooled across models.
fn filter_set(paths: &[PathBuf], n_points: usize) -> Result<FilterSet, CliError> {
    let mut set = FilterSet {
        names: Vec::new(),
        filters: Vec::new(),
        distances: Vec::new(),
    };
    for (m, path) in paths.iter().enumerate() {
        let model = load_checkpoint(path)?.to_model()?;
        let per_channel = model.bank.num_filters();
        let kernels: Vec<Vec<f64>> = model
            .bank
            .kernels()
            .into_iter()
            .map(|k| k.into_iter().map(f64::from).collect())
            .collect();
        for i in 0..kernels.len() {
            set.names
                .push(format!("m{m}.ch{}.f{}", i / per_channel, i % per_channel));
        }
        set.distances
            .extend(pairwise_fft_cosine(&kernels, n_points)?.distances);
        set.filters.extend(kernels);
    }
    Ok(set)
}

fn set_label(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn spectra(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    first_checkpoint(cfg)?;
    let n = cfg.fft_points;
    let set = filter_set(&cfg.checkpoint, n)?;
    let mut report = DiversityReport::new(
        set_label(&cfg.checkpoint),
        n,
        set.filters.len(),
        set.distances,
    );
    if !cfg.compare_checkpoint.is_empty() {
        let other = filter_set(&cfg.compare_checkpoint, n)?;
        let other = DiversityReport::new(
            set_label(&cfg.compare_checkpoint),
            n,
            other.filters.len(),
            other.distances,
        );
        report = report.compare(&other)?;
    }
    out.write_json("diversity.json", &report)?;
    out.write(
        "spectra.csv",
        spectra_csv(&set.names, &set.filters, n)?.as_bytes(),
    )?;
    let summary = json!({
        "filters": report.filters,
        "pairs": report.distances.len(),
        "mean": report.mean,
        "median": report.median,
        "comparison": report.comparison,
    });
    emit(&to_json(&summary)?);
    Ok(())
}

pub fn ablate(cfg: &RunConfig, jobs: usize, out: &mut Output) -> Result<(), CliError> {
    let axis = cfg.ablation_axis()?;
    let (splits, _) = build_splits(cfg, &cfg.model)?;
    let table = run_ablation(
        &cfg.model,
        &cfg.train_config(),
        &splits,
        &axis,
        &cfg.ablate_seeds,
        jobs,
    )?;
    out.write("ablation.csv", table.to_csv().as_bytes())?;
    out.write_json("ablation.json", &table)?;
    emit(table.to_csv().trim_end());
    if let Some(r) = table.rows.iter().find(|r| r.error.is_some()) {
        return Err(CliError::Numeric(format!(
            "ablation level {} failed: {}",
            r.axis_level,
            r.error.as_deref().unwrap_or("")
        )));
    }
    Ok(())
}

/// The shipped tiny config plus `gradcheck_cases` random ones drawn from `seed`.
pub fn gradcheck(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mut rng = Rng::new(cfg.seed);
    let mut configs = vec![tiny_config()];
    configs.extend((0..cfg.gradcheck_cases).map(|_| random_small_config(&mut rng, 40)));
    let report = certify_gradients(&configs, cfg.seed, &CertifyOptions::default())?;
    out.write_json("gradcheck.json", &report)?;
    emit(&to_json(&report)?);
    if !report.passed {
        let worst = report
            .groups
            .iter()
            .filter(|g| !g.passed)
            .map(|g| format!("{} {:.3e}", g.group, g.max_rel_error))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(CliError::Numeric(format!(
            "gradient check failed (tolerance {:e}): {worst}",
            report.tolerance
        )));
    }
    Ok(())
}

//! One training run per (level, seed) along a single architectural axis.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::Splits;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, PrismModel};
use crate::numerics::Rng;
use crate::training::{train, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "levels", rename_all = "snake_case")]
pub enum AblationAxis {
    /// Each level is a full kernel-size set.
    Scales(Vec<Vec<usize>>),
    /// Each level is a filters-per-size count at the base kernel set.
    KernelsPerScale(Vec<usize>),
}

impl AblationAxis {
    pub fn len(&self) -> usize {
        match self {
            AblationAxis::Scales(l) => l.len(),
            AblationAxis::KernelsPerScale(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn level(&self, base: &ModelConfig, i: usize) -> (String, ModelConfig) {
        match self {
            AblationAxis::Scales(sets) => {
                let cfg = ModelConfig {
                    kernel_sizes: sets[i].clone(),
                    ..base.clone()
                };
                (kernel_set_label(&sets[i]), cfg)
            }
            AblationAxis::KernelsPerScale(counts) => {
                let cfg = ModelConfig {
                    filters_per_size: counts[i],
                    ..base.clone()
                };
                (counts[i].to_string(), cfg)
            }
        }
    }
}

pub fn kernel_set_label(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis_level: String,
    pub kernel_set: String,
    pub filters_per_size: usize,
    /// Test accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
    /// Mean over seeds; `None` if any run failed.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// `axis_level,kernel_set,accuracy,delta_vs_base` with accuracy in
    /// percent. The first row is the base; its delta is left empty, as is
    /// every field that a failed run could not fill.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis_level,kernel_set,accuracy,delta_vs_base\n");
        let base = self.rows.first().and_then(|r| r.accuracy);
        for (i, r) in self.rows.iter().enumerate() {
            let acc = r
                .accuracy
                .map(|a| format!("{:.2}", 100.0 * a))
                .unwrap_or_default();
            let delta = match (i, r.accuracy, base) {
                (0, _, _) => String::new(),
                (_, Some(a), Some(b)) => format!("{:+.2}", 100.0 * (a - b)),
                _ => String::new(),
            };
            out.push_str(&format!(
                "{},{},{acc},{delta}\n",
                r.axis_level, r.kernel_set
            ));
        }
        out
    }
}

/// Train one model per level and seed. The model for seed `s` is initialised
/// from `Rng::new(s)` and trained with `train_cfg.seed = s`, so results do not
/// depend on `threads`. Rows come back in level order.
pub fn run_ablation(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    splits: &Splits,
    axis: &AblationAxis,
    seeds: &[u64],
    threads: usize,
) -> Result<AblationTable> {
    if axis.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one level and one seed".into(),
        ));
    }
    let levels: Vec<(String, ModelConfig)> = (0..axis.len()).map(|i| axis.level(base, i)).collect();
    for (_, cfg) in &levels {
        cfg.validate()?;
    }
    train_cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..levels.len())
        .flat_map(|l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let run = |&(l, seed): &(usize, u64)| -> std::result::Result<f64, String> {
        let mut model =
            PrismModel::<f32>::new(&levels[l].1, &mut Rng::new(seed)).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            seed,
            ..train_cfg.clone()
        };
        let out = train(&mut model, splits, &cfg).map_err(|e| e.to_string())?;
        log::info!(
            "ablation level {} seed {seed}: {:.4}",
            levels[l].0,
            out.report.test.accuracy
        );
        Ok(out.report.test.accuracy)
    };

    let results: Vec<std::result::Result<f64, String>> = if threads <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let slots: Mutex<Vec<Option<std::result::Result<f64, String>>>> =
            Mutex::new(vec![None; jobs.len()]);
        let next = Mutex::new(0usize);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(jobs.len()) {
                scope.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("job counter");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    if i >= jobs.len() {
                        break;
                    }
                    let r = run(&jobs[i]);
                    slots.lock().expect("result slots")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("result slots")
            .into_iter()
            .map(|r| r.expect("every job ran"))
            .collect()
    };

    let rows = levels
        .iter()
        .enumerate()
        .map(|(l, (label, cfg))| {
            let mine = &results[l * seeds.len()..(l + 1) * seeds.len()];
            let accuracies: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.as_ref().ok().copied())
                .collect();
            let error = mine.iter().find_map(|r| r.as_ref().err().cloned());
            AblationRow {
                axis_level: label.clone(),
                kernel_set: kernel_set_label(&cfg.kernel_sizes),
                filters_per_size: cfg.filters_per_size,
                accuracy: error
                    .is_none()
                    .then(|| accuracies.iter().sum::<f64>() / accuracies.len() as f64),
                accuracies,
                error,
            }
        })
        .collect();
    Ok(AblationTable {
        axis: match axis {
            AblationAxis::Scales(_) => "scales".into(),
            AblationAxis::KernelsPerScale(_) => "kernels_per_scale".into(),
        },
        seeds: seeds.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, SynthSpec};

    fn setup() -> (ModelConfig, TrainConfig, Splits) {
        let spec = SynthSpec {
            per_class: 10,
            length: 32,
            ..SynthSpec::default()
        };
        let data = generate_synth(&spec).unwrap();
        let splits = Splits::from_single(&data, 0.25, 0.25, &mut Rng::new(1)).unwrap();
        let base = ModelConfig {
            length: 32,
            kernel_sizes: vec![3],
            embed_dim: 4,
            patch_len: 4,
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        (base, tc, splits)
    }

    #[test]
    fn single_level_has_empty_delta() {
        let (base, tc, splits) = setup();
        let t = run_ablation(
            &base,
            &tc,
            &splits,
            &AblationAxis::Scales(vec![vec![3]]),
            &[0],
            1,
        )
        .unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "axis_level,kernel_set,accuracy,delta_vs_base");
        assert_eq!(lines.len(), 2);
        assert!(
            lines[1].starts_with("3,3,") && lines[1].ends_with(','),
            "{}",
            lines[1]
        );
    }

    #[test]
    fn threads_do_not_change_results() {
        let (base, tc, splits) = setup();
        let axis = AblationAxis::KernelsPerScale(vec![1, 2]);
        let a = run_ablation(&base, &tc, &splits, &axis, &[0, 1], 1).unwrap();
        let b = run_ablation(&base, &tc, &splits, &axis, &[0, 1], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows[1].axis_level, "2");
    }
}

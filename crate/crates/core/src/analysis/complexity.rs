//! Closed-form parameter and FLOP counts.
//!
//! Counting convention: every multiply, add, subtract, divide and square root
//! executed by the inference forward pass is one FLOP, so a multiply-accumulate
//! is 2. Initialising an accumulator (to zero or to a bias) is free, as are
//! comparisons (ReLU). The filter bank is counted as a full `T * k` MAC sweep
//! per filter, including taps that land on zero padding. Kernel
//! normalisation is excluded since it does not depend on the batch.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filterbank::stored_len;
use crate::heads::HeadKind;
use crate::model::ModelConfig;

pub const FLOP_CONVENTION: &str = "1 MAC = 2 FLOPs; accumulator init and comparisons free; \
     filter bank counts T*k MACs per filter including zero padding; kernel normalisation excluded";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symbols {
    pub batch: usize,
    pub channels: usize,
    pub length: usize,
    pub kernel_sizes: Vec<usize>,
    pub n_k: usize,
    pub n_f: usize,
    pub filters: usize,
    pub mean_kernel: f64,
    pub patch_len: usize,
    pub patches: usize,
    pub embed_dim: usize,
    pub classes: usize,
    pub hidden: Option<usize>,
    pub symmetric: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub convention: String,
    pub symbols: Symbols,
    pub stages: Vec<StageCount>,
    pub total_params: u64,
    pub total_flops: u64,
    pub mflops: f64,
}

impl ComplexityReport {
    pub fn stage(&self, name: &str) -> Option<&StageCount> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

pub const STAGES: [&str; 4] = ["filter_bank", "patch_embedding", "pooling_norm", "head"];

fn head_counts(cfg: &ModelConfig) -> (u64, u64) {
    let input = (cfg.channels * cfg.embed_dim) as u64;
    let k = cfg.num_classes as u64;
    match cfg.head {
        HeadKind::Linear => (input * k + k, 2 * input * k),
        HeadKind::Mlp { hidden } => {
            let h = hidden as u64;
            (input * h + h + h * k + k, 2 * input * h + 2 * h * k)
        }
    }
}

/// Parameter counts per stage; equal to the number of scalars in a
/// constructed model.
pub fn count_params(cfg: &ModelConfig) -> Result<Vec<StageCount>> {
    cfg.validate()?;
    let c = cfg.channels as u64;
    let n_f = cfg.filters_per_size as u64;
    let f = cfg.num_filters() as u64;
    let (p, d) = (cfg.patch_len as u64, cfg.embed_dim as u64);
    let stored: u64 = cfg
        .kernel_sizes
        .iter()
        .map(|&k| stored_len(k, cfg.symmetric) as u64)
        .sum();
    let params = [
        c * n_f * stored,
        c * (f * p + f * d + d),
        2 * c * d,
        head_counts(cfg).0,
    ];
    Ok(STAGES
        .iter()
        .zip(params)
        .map(|(s, n)| StageCount {
            stage: s.to_string(),
            params: n,
            flops: 0,
        })
        .collect())
}

/// Forward FLOPs per stage for a batch of `batch` samples.
pub fn count_flops(cfg: &ModelConfig, batch: usize) -> Result<Vec<u64>> {
    cfg.validate()?;
    let b = batch as u64;
    let c = cfg.channels as u64;
    let t = cfg.length as u64;
    let n_f = cfg.filters_per_size as u64;
    let f = cfg.num_filters() as u64;
    let (p, d) = (cfg.patch_len as u64, cfg.embed_dim as u64);
    let l = cfg.patches() as u64;
    let sum_k: u64 = cfg.kernel_sizes.iter().map(|&k| k as u64).sum();
    let bank = 2 * c * n_f * t * sum_k;
    let embed = 2 * c * f * l * (p + d);
    // LayerNorm: 8D + 5 per token; pooling: L*D adds and D divides.
    let norm_pool = c * (l * (8 * d + 5) + l * d + d);
    let head = head_counts(cfg).1;
    Ok([bank, embed, norm_pool, head]
        .iter()
        .map(|v| v * b)
        .collect())
}

pub fn complexity_report(cfg: &ModelConfig, batch: usize) -> Result<ComplexityReport> {
    let mut stages = count_params(cfg)?;
    for (s, fl) in stages.iter_mut().zip(count_flops(cfg, batch)?) {
        s.flops = fl;
    }
    let total_params = stages.iter().map(|s| s.params).sum();
    let total_flops: u64 = stages.iter().map(|s| s.flops).sum();
    let n_k = cfg.kernel_sizes.len();
    Ok(ComplexityReport {
        convention: FLOP_CONVENTION.into(),
        symbols: Symbols {
            batch,
            channels: cfg.channels,
            length: cfg.length,
            kernel_sizes: cfg.kernel_sizes.clone(),
            n_k,
            n_f: cfg.filters_per_size,
            filters: cfg.num_filters(),
            mean_kernel: cfg.kernel_sizes.iter().sum::<usize>() as f64 / n_k as f64,
            patch_len: cfg.patch_len,
            patches: cfg.patches(),
            embed_dim: cfg.embed_dim,
            classes: cfg.num_classes,
            hidden: match cfg.head {
                HeadKind::Linear => None,
                HeadKind::Mlp { hidden } => Some(hidden),
            },
            symmetric: cfg.symmetric,
        },
        stages,
        total_params,
        total_flops,
        mflops: total_flops as f64 / 1e6,
    })
}

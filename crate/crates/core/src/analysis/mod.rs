//! Complexity accounting, spectral diversity, rank statistics and ablations.

mod ablation;
mod complexity;
mod spectrum;
mod stats;

pub use ablation::{kernel_set_label, run_ablation, AblationAxis, AblationRow, AblationTable};
pub use complexity::{
    complexity_report, count_flops, count_params, ComplexityReport, StageCount, Symbols,
    FLOP_CONVENTION, STAGES,
};
pub use spectrum::{
    magnitude_spectrum, median, pairwise_fft_cosine, spectra_csv, Comparison, DiversityReport,
    PairwiseDistances, DEFAULT_FFT_POINTS,
};
pub use stats::{mann_whitney_u, midranks, MannWhitney, EXACT_LIMIT};

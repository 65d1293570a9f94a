//! Datasets, synthetic tasks, file formats and checkpoints.

mod checkpoint;
mod dataset;
mod io;
mod synth;

pub use checkpoint::{Checkpoint, ManifestEntry, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dataset::{split_indices, ChannelStats, Dataset, Splits, STANDARDIZE_EPS};
pub use io::{load_dataset, parse_csv, parse_raw, save_dataset, to_csv, to_raw, DataFormat};
pub use synth::{generate_synth, SynthSpec};

//! Datasets, normalization, muting and the synthetic sensorimotor generator.

mod augment;
mod dataset;
mod mask;
pub mod synthetic;

pub use augment::{augment, kinds_for, AugmentKind, AugmentedBatch};
pub use dataset::{load_csv, read_raw_csv, write_raw_csv, Dataset, NormalizationStats, Provenance};
pub use mask::{apply_mask, MaskSpec, SENTINEL};
pub use synthetic::{generate_raw, generate_synthetic, SyntheticParams};

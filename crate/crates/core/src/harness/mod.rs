//! Experiment harness: run configuration, dataset generation and storage,
//! checkpointing, evaluation, and report generation.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod parallel;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, TrainingMeta};
pub use config::{AttackSection, ConfigError, DatasetConfig, RunConfig};
pub use dataset::{
    generate, load as load_dataset, save as save_dataset, Dataset, DatasetError, DatasetManifest,
};
pub use eval::{eval_adversarial, evaluate, AdvRow, EvalMode, EvalReport};

/// Independent per-item random stream derived from a master seed; the mix is
/// injective in `index` for a fixed master, so items never share a stream
/// regardless of generation order or thread count.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(index.wrapping_add(1))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Jamming-identification workbench: signal synthesis, spectrogram features,
//! a differential-transformer classifier with an in-crate autodiff engine,
//! FGSM attacks and randomized-masking / consistency defenses.

pub mod attack;
pub mod diffnet;
pub mod harness;
pub mod siggen;
pub mod tensor;
pub mod training;
pub mod tfmap;

pub use tensor::{Graph, NodeId, ParamId, ParamStore, Scalar, Tensor, TensorError};

pub use attack::{fgsm, fgsm_from_pixel_grad};
pub use diffnet::{count_flops, DiffTransformer, ModelConfig};
pub use harness::{
    derive_seed, eval_adversarial, evaluate, generate, load_checkpoint, load_dataset,
    save_checkpoint, save_dataset, AttackSection, Dataset, DatasetConfig, EvalMode, EvalReport,
    RunConfig, TrainingMeta,
};
pub use siggen::JammingType;
pub use tfmap::{spectrogram_of, Spectrogram};
pub use training::{
    train, ConsistentConfig, EpochStats, MaskStrategy, MaskedConfig, TrainConfig, TrainStrategy,
};

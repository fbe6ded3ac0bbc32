//! Data IO, synthetic data, augmentation, training and evaluation.

pub mod augment;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod model_io;
pub mod pnm;
pub mod synth;
pub mod train;

pub use augment::{augment, flip_horizontal, rescale, AugmentConfig};
pub use config::RunConfig;
pub use data::{load_images, load_maps, load_samples, save_map, save_samples, Sample, SavedMap};
pub use evaluate::{evaluate, evaluate_maps, predict_all, threads_from_env};
pub use model_io::{load_model, save_model};
pub use synth::synth_generate;
pub use train::{train, train_model, EpochLog, TrainOutcome};

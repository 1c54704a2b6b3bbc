//! Image files, synthetic data, dataset layout, checkpoints and configuration.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod pnm;

pub use checkpoint::{load_network, load_niqe_model, save_network, save_niqe_model, Checkpoint, Section};
pub use config::{parse_config, Config, ScheduleConfig};
pub use corpus::{gen_clean_corpus, synth_degrade, DegradationSpec};
pub use dataset::{
    list_images, load_dir, load_pairs, save_dir, DataConfig, Dataset, DatasetLayout, PairedSet, SyntheticBenchmark,
};
pub use pnm::{encode_pnm, load_image, quantize8, save_image};

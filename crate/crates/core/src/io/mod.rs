//! On-disk formats: the tensor container, checkpoints, run configuration
//! and PNG export.

mod checkpoint;
mod config;
mod container;
mod image;

pub use checkpoint::Checkpoint;
pub use config::{ActivationName, DataSection, MaskSection, NetSection, RunConfig, SkipName, TrainSection};
pub use container::{Container, Entry, TensorData, MAGIC, VERSION};
pub use image::{diff_to_gray8, encode_png, to_gray8, write_png};

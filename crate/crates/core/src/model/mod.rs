//! Feedforward ReLU networks, their training and on-disk formats.

mod conv;
pub mod data;
pub mod io;
mod layer;
mod network;
pub mod train;

pub use data::{load_idx, load_idx_dir, load_idx_images, load_idx_labels, Dataset};
pub use io::{load_model, save_model};
pub use layer::{Conv2d, Dense, Layer, MaxPool2d};
pub(crate) use network::one_hot;
pub use network::{ForwardTrace, Network};
pub use train::{train_small_cnn, Architecture, EpochStats, TrainConfig, TrainOutcome};

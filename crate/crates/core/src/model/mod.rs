//! The BiGRU-CRF segmentation model and its training loop.

pub mod crf;
pub mod segmenter;
pub mod train;
pub mod vocab;

pub use segmenter::{Batch, SegModel};
pub use train::{predict, train_main, Prediction, TrainLog};
pub use vocab::Vocab;

//! Signal-to-diagnosis toolkit for multichannel EEG: ingestion, STFT
//! spectrograms, CNN classification, per-class generative augmentation
//! (VAE and WGAN-GP), synthetic-data auditing, metrics and LIME
//! explanations.

pub mod cnn;
pub mod eeg;
pub mod eval;
pub mod gen;
pub mod lime;
pub mod pipeline;
pub mod rng;
pub mod spectrogram;
pub mod tensor;

pub use tensor::{Element, Parameter, TensorError, TensorResult};

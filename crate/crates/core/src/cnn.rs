//! The compact spectrogram classifier: four conv/pool blocks into a
//! two-logit head, 1,289,218 trainable parameters at the reference
//! configuration.

use crate::eeg::Label;
use crate::rng::seeded;
use crate::spectrogram::Spectrogram;
use crate::tensor::{
    Activation, AdamConfig, Element, Init, LayerSpec, Network, Padding, Tape, TensorError,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const INPUT_SIZE: usize = 128;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug)]
pub enum ClassifierError {
    EmptyDataset,
    /// Training data must contain both classes.
    SingleClassDataset,
    WrongImageShape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    Tensor(TensorError),
    Io(std::io::Error),
}

impl fmt::Display for ClassifierError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierError::EmptyDataset => write!(f, "dataset is empty"),
            ClassifierError::SingleClassDataset => {
                write!(f, "training data holds a single class")
            }
            ClassifierError::WrongImageShape { expected, actual } => {
                write!(f, "expected {expected:?} images, got {actual:?}")
            }
            ClassifierError::Tensor(e) => write!(f, "{e}"),
            ClassifierError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ClassifierError {}

impl From<TensorError> for ClassifierError {
    fn from(e: TensorError) -> Self {
        ClassifierError::Tensor(e)
    }
}

impl From<std::io::Error> for ClassifierError {
    fn from(e: std::io::Error) -> Self {
        ClassifierError::Io(e)
    }
}

/// Data-driven description of a classifier stack: conv blocks
/// (channels, pooled) followed by dense widths, relu throughout, linear
/// two-logit head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub dense_widths: Vec<usize>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            input_size: INPUT_SIZE,
            conv_channels: vec![32, 64, 128, 128],
            conv_kernel: 3,
            dense_widths: vec![128],
        }
    }
}

impl CnnSpec {
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut channels = 1usize;
        let mut side = self.input_size;
        for &out in &self.conv_channels {
            layers.push(LayerSpec::Conv2d {
                kernel: (self.conv_kernel, self.conv_kernel),
                in_channels: channels,
                out_channels: out,
                stride: (1, 1),
                padding: Padding::Same,
                init: Init::HeUniform,
            });
            layers.push(LayerSpec::Activation(Activation::Relu));
            layers.push(LayerSpec::MaxPool2d { size: (2, 2) });
            channels = out;
            side /= 2;
        }
        layers.push(LayerSpec::Flatten);
        let mut dim = side * side * channels;
        for &width in &self.dense_widths {
            layers.push(LayerSpec::Dense {
                in_dim: dim,
                out_dim: width,
                init: Init::HeUniform,
            });
            layers.push(LayerSpec::Activation(Activation::Relu));
            dim = width;
        }
        layers.push(LayerSpec::Dense {
            in_dim: dim,
            out_dim: NUM_CLASSES,
            init: Init::GlorotUniform,
        });
        layers
    }
}

#[derive(Debug, Clone)]
pub struct CnnClassifier<E: Element> {
    pub network: Network<E>,
    pub spec: CnnSpec,
}

/// The reference stack on 128x128 inputs.
pub fn build_proposed_cnn<E: Element>(seed: u64) -> CnnClassifier<E> {
    build_cnn(&CnnSpec::default(), seed)
}

pub fn build_cnn<E: Element>(spec: &CnnSpec, seed: u64) -> CnnClassifier<E> {
    let network = Network::build(&spec.layers(), &mut seeded(seed)).expect("valid stack");
    CnnClassifier {
        network,
        spec: spec.clone(),
    }
}

impl<E: Element> CnnClassifier<E> {
    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Optional early stop: end once training accuracy reaches 100% and the
    /// best training loss has improved by less than `tol` over `window`
    /// epochs.
    pub convergence: Option<ConvergenceRule>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvergenceRule {
    pub window: usize,
    pub tol: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            seed,
            convergence: None,
        }
    }

    /// Run until converged: 100% training accuracy and loss improvement
    /// below 1e-4 over 10 epochs, capped at `max_epochs`.
    pub fn to_convergence(learning_rate: f64, batch_size: usize, max_epochs: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate,
            batch_size,
            epochs: max_epochs,
            seed,
            convergence: Some(ConvergenceRule {
                window: 10,
                tol: 1e-4,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Pack spectrogram images into an NHWC batch buffer.
pub fn images_to_batch<E: Element>(
    images: &[&Spectrogram],
    side: usize,
) -> Result<(Vec<E>, Vec<usize>), ClassifierError> {
    let mut data = Vec::with_capacity(images.len() * side * side);
    let mut labels = Vec::with_capacity(images.len());
    for img in images {
        if (img.freq_bins, img.time_frames) != (side, side) {
            return Err(ClassifierError::WrongImageShape {
                expected: (side, side),
                actual: (img.freq_bins, img.time_frames),
            });
        }
        data.extend(img.values.iter().map(|&v| E::of_f32(v)));
        labels.push(img.label.class_index());
    }
    Ok((data, labels))
}

/// Mean loss and accuracy of the model on `images`, eval mode.
pub fn evaluate<E: Element>(
    model: &CnnClassifier<E>,
    images: &[Spectrogram],
) -> Result<(f64, f64), ClassifierError> {
    if images.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let side = model.spec.input_size;
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for chunk in images.chunks(64) {
        let refs: Vec<&Spectrogram> = chunk.iter().collect();
        let (data, labels) = images_to_batch::<E>(&refs, side)?;
        let mut tape = Tape::new();
        let x = tape.leaf(vec![chunk.len(), side, side, 1], data);
        let pass = model.network.forward_eval(&mut tape, x)?;
        let loss = tape.softmax_cross_entropy(pass.output, &labels)?;
        total_loss += tape.scalar(loss).as_f64() * chunk.len() as f64;
        let logits = tape.data(pass.output);
        for (i, &label) in labels.iter().enumerate() {
            let row = &logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            let pred = if row[1] > row[0] { 1 } else { 0 };
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok((
        total_loss / images.len() as f64,
        correct as f64 / images.len() as f64,
    ))
}

/// Per-class probabilities, rows summing to one. Eval mode, deterministic,
/// batch-size independent.
pub fn predict<E: Element>(
    model: &CnnClassifier<E>,
    images: &[Spectrogram],
) -> Result<Vec<[f64; NUM_CLASSES]>, ClassifierError> {
    let side = model.spec.input_size;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(64) {
        let refs: Vec<&Spectrogram> = chunk.iter().collect();
        let (data, _) = images_to_batch::<E>(&refs, side)?;
        let mut tape = Tape::new();
        let x = tape.leaf(vec![chunk.len(), side, side, 1], data);
        let pass = model.network.forward_eval(&mut tape, x)?;
        let probs = tape.softmax_values(pass.output);
        for row in probs.chunks(NUM_CLASSES) {
            out.push([row[0].as_f64(), row[1].as_f64()]);
        }
    }
    Ok(out)
}

/// Train on `train`, tracking train metrics from the training batches and
/// test metrics from a full eval pass per epoch. Shuffling, initialization
/// and every stochastic choice derive from `cfg.seed`.
pub fn train_classifier<E: Element>(
    model: &mut CnnClassifier<E>,
    train: &[Spectrogram],
    test: &[Spectrogram],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let first = train[0].label;
    if train.iter().all(|s| s.label == first) {
        return Err(ClassifierError::SingleClassDataset);
    }
    let side = model.spec.input_size;
    // learning rate 0 freezes the parameters but still records history
    let adam = (cfg.learning_rate > 0.0).then(|| AdamConfig::new(cfg.learning_rate));
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history: Vec<EpochStats> = Vec::with_capacity(cfg.epochs);
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut running_loss = 0.0;
        let mut running_correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&Spectrogram> = batch.iter().map(|&i| &train[i]).collect();
            let (data, labels) = images_to_batch::<E>(&refs, side)?;
            let mut tape = Tape::new();
            let x = tape.leaf(vec![batch.len(), side, side, 1], data);
            let pass = model.network.forward_train(&mut tape, x, &mut rng)?;
            let loss = tape.softmax_cross_entropy(pass.output, &labels)?;
            running_loss += tape.scalar(loss).as_f64() * batch.len() as f64;
            let logits = tape.data(pass.output);
            for (i, &label) in labels.iter().enumerate() {
                let row = &logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
                if (row[1] > row[0]) == (label == 1) {
                    running_correct += 1;
                }
            }
            if let Some(adam) = &adam {
                model.network.accumulate_grads(&mut tape, &[&pass], loss)?;
                model.network.adam_step(adam)?;
            }
        }
        let train_loss = running_loss / train.len() as f64;
        let train_accuracy = running_correct as f64 / train.len() as f64;
        let (test_loss, test_accuracy) = if test.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(model, test)?
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
        });

        if let Some(rule) = cfg.convergence {
            if train_loss < best_loss - rule.tol {
                best_loss = train_loss;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if train_accuracy >= 1.0 && since_best >= rule.window {
                break;
            }
        }
    }
    Ok(history)
}

/// CSV history: epoch, train_loss, train_acc, test_loss, test_acc.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), ClassifierError> {
    let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.train_accuracy, h.test_loss, h.test_accuracy
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Label ordering used by the two logits.
pub fn class_labels() -> [Label; NUM_CLASSES] {
    [Label::Norm, Label::Sch]
}

pub fn save_classifier<E: Element>(
    path: &Path,
    model: &CnnClassifier<E>,
    seed: u64,
) -> Result<(), crate::tensor::CheckpointError> {
    crate::tensor::save_checkpoint(
        path,
        "cnn",
        seed,
        &[("network", &model.network)],
        serde_json::json!({ "spec": model.spec }),
    )
}

pub fn load_classifier<E: Element>(
    path: &Path,
) -> Result<CnnClassifier<E>, crate::tensor::CheckpointError> {
    let (descriptor, mut networks) = crate::tensor::load_checkpoint::<E>(path)?;
    if descriptor.architecture != "cnn" {
        return Err(crate::tensor::CheckpointError::ArchitectureMismatch {
            expected: "cnn".into(),
            actual: descriptor.architecture,
        });
    }
    let spec: CnnSpec = serde_json::from_value(descriptor.extra["spec"].clone())
        .map_err(|e| crate::tensor::CheckpointError::BadDescriptor(e.to_string()))?;
    Ok(CnnClassifier {
        network: networks.remove(0),
        spec,
    })
}

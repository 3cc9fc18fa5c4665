//! Plain minibatch SGD with softmax cross-entropy on the logits.
//!
//! Samples are processed sequentially in a seeded order, so a fixed seed and
//! dataset give bit-identical weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use super::io::quantize_to_f32;
use super::layer::Layer;
use super::network::Network;
use crate::error::{Error, Result};
use crate::numerics::gemm;

#[derive(Clone, Debug, PartialEq)]
pub enum Architecture {
    /// The 6-convolution MNIST network, see [`Network::mnist_cnn`].
    MnistCnn,
    /// Flatten followed by dense ReLU layers of the given widths.
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fraction of the dataset held out for evaluation.
    pub holdout_fraction: f64,
    /// Training fails if held-out accuracy ends below this.
    pub min_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::MnistCnn,
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 7,
            holdout_fraction: 0.2,
            min_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochStats>,
    pub train: Dataset,
    pub holdout: Dataset,
}

impl TrainOutcome {
    pub fn final_holdout_accuracy(&self) -> f64 {
        self.history.last().map_or(0.0, |s| s.holdout_accuracy)
    }
}

/// Gradient buffers for one parametric layer.
struct ParamGrad {
    weight: Vec<f64>,
    bias: Option<Vec<f64>>,
}

fn zero_grads(net: &Network) -> Vec<Option<ParamGrad>> {
    net.layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => Some(ParamGrad {
                weight: vec![0.0; d.weight.len()],
                bias: d.bias.as_ref().map(|b| vec![0.0; b.len()]),
            }),
            Layer::Conv2d(c) => Some(ParamGrad {
                weight: vec![0.0; c.weight.len()],
                bias: c.bias.as_ref().map(|b| vec![0.0; b.len()]),
            }),
            _ => None,
        })
        .collect()
}

/// Softmax cross-entropy loss and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

fn accumulate_sample(
    net: &Network,
    data: &Dataset,
    index: usize,
    grads: &mut [Option<ParamGrad>],
) -> Result<(f64, bool)> {
    let trace = net.forward(&data.image(index))?;
    let logits = trace.logits().data();
    let label = data.labels[index];
    let correct = trace.logits().argmax() == label;
    let (loss, mut g) = softmax_cross_entropy(logits, label);
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let input = trace.layer_input(i);
        match (layer, grads[i].as_mut()) {
            (Layer::Dense(d), Some(pg)) => {
                gemm(
                    d.outputs(),
                    1,
                    d.inputs(),
                    1.0,
                    &g,
                    false,
                    input.data(),
                    false,
                    1.0,
                    &mut pg.weight,
                );
                if let Some(b) = pg.bias.as_mut() {
                    b.iter_mut().zip(&g).for_each(|(b, g)| *b += g);
                }
            }
            (Layer::Conv2d(c), Some(pg)) => {
                let geo = c.geometry(input.shape())?;
                let cols = geo.im2col(input.data());
                geo.accumulate_param_grads(&cols, &g, &mut pg.weight, pg.bias.as_deref_mut());
            }
            _ => {}
        }
        if i > 0 {
            g = layer.backward_input(input, &g)?;
        }
    }
    Ok((loss, correct))
}

fn apply_update(net: &mut Network, grads: &mut [Option<ParamGrad>], step: f64) {
    for (layer, pg) in net.layers_mut().iter_mut().zip(grads.iter_mut()) {
        let Some(pg) = pg.as_mut() else { continue };
        let (w, b) = match layer {
            Layer::Dense(d) => (&mut d.weight, d.bias.as_mut()),
            Layer::Conv2d(c) => (&mut c.weight, c.bias.as_mut()),
            _ => continue,
        };
        for (p, g) in w.data_mut().iter_mut().zip(pg.weight.iter_mut()) {
            *p -= step * *g;
            *g = 0.0;
        }
        if let (Some(b), Some(gb)) = (b, pg.bias.as_mut()) {
            for (p, g) in b.data_mut().iter_mut().zip(gb.iter_mut()) {
                *p -= step * *g;
                *g = 0.0;
            }
        }
    }
}

pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        if net.logits(&data.image(i))?.argmax() == data.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains `net` in place on `train`, evaluating on `holdout` after every epoch.
pub fn train_network(
    net: &mut Network,
    train: &Dataset,
    holdout: &Dataset,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if config.batch_size == 0 || config.epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::invalid("epochs, batch size and learning rate must be positive"));
    }
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut grads = zero_grads(net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut history = Vec::with_capacity(config.epochs);
    let mut losses = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let fail = |reason: String, losses: &Vec<f64>| Error::TrainingFailure {
                    reason,
                    loss_history: losses.clone(),
                };
                let (loss, ok) = accumulate_sample(net, train, i, &mut grads)
                    .map_err(|e| fail(format!("epoch {epoch}: {e}"), &losses))?;
                if !loss.is_finite() {
                    return Err(fail(format!("loss diverged in epoch {epoch}"), &losses));
                }
                loss_sum += loss;
                correct += usize::from(ok);
            }
            apply_update(net, &mut grads, config.learning_rate / batch.len() as f64);
        }
        let mean_loss = loss_sum / train.len() as f64;
        losses.push(mean_loss);
        let stats = EpochStats {
            epoch,
            mean_loss,
            train_accuracy: correct as f64 / train.len() as f64,
            holdout_accuracy: accuracy(net, holdout).map_err(|e| Error::TrainingFailure {
                reason: format!("weights became non-finite: {e}"),
                loss_history: losses.clone(),
            })?,
        };
        progress(&stats);
        history.push(stats);
    }

    quantize_to_f32(net);
    if let Some(min) = config.min_accuracy {
        let acc = history.last().map_or(0.0, |s| s.holdout_accuracy);
        if acc < min {
            return Err(Error::TrainingFailure {
                reason: format!("held-out accuracy {acc:.4} below required {min:.4}"),
                loss_history: losses,
            });
        }
    }
    Ok(history)
}

/// Splits the dataset, builds the configured architecture and trains it.
pub fn train_small_cnn(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_small_cnn_with_progress(dataset, config, |_| {})
}

pub fn train_small_cnn_with_progress(
    dataset: &Dataset,
    config: &TrainConfig,
    progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let (train, holdout) = dataset.split(config.holdout_fraction, config.seed);
    let classes = dataset.classes.max(2);
    let mut network = match &config.architecture {
        Architecture::MnistCnn => {
            if dataset.sample_shape != [1, 28, 28] || classes > 10 {
                return Err(Error::invalid(format!(
                    "the MNIST CNN needs [1, 28, 28] samples and at most 10 classes, got {:?}",
                    dataset.sample_shape
                )));
            }
            Network::mnist_cnn(config.seed)
        }
        Architecture::Mlp { hidden } => Network::image_mlp(&dataset.sample_shape, hidden, classes, config.seed)?,
    };
    let history = train_network(&mut network, &train, &holdout, config, progress)?;
    Ok(TrainOutcome {
        network,
        history,
        train,
        holdout,
    })
}

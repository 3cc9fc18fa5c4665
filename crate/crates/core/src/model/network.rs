use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{Conv2d, Dense, Layer, MaxPool2d};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A feedforward network `φ: R^d → R^h` ending in raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Activation shapes, `layers.len() + 1` entries.
    shapes: Vec<Vec<usize>>,
}

/// Activations of one forward pass: `activations[0]` is the input and
/// `activations[i + 1]` is the output of layer `i`.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("trace is never empty")
    }

    /// Input of layer `i`.
    pub fn layer_input(&self, i: usize) -> &Tensor {
        &self.activations[i]
    }
}

impl Network {
    pub fn new(input_shape: impl Into<Vec<usize>>, layers: Vec<Layer>) -> Result<Self> {
        let input_shape = input_shape.into();
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid("input shape must have positive extents"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::invalid(format!("layer {i} ({}): {e}", layer.kind_name())))?;
            shapes.push(next);
        }
        if shapes.last().unwrap().len() != 1 {
            return Err(Error::invalid(format!(
                "network must end in a flat logit vector, got shape {:?}",
                shapes.last().unwrap()
            )));
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap()[0]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Shape of the activation entering layer `i` (`i == layers.len()` gives the output).
    pub fn activation_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Indices of dense/conv layers, in forward order.
    pub fn parametric_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_parametric())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardTrace> {
        x.ensure_shape(&self.input_shape)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap())?;
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        x.ensure_shape(&self.input_shape)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.forward(&a)?;
        }
        Ok(a)
    }

    /// Gradient of `seedᵀ φ(x)` with respect to `x`, reusing a forward trace.
    pub fn backward(&self, trace: &ForwardTrace, seed: &[f64]) -> Result<Tensor> {
        if seed.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.output_dim()],
                actual: vec![seed.len()],
            });
        }
        let mut g = seed.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward_input(trace.layer_input(i), &g)?;
        }
        Tensor::new(self.input_shape.clone(), g)
    }

    /// `∂z_j/∂x`. Max-pool routes gradient to the first maximum of each window.
    pub fn input_gradient(&self, x: &Tensor, target: usize) -> Result<Tensor> {
        self.check_target(target)?;
        let trace = self.forward(x)?;
        self.backward(&trace, &one_hot(self.output_dim(), target))
    }

    pub(crate) fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.output_dim() {
            return Err(Error::invalid(format!(
                "target {target} out of range for {} outputs",
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// The small MNIST CNN: three 8-filter convolutions (3×3, 3×3, 5×5),
    /// 2×2 max-pool, three 16-filter convolutions (5×5, 3×3, 3×3), 2×2
    /// max-pool, flatten and a dense layer to 10 logits. Padding keeps the
    /// spatial size through each convolution. He-normal weights, zero biases.
    pub fn mnist_cnn(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut channels = 1;
        let blocks: [&[usize]; 2] = [&[3, 3, 5], &[5, 3, 3]];
        for (filters, kernels) in [8usize, 16].into_iter().zip(blocks) {
            for &k in kernels {
                layers.push(Layer::Conv2d(random_conv(&mut rng, filters, channels, k, true)));
                layers.push(Layer::Relu);
                channels = filters;
            }
            layers.push(Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 }));
        }
        layers.push(Layer::Flatten);
        layers.push(Layer::Dense(random_dense(&mut rng, 10, 16 * 7 * 7, true)));
        Network::new(vec![1, 28, 28], layers).expect("architecture composes")
    }

    /// Fully connected ReLU network on a flat input.
    pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize, bias: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(Layer::Dense(random_dense(&mut rng, h, prev, bias)));
            layers.push(Layer::Relu);
            prev = h;
        }
        layers.push(Layer::Dense(random_dense(&mut rng, outputs, prev, bias)));
        Network::new(vec![inputs], layers)
    }

    /// Same as [`mlp`](Self::mlp) but for image-shaped inputs, prefixed by a flatten.
    pub fn image_mlp(input_shape: &[usize], hidden: &[usize], outputs: usize, seed: u64) -> Result<Self> {
        let d: usize = input_shape.iter().product();
        let flat = Network::mlp(d, hidden, outputs, true, seed)?;
        let mut layers = vec![Layer::Flatten];
        layers.extend(flat.layers);
        Network::new(input_shape.to_vec(), layers)
    }
}

pub(crate) fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

fn he_normal(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

pub(crate) fn random_dense(rng: &mut impl Rng, out: usize, inp: usize, bias: bool) -> Dense {
    let w = Tensor::new(vec![out, inp], he_normal(rng, inp, out * inp)).expect("finite");
    Dense {
        weight: w,
        bias: bias.then(|| Tensor::zeros(vec![out])),
    }
}

pub(crate) fn random_conv(rng: &mut impl Rng, filters: usize, channels: usize, k: usize, bias: bool) -> Conv2d {
    let fan_in = channels * k * k;
    let w = Tensor::new(vec![filters, channels, k, k], he_normal(rng, fan_in, filters * fan_in)).expect("finite");
    Conv2d {
        weight: w,
        bias: bias.then(|| Tensor::zeros(vec![filters])),
        stride: 1,
        padding: k / 2,
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{one_hot, Network};
use crate::numerics::Tensor;

pub fn gradient_x_input(net: &Network, x: &Tensor, target: usize) -> Result<Tensor> {
    let g = net.input_gradient(x, target)?;
    x.zip_map(&g, |a, b| a * b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothGradParams {
    /// Standard deviation `s` of the Gaussian input noise.
    pub noise: f64,
    pub samples: usize,
    pub seed: u64,
    /// Multiply the averaged gradient by the input. Off by default.
    pub times_input: bool,
}

impl SmoothGradParams {
    pub fn new(noise: f64, samples: usize, seed: u64) -> Self {
        SmoothGradParams {
            noise,
            samples,
            seed,
            times_input: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 || !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid(
                "smoothgrad needs samples ≥ 1 and a finite noise std ≥ 0",
            ));
        }
        Ok(())
    }
}

/// The noisy inputs `x + η`, `η ~ N(0, s²I)`, in draw order.
fn noisy_inputs(x: &Tensor, p: &SmoothGradParams) -> Vec<Tensor> {
    if p.noise == 0.0 {
        return vec![x.clone()];
    }
    let normal = Normal::new(0.0, p.noise).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (0..p.samples)
        .map(|_| {
            let data = x.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
            Tensor::new(x.shape().to_vec(), data).expect("finite noise")
        })
        .collect()
}

fn finish(x: &Tensor, sum: Vec<f64>, count: usize, times_input: bool) -> Result<Tensor> {
    let mean = Tensor::new(x.shape().to_vec(), sum)?.scale(1.0 / count as f64);
    if times_input {
        x.zip_map(&mean, |a, b| a * b)
    } else {
        Ok(mean)
    }
}

/// Mean gradient of `z_j` under Gaussian input noise. With `s = 0` this is
/// exactly the plain gradient.
pub fn smoothgrad(net: &Network, x: &Tensor, target: usize, p: &SmoothGradParams) -> Result<Tensor> {
    p.validate()?;
    net.check_target(target)?;
    let inputs = noisy_inputs(x, p);
    let mut sum = vec![0.0; x.len()];
    for xi in &inputs {
        let g = net.input_gradient(xi, target)?;
        sum.iter_mut().zip(g.data()).for_each(|(s, g)| *s += g);
    }
    finish(x, sum, inputs.len(), p.times_input)
}

/// SmoothGrad for every output, sharing noise draws across outputs.
pub fn smoothgrad_all(net: &Network, x: &Tensor, p: &SmoothGradParams) -> Result<Vec<Tensor>> {
    p.validate()?;
    let h = net.output_dim();
    let inputs = noisy_inputs(x, p);
    let mut sums = vec![vec![0.0; x.len()]; h];
    for xi in &inputs {
        let trace = net.forward(xi)?;
        for (j, sum) in sums.iter_mut().enumerate() {
            let g = net.backward(&trace, &one_hot(h, j))?;
            sum.iter_mut().zip(g.data()).for_each(|(s, g)| *s += g);
        }
    }
    sums.into_iter()
        .map(|s| finish(x, s, inputs.len(), p.times_input))
        .collect()
}

fn ig_points(x: &Tensor, baseline: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
    if steps == 0 {
        return Err(Error::invalid("integrated gradients needs steps ≥ 1"));
    }
    baseline.ensure_shape(x.shape())?;
    (1..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            baseline.zip_map(x, |b, v| b + t * (v - b))
        })
        .collect()
}

fn ig_finish(x: &Tensor, baseline: &Tensor, sum: &[f64], steps: usize) -> Result<Tensor> {
    let data = x
        .data()
        .iter()
        .zip(baseline.data())
        .zip(sum)
        .map(|((v, b), s)| (v - b) * s / steps as f64)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `(x − x̄) ⊙ mean_k ∇z_j(x̄ + (k/steps)(x − x̄))`, `k = 1..=steps`.
pub fn integrated_gradients(
    net: &Network,
    x: &Tensor,
    target: usize,
    steps: usize,
    baseline: &Tensor,
) -> Result<Tensor> {
    net.check_target(target)?;
    let mut sum = vec![0.0; x.len()];
    for point in ig_points(x, baseline, steps)? {
        let g = net.input_gradient(&point, target)?;
        sum.iter_mut().zip(g.data()).for_each(|(s, g)| *s += g);
    }
    ig_finish(x, baseline, &sum, steps)
}

pub fn integrated_gradients_all(net: &Network, x: &Tensor, steps: usize, baseline: &Tensor) -> Result<Vec<Tensor>> {
    let h = net.output_dim();
    let mut sums = vec![vec![0.0; x.len()]; h];
    for point in ig_points(x, baseline, steps)? {
        let trace = net.forward(&point)?;
        for (j, sum) in sums.iter_mut().enumerate() {
            let g = net.backward(&trace, &one_hot(h, j))?;
            sum.iter_mut().zip(g.data()).for_each(|(s, g)| *s += g);
        }
    }
    sums.iter().map(|s| ig_finish(x, baseline, s, steps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dense, Layer};

    fn linear(w: Vec<f64>) -> Network {
        let n = w.len();
        let dense = Dense::new(Tensor::new(vec![1, n], w).unwrap(), None).unwrap();
        Network::new(vec![n], vec![Layer::Dense(dense)]).unwrap()
    }

    #[test]
    fn linear_model_closed_forms() {
        let net = linear(vec![0.5, -2.0, 3.0]);
        let x = Tensor::from_vec(vec![2.0, 1.0, -1.0]);
        assert_eq!(gradient_x_input(&net, &x, 0).unwrap().data(), &[1.0, -2.0, -3.0]);
        let sg = smoothgrad(&net, &x, 0, &SmoothGradParams::new(0.7, 5, 3)).unwrap();
        for (a, b) in sg.data().iter().zip([0.5, -2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = Tensor::zeros(vec![3]);
        for steps in [1, 3, 10] {
            let ig = integrated_gradients(&net, &x, 0, steps, &zero).unwrap();
            for (a, b) in ig.data().iter().zip([1.0, -2.0, -3.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        let net = linear(vec![0.5, -2.0]);
        let zero = Tensor::zeros(vec![2]);
        assert!(gradient_x_input(&net, &zero, 0)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let ig = integrated_gradients(&net, &x, 0, 4, &x).unwrap();
        assert!(ig.data().iter().all(|&v| v == 0.0));
        assert!(integrated_gradients(&net, &x, 0, 0, &zero).is_err());
        assert!(integrated_gradients(&net, &x, 0, 2, &Tensor::zeros(vec![3])).is_err());
        assert!(smoothgrad(&net, &x, 0, &SmoothGradParams::new(0.1, 0, 1)).is_err());
    }

    #[test]
    fn times_input_toggle() {
        let net = linear(vec![0.5, -2.0]);
        let x = Tensor::from_vec(vec![3.0, 2.0]);
        let mut p = SmoothGradParams::new(0.0, 1, 0);
        p.times_input = true;
        assert_eq!(smoothgrad(&net, &x, 0, &p).unwrap().data(), &[1.5, -4.0]);
    }
}

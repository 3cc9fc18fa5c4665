//! Fixtures shared by the integration suites: seeded random layers and
//! networks, and the desk-trained MNIST model cached across test binaries.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xai_spectral::model::{
    load_idx_dir, load_model, save_model, train_small_cnn, Conv2d, Dataset, Dense, Layer, MaxPool2d, Network,
    TrainConfig,
};
use xai_spectral::numerics::{Matrix, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn uniforms(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-10.0..10.0))
}

pub fn dense(weights: Vec<f64>, out: usize, inp: usize, bias: Option<Vec<f64>>) -> Layer {
    let w = Tensor::new(vec![out, inp], weights).unwrap();
    Layer::Dense(Dense::new(w, bias.map(Tensor::from_vec)).unwrap())
}

pub fn random_dense(rng: &mut ChaCha8Rng, out: usize, inp: usize, bias: bool) -> Layer {
    let w = normals(rng, out * inp);
    let b = bias.then(|| normals(rng, out).into_iter().map(|v| 0.1 * v).collect());
    dense(w, out, inp, b)
}

/// Dense ReLU network with the given widths, `widths[0]` inputs.
pub fn random_mlp(rng: &mut ChaCha8Rng, widths: &[usize], bias: bool) -> Network {
    let mut layers = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        if i > 0 {
            layers.push(Layer::Relu);
        }
        layers.push(random_dense(rng, w[1], w[0], bias));
    }
    Network::new(vec![widths[0]], layers).unwrap()
}

/// `[1, 8, 8]` input, conv(3 filters, 3×3, pad 1), ReLU, max-pool 2,
/// conv(4 filters, 3×3, pad 0), ReLU, flatten, dense to `outputs`.
pub fn small_cnn(rng: &mut ChaCha8Rng, outputs: usize) -> Network {
    let conv = |rng: &mut ChaCha8Rng, f: usize, c: usize, pad: usize| {
        let w = Tensor::new(
            vec![f, c, 3, 3],
            normals(rng, f * c * 9).iter().map(|v| v * 0.5).collect(),
        )
        .unwrap();
        let b = Tensor::from_vec(uniforms(rng, f, -0.1, 0.1));
        Layer::Conv2d(Conv2d::new(w, Some(b), 1, pad).unwrap())
    };
    let layers = vec![
        conv(rng, 3, 1, 1),
        Layer::Relu,
        Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 }),
        conv(rng, 4, 3, 0),
        Layer::Relu,
        Layer::Flatten,
        random_dense(rng, outputs, 16, true),
    ];
    Network::new(vec![1, 8, 8], layers).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniforms(rng, n, 0.0, 1.0)).unwrap()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y} (tol {tol})");
    }
}

pub fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

/// Training setup of the desk model: the default configuration with three
/// epochs on the bundled 10k subset.
pub fn desk_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        min_accuracy: Some(0.95),
        ..TrainConfig::default()
    }
}

pub struct DeskModel {
    pub net: Network,
    pub holdout: Dataset,
    pub dir: PathBuf,
}

static DESK: Mutex<()> = Mutex::new(());

/// The desk-trained MNIST CNN, trained once and cached under the cargo
/// target directory. Evaluation images come from the held-out split.
pub fn desk_model() -> DeskModel {
    let _guard = DESK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("desk-mnist-cnn-e3-s7");
    let data = load_idx_dir(mnist_dir()).expect("bundled MNIST subset");
    let config = desk_config();
    let (_, holdout) = data.split(config.holdout_fraction, config.seed);
    let net = match load_model(&dir) {
        Ok(net) => net,
        Err(_) => {
            eprintln!("training the desk MNIST model (cached in {})", dir.display());
            let outcome = train_small_cnn(&data, &config).expect("desk model trains");
            let tmp = dir.with_extension("partial");
            save_model(&outcome.network, &tmp).unwrap();
            let _ = std::fs::remove_dir_all(&dir);
            std::fs::rename(&tmp, &dir).unwrap();
            outcome.network
        }
    };
    DeskModel { net, holdout, dir }
}

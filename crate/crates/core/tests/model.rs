mod support;

use std::fs;
use std::io::{Read, Write};

use support::*;
use xai_spectral::model::train::accuracy;
use xai_spectral::model::{
    load_idx, load_idx_images, load_model, save_model, train_small_cnn, Architecture, Conv2d, Dataset, Layer, Network,
    TrainConfig,
};
use xai_spectral::numerics::Tensor;
use xai_spectral::Error;

// Scalar-loop reference forward pass, written independently of the library
// kernels: no im2col, no gemm, explicit index arithmetic.

fn conv_naive(x: &[f64], shape: &[usize], c: &Conv2d) -> (Vec<f64>, Vec<usize>) {
    let (ch, h, w) = (shape[0], shape[1], shape[2]);
    let ws = c.weight.shape();
    let (f, kh, kw) = (ws[0], ws[2], ws[3]);
    let (s, p) = (c.stride, c.padding);
    let oh = (h + 2 * p - kh) / s + 1;
    let ow = (w + 2 * p - kw) / s + 1;
    let wt = c.weight.data();
    let mut out = vec![0.0; f * oh * ow];
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = c.bias.as_ref().map_or(0.0, |b| b.data()[fi]);
                for ci in 0..ch {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * s + ky) as isize - p as isize;
                            let ix = (ox * s + kx) as isize - p as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = x[(ci * h + iy as usize) * w + ix as usize];
                            acc += wt[((fi * ch + ci) * kh + ky) * kw + kx] * xv;
                        }
                    }
                }
                out[(fi * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, vec![f, oh, ow])
}

fn pool_naive(x: &[f64], shape: &[usize], size: usize, stride: usize) -> (Vec<f64>, Vec<usize>) {
    let (ch, h, w) = (shape[0], shape[1], shape[2]);
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let mut out = Vec::new();
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..size {
                    for kx in 0..size {
                        let v = x[(c * h + oy * stride + ky) * w + ox * stride + kx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    (out, vec![ch, oh, ow])
}

fn forward_naive(net: &Network, x: &Tensor) -> Vec<f64> {
    let mut a = x.data().to_vec();
    let mut shape = x.shape().to_vec();
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                let (o, i) = (d.outputs(), d.inputs());
                let w = d.weight.data();
                a = (0..o)
                    .map(|r| {
                        let mut acc = d.bias.as_ref().map_or(0.0, |b| b.data()[r]);
                        for k in 0..i {
                            acc += w[r * i + k] * a[k];
                        }
                        acc
                    })
                    .collect();
                shape = vec![o];
            }
            Layer::Conv2d(c) => (a, shape) = conv_naive(&a, &shape, c),
            Layer::Relu => a.iter_mut().for_each(|v| *v = v.max(0.0)),
            Layer::MaxPool2d(p) => (a, shape) = pool_naive(&a, &shape, p.size, p.stride),
            Layer::Flatten => shape = vec![a.len()],
        }
    }
    a
}

/// The MNIST CNN with small random biases, so the zero-image output is non-trivial.
fn mnist_cnn_with_biases(seed: u64) -> Network {
    let mut r = rng(seed);
    let base = Network::mnist_cnn(seed);
    let layers = base
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Conv2d(c) => {
                let b = Tensor::from_vec(uniforms(&mut r, c.filters(), 0.0, 0.2));
                Layer::Conv2d(Conv2d::new(c.weight.clone(), Some(b), c.stride, c.padding).unwrap())
            }
            Layer::Dense(d) => {
                let b = Tensor::from_vec(uniforms(&mut r, d.outputs(), -0.2, 0.2));
                Layer::Dense(xai_spectral::model::Dense::new(d.weight.clone(), Some(b)).unwrap())
            }
            other => other.clone(),
        })
        .collect();
    Network::new(vec![1, 28, 28], layers).unwrap()
}

/// Activation pattern: ReLU input signs and max-pool winners along the trace.
fn pattern(net: &Network, x: &Tensor) -> Vec<usize> {
    let trace = net.forward(x).unwrap();
    let mut p = Vec::new();
    for (i, l) in net.layers().iter().enumerate() {
        let input = trace.layer_input(i);
        match l {
            Layer::Relu => p.extend(input.data().iter().map(|&v| usize::from(v > 0.0))),
            Layer::MaxPool2d(_) => p.extend(l.pool_winners(input).unwrap()),
            _ => {}
        }
    }
    p
}

#[test]
fn dense_hand_example() {
    let net = Network::new(
        vec![2],
        vec![dense(vec![2.0, 0.0, 0.0, 3.0], 2, 2, Some(vec![0.0, 0.0]))],
    )
    .unwrap();
    let z = net.logits(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
    assert_eq!(z.data(), &[2.0, 3.0]);
}

#[test]
fn relu_hand_example() {
    let y = Layer::Relu.forward(&Tensor::from_vec(vec![-1.0, 2.0])).unwrap();
    assert_eq!(y.data(), &[0.0, 2.0]);
}

#[test]
fn trace_layout() {
    let net = small_cnn(&mut rng(1), 3);
    let x = random_image(&mut rng(2), &[1, 8, 8]);
    let t = net.forward(&x).unwrap();
    assert_eq!(t.activations.len(), net.layers().len() + 1);
    assert_eq!(t.activations[0], x);
    assert_eq!(t.logits().shape(), &[3]);
}

#[test]
fn shape_mismatch_is_an_error() {
    let net = small_cnn(&mut rng(1), 3);
    let bad = Tensor::zeros(vec![1, 7, 8]);
    assert!(matches!(net.forward(&bad), Err(Error::ShapeMismatch { .. })));
    assert!(net.input_gradient(&Tensor::zeros(vec![1, 8, 8]), 3).is_err());
}

#[test]
fn mnist_cnn_zero_image_matches_scalar_oracle() {
    let net = mnist_cnn_with_biases(3);
    let x = Tensor::zeros(vec![1, 28, 28]);
    let z = net.logits(&x).unwrap();
    assert_eq!(z.len(), 10);
    assert!(z.max_abs() > 0.0);
    assert_close(z.data(), &forward_naive(&net, &x), 1e-10, "zero image");
}

#[test]
fn mnist_cnn_random_image_matches_scalar_oracle() {
    let net = mnist_cnn_with_biases(4);
    let x = random_image(&mut rng(5), &[1, 28, 28]);
    assert_close(
        net.logits(&x).unwrap().data(),
        &forward_naive(&net, &x),
        1e-10,
        "random image",
    );
}

#[test]
fn strided_conv_matches_scalar_oracle() {
    let mut r = rng(6);
    let w = Tensor::new(vec![2, 2, 3, 3], normals(&mut r, 36)).unwrap();
    let conv = Conv2d::new(w, Some(Tensor::from_vec(vec![0.3, -0.2])), 2, 1).unwrap();
    let net = Network::new(vec![2, 7, 7], vec![Layer::Conv2d(conv), Layer::Flatten]).unwrap();
    let x = random_image(&mut r, &[2, 7, 7]);
    assert_close(
        net.logits(&x).unwrap().data(),
        &forward_naive(&net, &x),
        1e-12,
        "stride 2",
    );
}

#[test]
fn linear_model_gradient_is_weights() {
    let w = vec![0.5, -2.0, 3.0];
    let net = Network::new(vec![3], vec![dense(w.clone(), 1, 3, Some(vec![1.0]))]).unwrap();
    for x in [vec![0.0; 3], vec![1.0, -4.0, 2.5]] {
        let g = net.input_gradient(&Tensor::from_vec(x), 0).unwrap();
        assert_eq!(g.data(), &w[..]);
    }
}

#[test]
fn active_relu_net_gradient_is_weight_product() {
    // all-positive weights and inputs keep every ReLU active
    let w1 = vec![0.5, 1.0, 0.2, 0.3, 0.7, 0.1];
    let w2 = vec![1.5, 0.4, 0.9, 2.0, 0.6, 0.3];
    let net = Network::new(
        vec![2],
        vec![
            dense(w1.clone(), 3, 2, None),
            Layer::Relu,
            dense(w2.clone(), 2, 3, None),
        ],
    )
    .unwrap();
    let x = Tensor::from_vec(vec![0.4, 0.8]);
    for j in 0..2 {
        let g = net.input_gradient(&x, j).unwrap();
        let expect: Vec<f64> = (0..2)
            .map(|i| (0..3).map(|k| w2[j * 3 + k] * w1[k * 2 + i]).sum())
            .collect();
        assert_close(g.data(), &expect, 1e-14, "W2 W1");
    }
}

#[test]
fn max_pool_ties_route_to_first_element() {
    let net = Network::new(
        vec![1, 2, 2],
        vec![
            Layer::MaxPool2d(xai_spectral::model::MaxPool2d { size: 2, stride: 2 }),
            Layer::Flatten,
        ],
    )
    .unwrap();
    let g = net
        .input_gradient(&Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap(), 0)
        .unwrap();
    assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    let mut r = rng(7);
    let mut checked = 0;
    for trial in 0..20 {
        let net = small_cnn(&mut r, 3);
        let x = random_image(&mut r, &[1, 8, 8]);
        let base = pattern(&net, &x);
        let j = trial % 3;
        let g = net.input_gradient(&x, j).unwrap();
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            // skip coordinates whose step crosses a ReLU or max-pool switch
            if pattern(&net, &xp) != base || pattern(&net, &xm) != base {
                continue;
            }
            let fd = (net.logits(&xp).unwrap().data()[j] - net.logits(&xm).unwrap().data()[j]) / (2.0 * h);
            let gi = g.data()[i];
            assert!(
                (gi - fd).abs() <= 1e-5 * gi.abs().max(fd.abs()).max(1e-3),
                "trial {trial} coord {i}: {gi} vs {fd}"
            );
            checked += 1;
        }
    }
    assert!(checked > 20 * 32, "only {checked} coordinates checked");
}

#[test]
fn forward_is_piecewise_linear_along_rays() {
    let mut r = rng(8);
    for _ in 0..20 {
        let net = small_cnn(&mut r, 4);
        let x = random_image(&mut r, &[1, 8, 8]);
        let d = 1e-4;
        let at = |a: f64| x.scale(a);
        let p = pattern(&net, &x);
        if pattern(&net, &at(1.0 - d)) != p || pattern(&net, &at(1.0 + d)) != p {
            continue;
        }
        let z0 = net.logits(&at(1.0 - d)).unwrap();
        let z1 = net.logits(&x).unwrap();
        let z2 = net.logits(&at(1.0 + d)).unwrap();
        for k in 0..4 {
            let second = z2.data()[k] - 2.0 * z1.data()[k] + z0.data()[k];
            assert!(second.abs() < 1e-12, "curvature {second}");
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let net = mnist_cnn_with_biases(9);
    let x = random_image(&mut rng(10), &[1, 28, 28]);
    let a = net.logits(&x).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (net, x) = (net.clone(), x.clone());
            std::thread::spawn(move || net.logits(&x).unwrap())
        })
        .collect();
    for h in handles {
        let b = h.join().unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn save_load_save_is_byte_identical() {
    let net = mnist_cnn_with_biases(11);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    save_model(&net, &a).unwrap();
    let loaded = load_model(&a).unwrap();
    save_model(&loaded, &b).unwrap();
    for f in ["manifest.json", "weights.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let x = random_image(&mut rng(12), &[1, 28, 28]);
    let (z, zl) = (net.logits(&x).unwrap(), loaded.logits(&x).unwrap());
    for (u, v) in z.data().iter().zip(zl.data()) {
        assert!((u - v).abs() <= 1e-6 * u.abs().max(1.0), "{u} vs {v}");
    }
}

#[test]
fn weights_are_little_endian_f32_in_manifest_order() {
    let net = Network::new(
        vec![2],
        vec![dense(vec![1.0, -2.0, 0.5, 4.0], 2, 2, Some(vec![0.25, -1.0]))],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&net, dir.path()).unwrap();
    let bytes = fs::read(dir.path().join("weights.bin")).unwrap();
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(floats, [1.0, -2.0, 0.5, 4.0, 0.25, -1.0]);
}

#[test]
fn corrupt_models_fail_to_load() {
    let net = small_cnn(&mut rng(13), 2);
    let dir = tempfile::tempdir().unwrap();
    save_model(&net, dir.path()).unwrap();
    let mp = dir.path().join("manifest.json");
    let original = fs::read_to_string(&mp).unwrap();

    let mut m: serde_json::Value = serde_json::from_str(&original).unwrap();
    m["layers"][0]["weight"]["offset"] = serde_json::json!(1u64 << 40);
    fs::write(&mp, serde_json::to_string(&m).unwrap()).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::Format { .. })));

    fs::write(&mp, &original).unwrap();
    let wp = dir.path().join("weights.bin");
    let mut w = fs::read(&wp).unwrap();
    w[5] ^= 0x40;
    fs::write(&wp, &w).unwrap();
    let err = load_model(dir.path()).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");

    w.pop();
    fs::write(&wp, &w).unwrap();
    assert!(load_model(dir.path()).is_err());
}

fn write_idx(path: &std::path::Path, magic: u32, dims: &[u32], payload: &[u8]) {
    let mut f = fs::File::create(path).unwrap();
    f.write_all(&magic.to_be_bytes()).unwrap();
    for d in dims {
        f.write_all(&d.to_be_bytes()).unwrap();
    }
    f.write_all(payload).unwrap();
}

#[test]
fn idx_synthetic_files() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one-images-idx3-ubyte");
    write_idx(&one, 0x803, &[1, 28, 28], &[0; 784]);
    let t = load_idx_images(&one).unwrap();
    assert_eq!(t.shape(), &[1, 28, 28]);
    assert!(t.data().iter().all(|&v| v == 0.0));

    let two = dir.path().join("two-images-idx3-ubyte");
    let payload: Vec<u8> = (0..2 * 784).map(|i| (i % 256) as u8).collect();
    write_idx(&two, 0x803, &[2, 28, 28], &payload);
    let labels = dir.path().join("two-labels-idx1-ubyte");
    write_idx(&labels, 0x801, &[2], &[3, 9]);
    let ds = load_idx(&two, &labels).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.labels, [3, 9]);
    assert_eq!(ds.image(1).data()[0], f64::from(((784) % 256) as u8) / 255.0);
    assert!(ds.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));

    let bad = dir.path().join("bad");
    write_idx(&bad, 0x804, &[1, 28, 28], &[0; 784]);
    assert!(matches!(load_idx_images(&bad), Err(Error::Format { .. })));
    let short = dir.path().join("short");
    write_idx(&short, 0x803, &[2, 28, 28], &[0; 784]);
    assert!(matches!(load_idx_images(&short), Err(Error::Format { .. })));
}

/// Minimal gzip IDX reader independent of the library's parser.
fn oracle_idx(path: &std::path::Path) -> (Vec<u32>, Vec<u8>) {
    let mut raw = Vec::new();
    flate2::read::GzDecoder::new(fs::File::open(path).unwrap())
        .read_to_end(&mut raw)
        .unwrap();
    let be = |i: usize| u32::from_be_bytes(raw[i..i + 4].try_into().unwrap());
    let n = (be(0) & 0xff) as usize;
    let dims: Vec<u32> = (0..n).map(|k| be(4 + 4 * k)).collect();
    (dims, raw[4 + 4 * n..].to_vec())
}

#[test]
fn bundled_subset_agrees_with_independent_reader() {
    let dir = mnist_dir();
    let ds = xai_spectral::model::load_idx_dir(&dir).unwrap();
    let (dims, labels) = oracle_idx(&dir.join("mnist10k-labels-idx1-ubyte.gz"));
    let (idims, pixels) = oracle_idx(&dir.join("mnist10k-images-idx3-ubyte.gz"));
    assert_eq!(dims, [10_000]);
    assert_eq!(idims, [10_000, 28, 28]);
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.labels[0], usize::from(labels[0]));
    assert!(ds.labels.iter().zip(&labels).all(|(&a, &b)| a == usize::from(b)));
    assert!(ds.pixels.iter().zip(&pixels).all(|(&a, &b)| a == f64::from(b) / 255.0));
}

/// The official `t10k` files, if present under `MNIST_T10K_DIR`.
#[test]
fn official_test_file_when_available() {
    let Some(dir) = std::env::var_os("MNIST_T10K_DIR") else {
        eprintln!("MNIST_T10K_DIR not set; skipping");
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let imgs = ["t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"].map(|f| dir.join(f));
    let lbls = ["t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz"].map(|f| dir.join(f));
    let (Some(i), Some(l)) = (imgs.iter().find(|p| p.exists()), lbls.iter().find(|p| p.exists())) else {
        eprintln!("no t10k files in {}; skipping", dir.display());
        return;
    };
    let ds = load_idx(i, l).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.labels[0], 7);
}

/// Two 8×8 classes: a bright blob in the top-left or the bottom-right corner.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let (cy, cx) = if label == 0 { (2.0, 2.0) } else { (5.0, 5.0) };
        for y in 0..8 {
            for x in 0..8 {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let v = (-d2 / 3.0).exp() + 0.15 * normal(&mut r);
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        labels.push(label);
    }
    Dataset::new(vec![1, 8, 8], pixels, labels).unwrap()
}

fn blob_config() -> TrainConfig {
    TrainConfig {
        architecture: Architecture::Mlp { hidden: vec![16] },
        epochs: 30,
        batch_size: 8,
        learning_rate: 0.1,
        seed: 3,
        holdout_fraction: 0.2,
        min_accuracy: None,
    }
}

#[test]
fn tiny_mlp_learns_blobs() {
    let data = blobs(300, 21);
    let out = train_small_cnn(&data, &blob_config()).unwrap();
    assert_eq!(out.history.len(), 30);
    assert!(accuracy(&out.network, &out.train).unwrap() >= 0.99);
    assert!(out.final_holdout_accuracy() >= 0.95);
}

#[test]
fn training_is_bit_reproducible() {
    let data = blobs(120, 22);
    let cfg = TrainConfig {
        epochs: 3,
        ..blob_config()
    };
    let a = train_small_cnn(&data, &cfg).unwrap().network;
    let b = train_small_cnn(&data, &cfg).unwrap().network;
    let dir = tempfile::tempdir().unwrap();
    save_model(&a, dir.path().join("a")).unwrap();
    save_model(&b, dir.path().join("b")).unwrap();
    assert_eq!(
        fs::read(dir.path().join("a/weights.bin")).unwrap(),
        fs::read(dir.path().join("b/weights.bin")).unwrap()
    );
}

#[test]
fn unmet_accuracy_is_a_training_failure() {
    let data = blobs(40, 23);
    let cfg = TrainConfig {
        epochs: 1,
        learning_rate: 1e-6,
        min_accuracy: Some(1.01),
        ..blob_config()
    };
    match train_small_cnn(&data, &cfg) {
        Err(Error::TrainingFailure { loss_history, .. }) => assert_eq!(loss_history.len(), 1),
        other => panic!("expected TrainingFailure, got {other:?}"),
    }
}

#[test]
fn desk_model_reaches_95_percent() {
    let desk = desk_model();
    let acc = accuracy(&desk.net, &desk.holdout).unwrap();
    eprintln!("desk model held-out accuracy {acc:.4} on {} images", desk.holdout.len());
    assert_eq!(desk.holdout.len(), 2000);
    assert!(acc >= 0.95);
}

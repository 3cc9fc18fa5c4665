//! Model directory format.
//!
//! A model is a directory with two files:
//!
//! * `manifest.json`: input shape, the ordered layer list with kinds, tensor
//!   shapes and hyperparameters, and for every weight/bias blob its byte
//!   offset and float count inside `weights.bin`, plus the SHA-256 of that file.
//! * `weights.bin`: all blobs as little-endian `f32`, row-major, concatenated
//!   in manifest order.
//!
//! Saving the same network twice yields byte-identical files; weights are
//! rounded to `f32` on save, so a loaded model re-saves to the same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::{Conv2d, Dense, Layer, MaxPool2d};
use super::network::Network;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const FORMAT_NAME: &str = "xai-spectral-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerEntry>,
    pub weights_file: String,
    pub weights_bytes: u64,
    pub weights_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerEntry {
    Dense {
        weight: Blob,
        bias: Option<Blob>,
    },
    Conv2d {
        weight: Blob,
        bias: Option<Blob>,
        stride: usize,
        padding: usize,
    },
    Relu,
    Maxpool2d {
        size: usize,
        stride: usize,
    },
    Flatten,
}

struct BlobWriter {
    bytes: Vec<u8>,
}

impl BlobWriter {
    fn push(&mut self, t: &Tensor) -> Blob {
        let offset = self.bytes.len() as u64;
        for &v in t.data() {
            self.bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Blob {
            shape: t.shape().to_vec(),
            offset,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a network into `(manifest JSON, weights.bin)` bytes.
pub fn encode_model(net: &Network) -> (Vec<u8>, Vec<u8>) {
    let mut w = BlobWriter { bytes: Vec::new() };
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerEntry::Dense {
                weight: w.push(&d.weight),
                bias: d.bias.as_ref().map(|b| w.push(b)),
            },
            Layer::Conv2d(c) => LayerEntry::Conv2d {
                weight: w.push(&c.weight),
                bias: c.bias.as_ref().map(|b| w.push(b)),
                stride: c.stride,
                padding: c.padding,
            },
            Layer::Relu => LayerEntry::Relu,
            Layer::MaxPool2d(p) => LayerEntry::Maxpool2d {
                size: p.size,
                stride: p.stride,
            },
            Layer::Flatten => LayerEntry::Flatten,
        })
        .collect();
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        input_shape: net.input_shape().to_vec(),
        layers,
        weights_file: WEIGHTS_FILE.into(),
        weights_bytes: w.bytes.len() as u64,
        weights_sha256: sha256_hex(&w.bytes),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    (json, w.bytes)
}

pub fn save_model(net: &Network, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, weights) = encode_model(net);
    let wp = dir.join(WEIGHTS_FILE);
    fs::write(&wp, weights).map_err(|e| Error::io(&wp, e))?;
    let mp = dir.join(MANIFEST_FILE);
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

fn read_blob(path: &Path, weights: &[u8], blob: &Blob) -> Result<Tensor> {
    let n: usize = blob.shape.iter().product();
    let start = usize::try_from(blob.offset).map_err(|_| Error::format(path, "offset overflow"))?;
    let end = start
        .checked_add(n * 4)
        .ok_or_else(|| Error::format(path, "blob size overflow"))?;
    if end > weights.len() {
        return Err(Error::format(
            path,
            format!(
                "blob {:?} at offset {start} runs past end of weights ({} bytes)",
                blob.shape,
                weights.len()
            ),
        ));
    }
    let data = weights[start..end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::new(blob.shape.clone(), data).map_err(|e| Error::format(path, e.to_string()))
}

/// Decodes a model from manifest and weight bytes. `path` is only used in errors.
pub fn decode_model(path: &Path, manifest: &[u8], weights: &[u8]) -> Result<Network> {
    let m: Manifest =
        serde_json::from_slice(manifest).map_err(|e| Error::format(path.join(MANIFEST_FILE), e.to_string()))?;
    if m.format != FORMAT_NAME || m.version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format {} v{}", m.format, m.version),
        ));
    }
    if m.weights_bytes != weights.len() as u64 {
        return Err(Error::format(
            path,
            format!(
                "manifest declares {} weight bytes, file has {}",
                m.weights_bytes,
                weights.len()
            ),
        ));
    }
    let wpath = path.join(&m.weights_file);
    let mut layers = Vec::with_capacity(m.layers.len());
    for entry in &m.layers {
        let shape_err = |e: Error| Error::format(path, e.to_string());
        layers.push(match entry {
            LayerEntry::Dense { weight, bias } => {
                let w = read_blob(&wpath, weights, weight)?;
                let b = bias.as_ref().map(|b| read_blob(&wpath, weights, b)).transpose()?;
                Layer::Dense(Dense::new(w, b).map_err(shape_err)?)
            }
            LayerEntry::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let w = read_blob(&wpath, weights, weight)?;
                let b = bias.as_ref().map(|b| read_blob(&wpath, weights, b)).transpose()?;
                Layer::Conv2d(Conv2d::new(w, b, *stride, *padding).map_err(shape_err)?)
            }
            LayerEntry::Relu => Layer::Relu,
            LayerEntry::Maxpool2d { size, stride } => Layer::MaxPool2d(MaxPool2d {
                size: *size,
                stride: *stride,
            }),
            LayerEntry::Flatten => Layer::Flatten,
        });
    }
    if sha256_hex(weights) != m.weights_sha256 {
        return Err(Error::format(wpath, "checksum mismatch"));
    }
    Network::new(m.input_shape, layers).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<Network> {
    let dir = dir.as_ref();
    let mp = dir.join(MANIFEST_FILE);
    let manifest = fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    let m: Manifest = serde_json::from_slice(&manifest).map_err(|e| Error::format(&mp, e.to_string()))?;
    let wp = dir.join(&m.weights_file);
    let weights = fs::read(&wp).map_err(|e| Error::io(&wp, e))?;
    decode_model(dir, &manifest, &weights)
}

/// Rounds every weight to the nearest `f32`, matching what a save/load
/// round trip produces.
pub fn quantize_to_f32(net: &mut Network) {
    let q = |t: &mut Tensor| {
        for v in t.data_mut() {
            *v = f64::from(*v as f32);
        }
    };
    for layer in net.layers_mut() {
        match layer {
            Layer::Dense(d) => {
                q(&mut d.weight);
                if let Some(b) = d.bias.as_mut() {
                    q(b);
                }
            }
            Layer::Conv2d(c) => {
                q(&mut c.weight);
                if let Some(b) = c.bias.as_mut() {
                    q(b);
                }
            }
            _ => {}
        }
    }
}

//! Labeled image datasets and the IDX file format used by MNIST.
//!
//! IDX files start with a big-endian magic word `0x000008nn` (unsigned byte
//! payload, `nn` dimensions) followed by `nn` big-endian `u32` extents and the
//! raw bytes. Files ending in `.gz` (or starting with the gzip magic) are
//! decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Images with integer class labels, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Shape of a single sample, e.g. `[1, 28, 28]`.
    pub sample_shape: Vec<usize>,
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(sample_shape: Vec<usize>, pixels: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let d: usize = sample_shape.iter().product();
        if d == 0 || pixels.len() != d * labels.len() {
            return Err(Error::invalid(format!(
                "{} labels need {} pixel values of shape {sample_shape:?}, got {}",
                labels.len(),
                d * labels.len(),
                pixels.len()
            )));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Dataset {
            sample_shape,
            pixels,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn image(&self, i: usize) -> Tensor {
        let d = self.sample_dim();
        Tensor::new(self.sample_shape.clone(), self.pixels[i * d..(i + 1) * d].to_vec())
            .expect("dataset pixels are finite")
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.sample_dim();
        let mut pixels = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            pixels.extend_from_slice(&self.pixels[i * d..(i + 1) * d]);
        }
        Dataset {
            sample_shape: self.sample_shape.clone(),
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Seeded random split; returns `(train, holdout)` with
    /// `round(len·holdout_fraction)` samples held out.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_hold = ((self.len() as f64) * holdout_fraction).round() as usize;
        let (hold, train) = idx.split_at(n_hold.min(self.len()));
        (self.subset(train), self.subset(hold))
    }
}

/// Raw contents of an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn parse_idx(path: &Path, buf: &[u8]) -> Result<IdxArray> {
    if buf.len() < 4 {
        return Err(Error::format(path, "truncated header"));
    }
    let magic = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]);
    let ndims = match magic {
        IDX_LABELS_MAGIC => 1,
        IDX_IMAGES_MAGIC => 3,
        other => return Err(Error::format(path, format!("bad magic 0x{other:08x}"))),
    };
    let header = 4 + 4 * ndims;
    if buf.len() < header {
        return Err(Error::format(path, "truncated header"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]) as usize
        })
        .collect();
    let payload: usize = dims.iter().product();
    if buf.len() < header + payload {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: dims {dims:?} need {payload} bytes, found {}",
                buf.len() - header
            ),
        ));
    }
    Ok(IdxArray {
        magic,
        dims,
        bytes: buf[header..header + payload].to_vec(),
    })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    parse_idx(path, &read_maybe_gz(path)?)
}

/// Images as an `[n, rows, cols]` tensor scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let arr = read_idx(path)?;
    if arr.magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(path, "expected an image file (magic 0x00000803)"));
    }
    if arr.dims.contains(&0) {
        return Err(Error::format(path, "empty image file"));
    }
    let data = arr.bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(arr.dims, data)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let arr = read_idx(path)?;
    if arr.magic != IDX_LABELS_MAGIC {
        return Err(Error::format(path, "expected a label file (magic 0x00000801)"));
    }
    Ok(arr.bytes.iter().map(|&b| usize::from(b)).collect())
}

/// Pairs an image file with its label file into a dataset of `[1, rows, cols]` samples.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let imgs = load_idx_images(&images)?;
    let labels_v = load_idx_labels(&labels)?;
    let (n, rows, cols) = (imgs.shape()[0], imgs.shape()[1], imgs.shape()[2]);
    if n != labels_v.len() {
        return Err(Error::format(
            labels.as_ref(),
            format!("{} labels for {n} images", labels_v.len()),
        ));
    }
    Dataset::new(vec![1, rows, cols], imgs.into_data(), labels_v)
}

/// Finds `*images-idx3-ubyte[.gz]` / `*labels-idx1-ubyte[.gz]` in a directory.
/// With several candidates the lexicographically first pair is used.
pub fn find_idx_pair(dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if name.contains("images-idx3-ubyte") {
            images.push(path);
        } else if name.contains("labels-idx1-ubyte") {
            labels.push(path);
        }
    }
    images.sort();
    labels.sort();
    match (images.into_iter().next(), labels.into_iter().next()) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(Error::format(
            dir,
            "no *images-idx3-ubyte / *labels-idx1-ubyte pair found",
        )),
    }
}

pub fn load_idx_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = find_idx_pair(dir)?;
    load_idx(images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, payload: &[u8]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for d in [n, 28, 28] {
            buf.extend_from_slice(&d.to_be_bytes());
        }
        buf.extend_from_slice(payload);
        buf
    }

    #[test]
    fn single_zero_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x-images-idx3-ubyte");
        fs::write(&p, idx_images(1, &[0; 784])).unwrap();
        let t = load_idx_images(&p).unwrap();
        assert_eq!(t.shape(), &[1, 28, 28]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_images_and_scaling() {
        let mut payload = vec![0u8; 2 * 784];
        payload[784] = 255;
        payload[785] = 51;
        let a = parse_idx(Path::new("mem"), &idx_images(2, &payload)).unwrap();
        assert_eq!(a.dims, vec![2, 28, 28]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i");
        fs::write(&p, idx_images(2, &payload)).unwrap();
        let t = load_idx_images(&p).unwrap();
        assert_eq!(t.data()[784], 1.0);
        assert!((t.data()[785] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut buf = idx_images(1, &[0; 784]);
        buf[3] = 0x04;
        assert!(matches!(parse_idx(Path::new("m"), &buf), Err(Error::Format { .. })));
        let short = idx_images(2, &[0; 784]);
        let err = parse_idx(Path::new("m"), &short).unwrap_err();
        assert!(err.to_string().contains("truncated"));
        assert!(parse_idx(Path::new("m"), &[0, 0, 8]).is_err());
    }

    #[test]
    fn gzip_is_transparent() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l-labels-idx1-ubyte.gz");
        let mut raw = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        raw.extend_from_slice(&3u32.to_be_bytes());
        raw.extend_from_slice(&[7, 2, 1]);
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        fs::write(&p, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx_labels(&p).unwrap(), vec![7, 2, 1]);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let ds = Dataset::new(
            vec![1],
            (0..10).map(f64::from).collect(),
            (0..10).map(|i| i % 2).collect(),
        )
        .unwrap();
        let (a, b) = ds.split(0.2, 3);
        let (c, d) = ds.split(0.2, 3);
        assert_eq!(a, c);
        assert_eq!(b, d);
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<f64> = a.pixels.iter().chain(&b.pixels).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
    }
}

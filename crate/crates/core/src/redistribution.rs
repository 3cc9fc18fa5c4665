//! The `d×h` redistribution matrix `R`, column `j` = `E(z_j) / 1ᵀE(z_j)`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explainers::{explain_all, Method};
use crate::model::Network;
use crate::numerics::{Matrix, Tensor};

/// Relative threshold below which a column sum counts as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct RedistributionMatrix {
    matrix: Matrix,
    normalizers: Vec<f64>,
    degenerate: Vec<usize>,
    input_shape: Vec<usize>,
    pub method: Option<Method>,
    pub input_id: Option<usize>,
}

impl RedistributionMatrix {
    /// Normalizes raw per-output attributions into columns. A column whose
    /// sum vanishes relative to its L1 norm is replaced by the uniform
    /// vector `1/d` and recorded; half or more such columns is an error.
    pub fn from_attributions(input_shape: &[usize], columns: &[Tensor]) -> Result<Self> {
        let d: usize = input_shape.iter().product();
        let h = columns.len();
        if d == 0 || h == 0 {
            return Err(Error::invalid("redistribution matrix needs d, h ≥ 1"));
        }
        let mut matrix = Matrix::zeros(d, h);
        let mut normalizers = Vec::with_capacity(h);
        let mut degenerate = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(Error::ShapeMismatch {
                    expected: input_shape.to_vec(),
                    actual: col.shape().to_vec(),
                });
            }
            col.ensure_finite("attribution")?;
            let sum = col.sum();
            let l1 = col.l1_norm();
            normalizers.push(sum);
            if l1 == 0.0 || sum.abs() < DEGENERACY_THRESHOLD * l1 {
                degenerate.push(j);
                matrix.set_column(j, &vec![1.0 / d as f64; d]);
            } else {
                let scaled: Vec<f64> = col.data().iter().map(|v| v / sum).collect();
                matrix.set_column(j, &scaled);
            }
        }
        if 2 * degenerate.len() >= h {
            return Err(Error::DegenerateMatrix {
                degenerate: degenerate.len(),
                total: h,
            });
        }
        Ok(RedistributionMatrix {
            matrix,
            normalizers,
            degenerate,
            input_shape: input_shape.to_vec(),
            method: None,
            input_id: None,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Raw column sums `1ᵀE(z_j)` before normalization.
    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    /// Columns replaced by the uniform vector.
    pub fn degenerate_columns(&self) -> &[usize] {
        &self.degenerate
    }

    /// Columns whose raw sum was negative, so normalization flipped their sign.
    pub fn negative_columns(&self) -> Vec<usize> {
        (0..self.outputs())
            .filter(|j| self.normalizers[*j] < 0.0 && !self.degenerate.contains(j))
            .collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn inputs(&self) -> usize {
        self.matrix.rows()
    }

    pub fn outputs(&self) -> usize {
        self.matrix.cols()
    }
}

/// Explains every output of `net` at `x` with `method` and normalizes.
pub fn build_redistribution(net: &Network, x: &Tensor, method: &Method) -> Result<RedistributionMatrix> {
    let attributions = explain_all(net, x, method)?;
    let columns: Vec<Tensor> = attributions.into_iter().map(|a| a.values).collect();
    let mut r = RedistributionMatrix::from_attributions(net.input_shape(), &columns)?;
    r.method = Some(method.clone());
    Ok(r)
}

/// `E(y) = R y`, shaped like the input.
pub fn explain_readout(r: &RedistributionMatrix, y: &[f64]) -> Result<Tensor> {
    if y.len() != r.outputs() {
        return Err(Error::ShapeMismatch {
            expected: vec![r.outputs()],
            actual: vec![y.len()],
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("readout".into()));
    }
    Tensor::new(r.input_shape.clone(), r.matrix.matvec(y)?)
}

#[derive(Serialize)]
struct ExportHeader<'a> {
    rows: usize,
    cols: usize,
    layout: &'static str,
    dtype: &'static str,
    input_shape: &'a [usize],
    method: Option<&'static str>,
    param: Option<f64>,
    input_id: Option<usize>,
    normalizers: &'a [f64],
    degenerate_columns: &'a [usize],
    data_file: String,
}

/// Writes `<stem>.json` (header) and `<stem>.bin` (little-endian `f64`,
/// column-major) into `dir`.
pub fn export(r: &RedistributionMatrix, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &r.matrix;
    let mut bin = Vec::with_capacity(m.rows() * m.cols() * 8);
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            bin.extend_from_slice(&m.get(i, j).to_le_bytes());
        }
    }
    let header = ExportHeader {
        rows: m.rows(),
        cols: m.cols(),
        layout: "column-major",
        dtype: "f64-le",
        input_shape: &r.input_shape,
        method: r.method.as_ref().map(Method::name),
        param: r.method.as_ref().and_then(Method::param),
        input_id: r.input_id,
        normalizers: &r.normalizers,
        degenerate_columns: &r.degenerate,
        data_file: format!("{stem}.bin"),
    };
    let bin_path = dir.join(format!("{stem}.bin"));
    fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))?;
    let mut json = serde_json::to_vec_pretty(&header).expect("header serializes");
    json.push(b'\n');
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
}

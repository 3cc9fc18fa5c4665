//! im2col-based convolution and max-pool kernels on `[C, H, W]` buffers.

use crate::numerics::gemm;

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kw) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn out_positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// Input index feeding `(patch row, output position)`, if not padding.
    #[inline]
    pub fn source(&self, patch_row: usize, pos: usize) -> Option<usize> {
        let c = patch_row / (self.kh * self.kw);
        let r = patch_row % (self.kh * self.kw);
        let (ky, kx) = (r / self.kw, r % self.kw);
        let wo = self.out_width();
        let (oy, ox) = (pos / wo, pos % wo);
        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
        let ix = (ox * self.stride + kx) as isize - self.padding as isize;
        if iy < 0 || ix < 0 || iy >= self.height as isize || ix >= self.width as isize {
            None
        } else {
            Some((c * self.height + iy as usize) * self.width + ix as usize)
        }
    }

    /// Unrolls the input into a `patch_len × out_positions` row-major matrix.
    pub fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let positions = self.out_positions();
        let mut cols = vec![0.0; self.patch_len() * positions];
        for row in 0..self.patch_len() {
            let dst = &mut cols[row * positions..(row + 1) * positions];
            for (pos, d) in dst.iter_mut().enumerate() {
                if let Some(src) = self.source(row, pos) {
                    *d = x[src];
                }
            }
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters columns back, summing overlaps.
    pub fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let positions = self.out_positions();
        let mut x = vec![0.0; self.channels * self.height * self.width];
        for row in 0..self.patch_len() {
            let src = &cols[row * positions..(row + 1) * positions];
            for (pos, &v) in src.iter().enumerate() {
                if let Some(dst) = self.source(row, pos) {
                    x[dst] += v;
                }
            }
        }
        x
    }

    /// `out[f, pos] = Σ weight[f, ·] · cols[·, pos] + bias[f]`.
    pub fn apply(&self, weight: &[f64], bias: Option<&[f64]>, cols: &[f64]) -> Vec<f64> {
        let positions = self.out_positions();
        let mut out = vec![0.0; self.filters * positions];
        if let Some(b) = bias {
            for (f, &bf) in b.iter().enumerate() {
                out[f * positions..(f + 1) * positions].fill(bf);
            }
        }
        gemm(
            self.filters,
            self.patch_len(),
            positions,
            1.0,
            weight,
            false,
            cols,
            false,
            1.0,
            &mut out,
        );
        out
    }

    /// `weightᵀ · grad_out`, folded back to input layout.
    pub fn transpose_apply(&self, weight: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let positions = self.out_positions();
        let mut cols = vec![0.0; self.patch_len() * positions];
        gemm(
            self.patch_len(),
            self.filters,
            positions,
            1.0,
            weight,
            true,
            grad_out,
            false,
            0.0,
            &mut cols,
        );
        self.col2im(&cols)
    }

    /// Accumulates `grad_out · colsᵀ` into `dweight` and row sums into `dbias`.
    pub fn accumulate_param_grads(
        &self,
        cols: &[f64],
        grad_out: &[f64],
        dweight: &mut [f64],
        dbias: Option<&mut [f64]>,
    ) {
        let positions = self.out_positions();
        gemm(
            self.filters,
            positions,
            self.patch_len(),
            1.0,
            grad_out,
            false,
            cols,
            true,
            1.0,
            dweight,
        );
        if let Some(db) = dbias {
            for (f, d) in db.iter_mut().enumerate() {
                *d += grad_out[f * positions..(f + 1) * positions].iter().sum::<f64>();
            }
        }
    }
}

/// Max pooling over `size × size` windows. Returns pooled values and, per
/// output, the flat input index of the winner: the first maximum in
/// row-major window order.
pub(crate) fn max_pool(
    x: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    size: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>) {
    let ho = (height - size) / stride + 1;
    let wo = (width - size) / stride + 1;
    let mut out = Vec::with_capacity(channels * ho * wo);
    let mut idx = Vec::with_capacity(channels * ho * wo);
    for c in 0..channels {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = usize::MAX;
                let mut best_val = f64::NEG_INFINITY;
                for ky in 0..size {
                    for kx in 0..size {
                        let i = (c * height + oy * stride + ky) * width + ox * stride + kx;
                        if best == usize::MAX || x[i] > best_val {
                            best = i;
                            best_val = x[i];
                        }
                    }
                }
                out.push(best_val);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

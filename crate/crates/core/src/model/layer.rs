use super::conv::{max_pool, ConvGeometry};
use crate::error::{Error, Result};
use crate::numerics::{gemm, Tensor};

/// Fully connected layer, `z = W a + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// 2-D convolution over `[C, H, W]` inputs, weights `[F, C, kh, kw]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Relu,
    MaxPool2d(MaxPool2d),
    Flatten,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::invalid("dense weight must be [out, in]"));
        }
        if let Some(b) = &bias {
            b.ensure_shape(&[weight.shape()[0]])?;
        }
        Ok(Dense { weight, bias })
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    /// `W' a + b'` for arbitrary weight/bias buffers of this layer's shape.
    pub(crate) fn apply_with(&self, weight: &[f64], bias: Option<&[f64]>, a: &[f64]) -> Vec<f64> {
        let (out, inp) = (self.outputs(), self.inputs());
        let mut z = match bias {
            Some(b) => b.to_vec(),
            None => vec![0.0; out],
        };
        gemm(out, inp, 1, 1.0, weight, false, a, false, 1.0, &mut z);
        z
    }

    /// `W'ᵀ g`.
    pub(crate) fn transpose_apply_with(&self, weight: &[f64], g: &[f64]) -> Vec<f64> {
        let (out, inp) = (self.outputs(), self.inputs());
        let mut r = vec![0.0; inp];
        gemm(inp, out, 1, 1.0, weight, true, g, false, 0.0, &mut r);
        r
    }
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Result<Self> {
        if weight.shape().len() != 4 {
            return Err(Error::invalid("conv weight must be [filters, channels, kh, kw]"));
        }
        if stride == 0 {
            return Err(Error::invalid("conv stride must be positive"));
        }
        if let Some(b) = &bias {
            b.ensure_shape(&[weight.shape()[0]])?;
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn filters(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn geometry(&self, input_shape: &[usize]) -> Result<ConvGeometry> {
        let ws = self.weight.shape();
        if input_shape.len() != 3 || input_shape[0] != ws[1] {
            return Err(Error::ShapeMismatch {
                expected: vec![ws[1], 0, 0],
                actual: input_shape.to_vec(),
            });
        }
        let g = ConvGeometry {
            channels: ws[1],
            height: input_shape[1],
            width: input_shape[2],
            filters: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride: self.stride,
            padding: self.padding,
        };
        if g.height + 2 * g.padding < g.kh || g.width + 2 * g.padding < g.kw {
            return Err(Error::invalid(format!(
                "{}x{} kernel does not fit a {}x{} input with padding {}",
                g.kh, g.kw, g.height, g.width, g.padding
            )));
        }
        Ok(g)
    }
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Flatten => "flatten",
        }
    }

    /// Dense and convolution layers carry weights; the rest are fixed maps.
    pub fn is_parametric(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    pub fn params(&self) -> Option<(&Tensor, Option<&Tensor>)> {
        match self {
            Layer::Dense(d) => Some((&d.weight, d.bias.as_ref())),
            Layer::Conv2d(c) => Some((&c.weight, c.bias.as_ref())),
            _ => None,
        }
    }

    /// The affine map of a dense/conv layer evaluated with substitute
    /// parameters of the same shapes.
    pub(crate) fn linear_forward(
        &self,
        input_shape: &[usize],
        weight: &[f64],
        bias: Option<&[f64]>,
        a: &[f64],
    ) -> Result<Vec<f64>> {
        match self {
            Layer::Dense(d) => Ok(d.apply_with(weight, bias, a)),
            Layer::Conv2d(c) => {
                let g = c.geometry(input_shape)?;
                Ok(g.apply(weight, bias, &g.im2col(a)))
            }
            _ => Err(Error::invalid(format!("{} layer has no weights", self.kind_name()))),
        }
    }

    /// Transpose of the linear part of [`linear_forward`](Self::linear_forward).
    pub(crate) fn linear_transpose(&self, input_shape: &[usize], weight: &[f64], s: &[f64]) -> Result<Vec<f64>> {
        match self {
            Layer::Dense(d) => Ok(d.transpose_apply_with(weight, s)),
            Layer::Conv2d(c) => Ok(c.geometry(input_shape)?.transpose_apply(weight, s)),
            _ => Err(Error::invalid(format!("{} layer has no weights", self.kind_name()))),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs()] {
                    return Err(Error::ShapeMismatch {
                        expected: vec![d.inputs()],
                        actual: input.to_vec(),
                    });
                }
                Ok(vec![d.outputs()])
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(input)?;
                Ok(vec![g.filters, g.out_height(), g.out_width()])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2d(p) => {
                if input.len() != 3 || input[1] < p.size || input[2] < p.size || p.stride == 0 {
                    return Err(Error::invalid(format!(
                        "max-pool {}x{} cannot reduce input {input:?}",
                        p.size, p.size
                    )));
                }
                Ok(vec![
                    input[0],
                    (input[1] - p.size) / p.stride + 1,
                    (input[2] - p.size) / p.stride + 1,
                ])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let data = match self {
            Layer::Dense(d) => d.apply_with(d.weight.data(), d.bias.as_ref().map(Tensor::data), x.data()),
            Layer::Conv2d(c) => {
                let g = c.geometry(x.shape())?;
                g.apply(c.weight.data(), c.bias.as_ref().map(Tensor::data), &g.im2col(x.data()))
            }
            Layer::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            Layer::MaxPool2d(p) => {
                let s = x.shape();
                max_pool(x.data(), s[0], s[1], s[2], p.size, p.stride).0
            }
            Layer::Flatten => x.data().to_vec(),
        };
        Tensor::new(out_shape, data)
    }

    /// Max-pool winner indices for input `x`; `None` for other layers.
    pub fn pool_winners(&self, x: &Tensor) -> Option<Vec<usize>> {
        match self {
            Layer::MaxPool2d(p) => {
                let s = x.shape();
                Some(max_pool(x.data(), s[0], s[1], s[2], p.size, p.stride).1)
            }
            _ => None,
        }
    }

    /// Vector-Jacobian product: maps `∂L/∂out` to `∂L/∂in` at input `x`.
    /// ReLU passes gradient where the input is strictly positive.
    pub fn backward_input(&self, x: &Tensor, grad_out: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Layer::Dense(d) => d.transpose_apply_with(d.weight.data(), grad_out),
            Layer::Conv2d(c) => c.geometry(x.shape())?.transpose_apply(c.weight.data(), grad_out),
            Layer::Relu => x
                .data()
                .iter()
                .zip(grad_out)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::MaxPool2d(_) => {
                let winners = self.pool_winners(x).expect("max-pool layer");
                let mut g = vec![0.0; x.len()];
                for (&w, &go) in winners.iter().zip(grad_out) {
                    g[w] += go;
                }
                g
            }
            Layer::Flatten => grad_out.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_by_hand() {
        let w = Tensor::new(vec![2, 2], vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let layer = Layer::Dense(Dense::new(w, None).unwrap());
        let z = layer.forward(&Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(z.data(), &[2.0, 3.0]);
    }

    #[test]
    fn relu_forward() {
        let z = Layer::Relu.forward(&Tensor::from_vec(vec![-1.0, 2.0])).unwrap();
        assert_eq!(z.data(), &[0.0, 2.0]);
    }

    #[test]
    fn pooling_and_weightless_layers_report_no_params() {
        assert!(!Layer::Relu.is_parametric());
        assert!(!Layer::MaxPool2d(MaxPool2d { size: 2, stride: 2 }).is_parametric());
        assert!(!Layer::Flatten.is_parametric());
    }

    #[test]
    fn shape_checks() {
        let w = Tensor::zeros(vec![3, 4]);
        let d = Layer::Dense(Dense::new(w, None).unwrap());
        assert!(d.forward(&Tensor::zeros(vec![5])).is_err());
        let bad_bias = Dense::new(Tensor::zeros(vec![3, 4]), Some(Tensor::zeros(vec![4])));
        assert!(bad_bias.is_err());
        let conv = Conv2d::new(Tensor::zeros(vec![2, 1, 3, 3]), None, 1, 1).unwrap();
        let c = Layer::Conv2d(conv);
        assert_eq!(c.output_shape(&[1, 6, 6]).unwrap(), vec![2, 6, 6]);
        assert!(c.output_shape(&[2, 6, 6]).is_err());
    }
}

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Inpaint {
    /// Masked pixels set to a constant.
    Constant(f64),
    /// Mean of the unmasked pixels in a `(2r+1)²` window. The window grows
    /// until it contains an unmasked pixel.
    MeanFill { radius: usize },
    /// Jacobi iterations of the Laplace equation on the masked pixels, with
    /// unmasked pixels as fixed boundary values, until the largest update
    /// falls below `tol`.
    Diffusion { tol: f64, max_iters: usize },
}

impl Inpaint {
    pub fn mean_fill() -> Self {
        Inpaint::MeanFill { radius: 3 }
    }

    pub fn diffusion() -> Self {
        Inpaint::Diffusion {
            tol: 1e-6,
            max_iters: 100_000,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Inpaint::Constant(_) => "constant",
            Inpaint::MeanFill { .. } => "mean_fill",
            Inpaint::Diffusion { .. } => "diffusion",
        }
    }
}

/// `(channels, height, width)` view of an image-like shape.
fn planes(shape: &[usize]) -> (usize, usize, usize) {
    match *shape {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => (1, 1, shape.iter().product()),
    }
}

struct Plane<'a> {
    img: &'a [f64],
    mask: &'a [bool],
    h: usize,
    w: usize,
    base: usize,
}

fn window_mean(p: &Plane, y: usize, x: usize, r: usize) -> Option<f64> {
    let Plane { img, mask, h, w, base } = *p;
    let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
    let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
    let mut sum = 0.0;
    let mut n = 0usize;
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            let i = base + yy * w + xx;
            if !mask[i] {
                sum += img[i];
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn mean_fill(img: &[f64], mask: &[bool], (c, h, w): (usize, usize, usize), radius: usize) -> Vec<f64> {
    let mut out = img.to_vec();
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let i = base + y * w + x;
                if !mask[i] {
                    continue;
                }
                let plane = Plane { img, mask, h, w, base };
                let mut r = radius;
                out[i] = loop {
                    if let Some(m) = window_mean(&plane, y, x, r) {
                        break m;
                    }
                    r += 1;
                };
            }
        }
    }
    out
}

fn diffusion(img: &[f64], mask: &[bool], dims: (usize, usize, usize), tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let (_, h, w) = dims;
    let mut cur = mean_fill(img, mask, dims, 1);
    let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut next = cur.clone();
    let mut last_update = f64::INFINITY;
    for _ in 0..max_iters {
        last_update = 0.0;
        for &i in &masked {
            let (ch, rem) = (i / (h * w), i % (h * w));
            let (y, x) = (rem / w, rem % w);
            let base = ch * h * w;
            let mut sum = 0.0;
            let mut n = 0.0;
            if y > 0 {
                sum += cur[base + (y - 1) * w + x];
                n += 1.0;
            }
            if y + 1 < h {
                sum += cur[base + (y + 1) * w + x];
                n += 1.0;
            }
            if x > 0 {
                sum += cur[i - 1];
                n += 1.0;
            }
            if x + 1 < w {
                sum += cur[i + 1];
                n += 1.0;
            }
            let v = if n > 0.0 { sum / n } else { cur[i] };
            last_update = f64::max(last_update, (v - cur[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut cur, &mut next);
        if last_update < tol {
            return Ok(cur);
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iters,
        last_estimate: last_update,
    })
}

/// Replaces the masked entries of `image`. An empty mask returns the image
/// unchanged; a fully masked image is an error.
pub fn inpaint(image: &Tensor, mask: &[bool], method: &Inpaint) -> Result<Tensor> {
    if mask.len() != image.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![image.len()],
            actual: vec![mask.len()],
        });
    }
    if !mask.contains(&true) {
        return Ok(image.clone());
    }
    let dims = planes(image.shape());
    let (c, h, w) = dims;
    for ch in 0..c {
        if mask[ch * h * w..(ch + 1) * h * w].iter().all(|&m| m) {
            return Err(Error::invalid("cannot inpaint a fully masked image"));
        }
    }
    let img = image.data();
    let data = match method {
        Inpaint::Constant(v) => img.iter().zip(mask).map(|(&p, &m)| if m { *v } else { p }).collect(),
        Inpaint::MeanFill { radius } => mean_fill(img, mask, dims, *radius),
        Inpaint::Diffusion { tol, max_iters } => {
            if !(*tol > 0.0) {
                return Err(Error::invalid("diffusion tolerance must be positive"));
            }
            diffusion(img, mask, dims, *tol, *max_iters)?
        }
    };
    Tensor::new(image.shape().to_vec(), data)
}

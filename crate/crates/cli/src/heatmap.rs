//! Signed attribution rasters: binary PPM with a diverging map, zero at
//! neutral gray, red for positive and blue for negative relevance.

use xai_spectral::numerics::Tensor;

const GRAY: f64 = 128.0;

/// `(height, width)` of the raster; channels are summed.
pub fn raster_dims(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [_, h, w] | [h, w] => (h, w),
        _ => (1, shape.iter().product()),
    }
}

fn channel_sum(t: &Tensor) -> Vec<f64> {
    let (h, w) = raster_dims(t.shape());
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for (i, v) in t.data().iter().enumerate() {
        out[i % plane] += v;
    }
    out
}

fn color(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let lerp = |a: f64, b: f64, s: f64| (a + (b - a) * s).round() as u8;
    if t >= 0.0 {
        [lerp(GRAY, 255.0, t), lerp(GRAY, 0.0, t), lerp(GRAY, 0.0, t)]
    } else {
        let s = -t;
        [lerp(GRAY, 0.0, s), lerp(GRAY, 0.0, s), lerp(GRAY, 255.0, s)]
    }
}

/// Renders with scale `max |value|`; an all-zero map is uniform gray.
pub fn render_ppm(values: &Tensor) -> Vec<u8> {
    let (h, w) = raster_dims(values.shape());
    let v = channel_sum(values);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for x in v {
        let t = if scale > 0.0 { x / scale } else { 0.0 };
        out.extend_from_slice(&color(t));
    }
    out
}

/// Little-endian f64 values in row-major order.
pub fn raw_bytes(values: &Tensor) -> Vec<u8> {
    values.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

use super::inpaint::{inpaint, Inpaint};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::numerics::Tensor;

/// Largest flipped fraction of the input.
pub const MAX_FLIP_FRACTION: f64 = 0.05;

/// Cumulative numbers of flipped features, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlipSchedule {
    counts: Vec<usize>,
}

fn max_flips(d: usize) -> usize {
    (MAX_FLIP_FRACTION * d as f64).floor() as usize
}

impl FlipSchedule {
    /// Rejects non-ascending counts and counts above `⌊0.05·d⌋`.
    pub fn new(counts: Vec<usize>, d: usize) -> Result<Self> {
        if counts.first() == Some(&0) || counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("flip counts must be positive and strictly ascending"));
        }
        if let Some(&last) = counts.last() {
            if last > max_flips(d) {
                return Err(Error::invalid(format!(
                    "flipping {last} of {d} features exceeds the 5% limit of {}",
                    max_flips(d)
                )));
            }
        }
        Ok(FlipSchedule { counts })
    }

    /// One feature per step up to `⌊0.05·d⌋` for `d ≤ 1024`, steps of 0.25%
    /// of `d` beyond that.
    pub fn default_for(d: usize) -> Self {
        let limit = max_flips(d);
        let step = if d <= 1024 {
            1
        } else {
            ((0.0025 * d as f64).round() as usize).max(1)
        };
        FlipSchedule {
            counts: (step..=limit).step_by(step).collect(),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlipCurve {
    /// Unflipped target logit.
    pub base_logit: f64,
    pub fractions: Vec<f64>,
    pub logits: Vec<f64>,
    /// Trapezoid integral over `[0, last fraction]`, divided by the span.
    pub auc: f64,
    /// The undivided trapezoid integral.
    pub auc_raw: f64,
}

/// Feature indices by descending attribution, lower index first on ties.
pub fn flip_order(attribution: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..attribution.len()).collect();
    order.sort_by(|&a, &b| attribution[b].total_cmp(&attribution[a]).then(a.cmp(&b)));
    order
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Removes the most relevant features step by step and records `z_j`. Each
/// step inpaints the original image under the cumulative mask.
pub fn pixel_flip(
    net: &Network,
    x: &Tensor,
    attribution: &Tensor,
    target: usize,
    schedule: &FlipSchedule,
    method: &Inpaint,
) -> Result<FlipCurve> {
    net.check_target(target)?;
    x.ensure_shape(net.input_shape())?;
    let d = x.len();
    if attribution.len() != d {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: attribution.shape().to_vec(),
        });
    }
    FlipSchedule::new(schedule.counts.clone(), d)?;
    let order = flip_order(attribution.data());
    let base_logit = net.logits(x)?.data()[target];

    let mut mask = vec![false; d];
    let mut flipped = 0;
    let mut fractions = Vec::with_capacity(schedule.counts.len());
    let mut logits = Vec::with_capacity(schedule.counts.len());
    for &count in &schedule.counts {
        for &i in &order[flipped..count] {
            mask[i] = true;
        }
        flipped = count;
        let xi = inpaint(x, &mask, method)?;
        fractions.push(count as f64 / d as f64);
        logits.push(net.logits(&xi)?.data()[target]);
    }

    let xs: Vec<f64> = std::iter::once(0.0).chain(fractions.iter().copied()).collect();
    let ys: Vec<f64> = std::iter::once(base_logit).chain(logits.iter().copied()).collect();
    let auc_raw = trapezoid(&xs, &ys);
    let span = xs.last().copied().unwrap_or(0.0);
    let auc = if span > 0.0 { auc_raw / span } else { base_logit };
    Ok(FlipCurve {
        base_logit,
        fractions,
        logits,
        auc,
        auc_raw,
    })
}

//! Parameter sweeps over images and attribution methods.
//!
//! Cells `(image, method)` run on a bounded pool of scoped threads; results
//! are stored by cell index, so the output is independent of scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::Result;
use crate::evaluation::{pixel_flip, shannon_entropy, FlipCurve, FlipSchedule, Inpaint};
use crate::explainers::Method;
use crate::model::Network;
use crate::numerics::Tensor;
use crate::redistribution::{build_redistribution, explain_readout, RedistributionMatrix};
use crate::spectral::{expand_explanation, spectral_summary, verify_stability_bound, SpectralSummary, StabilityReport};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// Pixel flipping of the target attribution, if enabled.
    pub flip: Option<(FlipSchedule, Inpaint)>,
    pub entropy: bool,
    /// Random readouts per matrix for the stability bound; 0 disables.
    pub stability_trials: usize,
    /// Expansion of the target readout into singular-value bins.
    pub expand_bins: Option<Vec<(usize, usize)>>,
    pub seed: u64,
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(methods: Vec<Method>) -> Self {
        SweepConfig {
            methods,
            flip: None,
            entropy: false,
            stability_trials: 0,
            expand_bins: None,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepImage {
    pub id: usize,
    pub x: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionSummary {
    /// `(first, last, norm_fraction)` per bin.
    pub bins: Vec<(usize, usize, f64)>,
    pub cumulative: Vec<f64>,
    /// `max |Σ bins − E(y)|`.
    pub reconstruction_error: f64,
}

/// Everything measured for one `(image, method)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub image_id: usize,
    pub method_index: usize,
    pub method: String,
    pub param: Option<f64>,
    /// Predicted class, explained for flipping, entropy and expansion.
    pub target: usize,
    pub spectral: Option<SpectralSummary>,
    pub degenerate_columns: Vec<usize>,
    pub negative_columns: Vec<usize>,
    pub flip: Option<FlipCurve>,
    pub entropy: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub expansion: Option<ExpansionSummary>,
    /// Set when the cell failed; the sweep continues.
    pub error: Option<String>,
}

/// Raw attribution of output `j`, recovered from the normalized column.
pub fn raw_attribution(r: &RedistributionMatrix, j: usize) -> Result<Tensor> {
    let s = r.normalizers()[j];
    let col = r.matrix().column(j);
    let data = if r.degenerate_columns().contains(&j) {
        col
    } else {
        col.into_iter().map(|v| v * s).collect()
    };
    Tensor::new(r.input_shape().to_vec(), data)
}

fn run_cell(net: &Network, image: &SweepImage, mi: usize, config: &SweepConfig) -> CellResult {
    let method = &config.methods[mi];
    let mut cell = CellResult {
        image_id: image.id,
        method_index: mi,
        method: method.name().to_string(),
        param: method.param(),
        target: 0,
        spectral: None,
        degenerate_columns: Vec::new(),
        negative_columns: Vec::new(),
        flip: None,
        entropy: None,
        stability: None,
        expansion: None,
        error: None,
    };
    if let Err(e) = fill_cell(net, image, method, config, &mut cell) {
        cell.error = Some(e.to_string());
    }
    cell
}

fn fill_cell(
    net: &Network,
    image: &SweepImage,
    method: &Method,
    config: &SweepConfig,
    cell: &mut CellResult,
) -> Result<()> {
    let logits = net.logits(&image.x)?;
    cell.target = logits.argmax();
    let mut r = build_redistribution(net, &image.x, method)?;
    r.input_id = Some(image.id);
    cell.degenerate_columns = r.degenerate_columns().to_vec();
    cell.negative_columns = r.negative_columns();
    cell.spectral = Some(spectral_summary(&r)?);
    let attribution = raw_attribution(&r, cell.target)?;
    if config.entropy {
        cell.entropy = Some(shannon_entropy(attribution.data())?);
    }
    if let Some((schedule, inpaint)) = &config.flip {
        cell.flip = Some(pixel_flip(net, &image.x, &attribution, cell.target, schedule, inpaint)?);
    }
    if config.stability_trials > 0 {
        let seed = config.seed ^ (image.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        cell.stability = Some(verify_stability_bound(&r, config.stability_trials, seed)?);
    }
    if let Some(bins) = &config.expand_bins {
        let mut y = vec![0.0; r.outputs()];
        y[cell.target] = 1.0;
        let full = explain_readout(&r, &y)?;
        let k = r.inputs().min(r.outputs());
        let e = expand_explanation(&r, &y, bins)?;
        // compare against E(y) using the singleton bins, plus the configured
        // bins when they cover every index
        let singletons: Vec<(usize, usize)> = (1..=k).map(|i| (i, i)).collect();
        let mut parts = vec![expand_explanation(&r, &y, &singletons)?.bins];
        if e.bins.iter().map(|b| b.last + 1 - b.first).sum::<usize>() == k {
            parts.push(e.bins.clone());
        }
        let mut err = 0.0f64;
        for bins in parts {
            let mut sum = vec![0.0; full.len()];
            for b in &bins {
                sum.iter_mut().zip(b.map.data()).for_each(|(s, v)| *s += v);
            }
            for (a, b) in sum.iter().zip(full.data()) {
                err = err.max((a - b).abs());
            }
        }
        cell.expansion = Some(ExpansionSummary {
            bins: e.bins.iter().map(|b| (b.first, b.last, b.norm_fraction)).collect(),
            cumulative: e.cumulative,
            reconstruction_error: err,
        });
    }
    Ok(())
}

/// Runs every `(image, method)` cell. Results are ordered by image, then by
/// method index.
pub fn run_sweep(net: &Network, images: &[SweepImage], config: &SweepConfig) -> Vec<CellResult> {
    let m = config.methods.len();
    let total = images.len() * m;
    let slots: Vec<Mutex<Option<CellResult>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, total.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let result = run_cell(net, &images[i / m], i % m, config);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every cell ran"))
        .collect()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub count: usize,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Option<Band> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Band {
            count: v.len(),
            median: quantile(&v, 0.5),
            q05: quantile(&v, 0.05),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
            q95: quantile(&v, 0.95),
        })
    }
}

/// Metrics aggregated across images; the flag says whether larger is better.
pub const METRICS: [(&str, bool); 7] = [
    ("sigma1", false),
    ("stability", true),
    ("sensitivity", true),
    ("ssm", true),
    ("pf_auc", false),
    ("pf_auc_raw", false),
    ("entropy", false),
];

pub fn metric_value(cell: &CellResult, metric: &str) -> Option<f64> {
    let s = cell.spectral.as_ref();
    match metric {
        "sigma1" => s.map(SpectralSummary::sigma1),
        "stability" => s.map(|s| s.stability),
        "sensitivity" => s.map(|s| s.sensitivity),
        "ssm" => s.map(|s| s.ssm),
        "pf_auc" => cell.flip.as_ref().map(|f| f.auc),
        "pf_auc_raw" => cell.flip.as_ref().map(|f| f.auc_raw),
        "entropy" => cell.entropy,
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub method_index: usize,
    pub param: Option<f64>,
    pub metric: &'static str,
    pub band: Band,
    /// Best median among the parameters of the same method.
    pub star: bool,
}

/// Median and quantile bands per `(method, param, metric)`, starring the
/// parameter with the best median for each method family and metric.
pub fn aggregate(cells: &[CellResult], methods: &[Method]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for (metric, larger_better) in METRICS {
        let start = rows.len();
        for (mi, method) in methods.iter().enumerate() {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.method_index == mi)
                .filter_map(|c| metric_value(c, metric))
                .collect();
            if let Some(band) = Band::of(&values) {
                rows.push(AggregateRow {
                    method: method.name().to_string(),
                    method_index: mi,
                    param: method.param(),
                    metric,
                    band,
                    star: false,
                });
            }
        }
        let block = &mut rows[start..];
        let mut names: Vec<String> = block.iter().map(|r| r.method.clone()).collect();
        names.dedup();
        for name in names {
            let mut best: Option<usize> = None;
            for (i, r) in block.iter().enumerate() {
                if r.method != name {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) if larger_better => r.band.median > block[b].band.median,
                    Some(b) => r.band.median < block[b].band.median,
                };
                if better {
                    best = Some(i);
                }
            }
            if let Some(b) = best {
                block[b].star = true;
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.95), 7.0);
    }
}

//! Config keys shared by several commands: model and image selection,
//! attribution methods and worker count.

use std::path::Path;

use xai_spectral::explainers::{LrpConfig, Method, ShapleyParams, SmoothGradParams};
use xai_spectral::model::{load_idx, load_idx_dir, load_model, Dataset, Network};
use xai_spectral::numerics::Tensor;

use crate::{CliError, Config, WORKERS_ENV};

pub const DATA_KEYS: &[&str] = &["data", "subset", "holdout_fraction", "split_seed"];

pub const METHOD_KEYS: &[&str] = &[
    "method",
    "lrp_last_epsilon",
    "lrp_first_bounds",
    "lrp_stabilizer",
    "smoothgrad_samples",
    "smoothgrad_times_input",
    "ig_baseline",
    "shapley_patch",
    "shapley_baseline",
];

pub fn model(config: &Config) -> Result<Network, CliError> {
    let path = config.existing_path("model")?;
    Ok(load_model(path)?)
}

/// A directory with one IDX image/label pair, or `images.idx,labels.idx`.
pub fn load_data(spec: &str) -> Result<Dataset, CliError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    for p in &parts {
        if !Path::new(p).exists() {
            return Err(CliError::usage(format!("data path does not exist: {p}")));
        }
    }
    Ok(match parts.as_slice() {
        [dir] => load_idx_dir(dir)?,
        [images, labels] => load_idx(images, labels)?,
        _ => return Err(CliError::usage("data must be a directory or `images,labels`")),
    })
}

/// The dataset selected by `data` and `subset` (`all`, `train` or
/// `holdout`); the split repeats the trainer's with `split_seed`.
pub fn dataset(config: &Config) -> Result<Dataset, CliError> {
    let data = load_data(config.require("data")?)?;
    let fraction = config.f64_or("holdout_fraction", 0.2)?;
    let seed = config.u64_or("split_seed", 7)?;
    match config.get("subset").unwrap_or("all") {
        "all" => Ok(data),
        "train" => Ok(data.split(fraction, seed).0),
        "holdout" => Ok(data.split(fraction, seed).1),
        other => Err(CliError::usage(format!(
            "subset must be all, train or holdout, got `{other}`"
        ))),
    }
}

/// Images selected by the `images` key (default `0-99`).
pub fn images(config: &Config, data: &Dataset) -> Result<Vec<(usize, Tensor)>, CliError> {
    let ids = config.usize_list("images")?.unwrap_or_else(|| (0..100).collect());
    ids.into_iter()
        .map(|i| {
            if i >= data.len() {
                Err(CliError::usage(format!(
                    "image id {i} out of range; the subset has {} images",
                    data.len()
                )))
            } else {
                Ok((i, data.image(i)))
            }
        })
        .collect()
}

pub fn image(config: &Config, data: &Dataset) -> Result<(usize, Tensor), CliError> {
    let i = config.usize_or("image", 0)?;
    if i >= data.len() {
        return Err(CliError::usage(format!(
            "image id {i} out of range; the subset has {} images",
            data.len()
        )));
    }
    Ok((i, data.image(i)))
}

/// Explicit `workers` key, then the environment, then available cores.
pub fn workers(config: &Config) -> Result<usize, CliError> {
    if let Some(v) = config.get("workers") {
        return v
            .parse()
            .map_err(|_| CliError::usage(format!("workers: cannot parse `{v}`")));
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return v
            .parse()
            .map_err(|_| CliError::usage(format!("{WORKERS_ENV}: cannot parse `{v}`")));
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Builds the LRP configuration for one γ from the shared LRP keys.
pub fn lrp_config(config: &Config, gamma: f64) -> Result<LrpConfig, CliError> {
    let mut c = LrpConfig::gamma(gamma);
    c.last_layer_epsilon = match config.get("lrp_last_epsilon") {
        None => c.last_layer_epsilon,
        Some("none") => None,
        Some(_) => Some(config.f64_or("lrp_last_epsilon", 0.0)?),
    };
    if let Some(b) = config.f64_list("lrp_first_bounds")? {
        let [lo, hi] = b[..] else {
            return Err(CliError::usage("lrp_first_bounds must be `low,high`"));
        };
        c.first_layer_bounds = Some((lo, hi));
    }
    c.stabilizer = config.f64_or("lrp_stabilizer", c.stabilizer)?;
    Ok(c)
}

/// Parses one method spec: `gxi`, `lrp:GAMMA`, `smoothgrad:NOISE`,
/// `ig:STEPS` or `shapley:CYCLES`.
pub fn parse_method(config: &Config, spec: &str, seed: u64) -> Result<Method, CliError> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    let need = |what: &str| -> Result<&str, CliError> {
        arg.ok_or_else(|| CliError::usage(format!("method `{name}` needs `{name}:{what}`")))
    };
    let num = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::usage(format!("method `{spec}`: cannot parse `{s}`")))
    };
    let count = |s: &str| -> Result<usize, CliError> {
        s.parse()
            .map_err(|_| CliError::usage(format!("method `{spec}`: cannot parse `{s}`")))
    };
    Ok(match name {
        "gxi" | "gradient_x_input" => Method::GradientXInput,
        "lrp" => Method::Lrp(lrp_config(config, num(need("GAMMA")?)?)?),
        "smoothgrad" | "sg" => {
            let mut p = SmoothGradParams::new(num(need("NOISE")?)?, config.usize_or("smoothgrad_samples", 10)?, seed);
            p.times_input = config.bool_or("smoothgrad_times_input", false)?;
            Method::SmoothGrad(p)
        }
        "ig" | "integrated_gradients" => Method::IntegratedGradients {
            steps: count(need("STEPS")?)?,
            baseline_value: config.f64_or("ig_baseline", 0.0)?,
        },
        "shapley" => {
            let mut p = ShapleyParams::new(count(need("CYCLES")?)?, seed);
            p.patch_size = config.usize_or("shapley_patch", 1)?;
            p.baseline_value = config.f64_or("shapley_baseline", 0.0)?;
            Method::ShapleySampling(p)
        }
        _ => return Err(CliError::usage(format!("unknown method `{name}`"))),
    })
}

/// Every method named by the comma-separated `method` key.
pub fn methods(config: &Config, seed: u64) -> Result<Vec<Method>, CliError> {
    config
        .list("method")
        .unwrap_or_default()
        .iter()
        .map(|s| parse_method(config, s, seed))
        .collect()
}

/// `lo,hi,n`: `n` log-spaced values from `lo` to `hi`.
pub fn logspace(config: &Config, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    let Some(v) = config.f64_list(key)? else {
        return Ok(None);
    };
    let [lo, hi, n] = v[..] else {
        return Err(CliError::usage(format!("{key} must be `low,high,count`")));
    };
    if !(lo > 0.0 && hi >= lo && n >= 1.0 && n.fract() == 0.0) {
        return Err(CliError::usage(format!(
            "{key}: need 0 < low ≤ high and an integer count ≥ 1"
        )));
    }
    let n = n as usize;
    Ok(Some(
        (0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
                }
            })
            .collect(),
    ))
}

pub fn target_or_predicted(config: &Config, net: &Network, x: &Tensor) -> Result<usize, CliError> {
    match config.get("target") {
        Some(_) => {
            let t = config.usize_or("target", 0)?;
            if t >= net.output_dim() {
                return Err(CliError::usage(format!(
                    "target {t} out of range for {} outputs",
                    net.output_dim()
                )));
            }
            Ok(t)
        }
        None => Ok(net.logits(x)?.argmax()),
    }
}

pub fn method_label(m: &Method) -> (String, String) {
    (m.name().to_string(), crate::report::fmt_opt(m.param()))
}

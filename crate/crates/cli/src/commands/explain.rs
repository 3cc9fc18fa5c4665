use xai_spectral::evaluation::pixel_flip;
use xai_spectral::explainers::{explain, Method};
use xai_spectral::redistribution::build_redistribution;
use xai_spectral::spectral::{default_bins, expand_explanation};

use super::sweep::{inpaint, schedule};
use super::{allowed, out_dir};
use crate::heatmap::{raw_bytes, render_ppm};
use crate::report::{fmt_f64, fmt_opt, write_file, Csv};
use crate::setup::{self, DATA_KEYS, METHOD_KEYS};
use crate::{CliError, Config};

fn single_method(config: &Config, seed: u64) -> Result<Method, CliError> {
    let mut methods = setup::methods(config, seed)?;
    match methods.len() {
        1 => Ok(methods.remove(0)),
        0 => Err(CliError::usage("missing required key `method`")),
        _ => Err(CliError::usage("this command explains with exactly one method")),
    }
}

/// Writes `<stem>.ppm`, the raw f64 sidecar `<stem>.bin` and `<stem>.json`.
fn write_heatmap(
    out: &std::path::Path,
    stem: &str,
    values: &xai_spectral::numerics::Tensor,
    meta: &[(&str, String)],
) -> Result<(), CliError> {
    write_file(&out.join(format!("{stem}.ppm")), &render_ppm(values))?;
    write_file(&out.join(format!("{stem}.bin")), &raw_bytes(values))?;
    let shape: Vec<String> = values.shape().iter().map(|s| s.to_string()).collect();
    let mut json = format!("{{\n  \"shape\": [{}],\n  \"dtype\": \"f64le\"", shape.join(", "));
    for (k, v) in meta {
        json.push_str(&format!(",\n  \"{k}\": {v}"));
    }
    json.push_str(&format!(",\n  \"scale\": \"{}\"\n}}\n", fmt_f64(values.max_abs())));
    write_file(&out.join(format!("{stem}.json")), json.as_bytes())
}

fn meta(image: usize, m: &Method, target: usize) -> Vec<(&'static str, String)> {
    vec![
        ("image_id", image.to_string()),
        ("method", format!("\"{}\"", m.name())),
        ("param", format!("\"{}\"", fmt_opt(m.param()))),
        ("target", target.to_string()),
    ]
}

const HEATMAP_KEYS: &[&str] = &["model", "image", "target", "seed", "out"];

/// Renders the attribution of one image as a signed heat map.
pub fn cmd_heatmap(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[HEATMAP_KEYS, DATA_KEYS, METHOD_KEYS]))?;
    let net = setup::model(config)?;
    let data = setup::dataset(config)?;
    let (id, x) = setup::image(config, &data)?;
    let method = single_method(config, config.u64_or("seed", 0)?)?;
    let target = setup::target_or_predicted(config, &net, &x)?;
    let out = out_dir(config)?;
    let a = explain(&net, &x, target, &method)?;
    write_heatmap(&out, "heatmap", &a.values, &meta(id, &method, target))
}

const FLIP_KEYS: &[&str] = &["model", "images", "target", "seed", "out", "inpaint", "flip_counts"];

/// Pixel-flipping curves of the predicted (or given) class.
pub fn cmd_flip(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[FLIP_KEYS, DATA_KEYS, METHOD_KEYS]))?;
    let net = setup::model(config)?;
    let data = setup::dataset(config)?;
    let images = setup::images(config, &data)?;
    let methods = setup::methods(config, config.u64_or("seed", 0)?)?;
    if methods.is_empty() {
        return Err(CliError::usage("missing required key `method`"));
    }
    let sched = schedule(config, net.input_dim())?;
    let fill = inpaint(config)?;
    let out = out_dir(config)?;
    let mut curves = Csv::new(&["image_id", "method", "param", "fraction", "logit"]);
    let mut auc = Csv::new(&["image_id", "method", "param", "base_logit", "auc", "auc_raw"]);
    for (id, x) in &images {
        let target = setup::target_or_predicted(config, &net, x)?;
        for m in &methods {
            let a = explain(&net, x, target, m)?;
            let f = pixel_flip(&net, x, &a.values, target, &sched, &fill)?;
            let (name, param) = setup::method_label(m);
            for (fr, z) in f.fractions.iter().zip(&f.logits) {
                curves.row(&[id.to_string(), name.clone(), param.clone(), fmt_f64(*fr), fmt_f64(*z)]);
            }
            auc.row(&[
                id.to_string(),
                name,
                param,
                fmt_f64(f.base_logit),
                fmt_f64(f.auc),
                fmt_f64(f.auc_raw),
            ]);
        }
    }
    curves.write(&out.join("pixel_flip.csv"))?;
    auc.write(&out.join("pf_auc.csv"))
}

const EXPAND_KEYS: &[&str] = &["model", "image", "target", "seed", "out", "bins", "readout"];

/// Splits an explanation into singular-value bins, one heat map per bin.
pub fn cmd_expand(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[EXPAND_KEYS, DATA_KEYS, METHOD_KEYS]))?;
    let net = setup::model(config)?;
    let data = setup::dataset(config)?;
    let (id, x) = setup::image(config, &data)?;
    let method = single_method(config, config.u64_or("seed", 0)?)?;
    let target = setup::target_or_predicted(config, &net, &x)?;
    let r = build_redistribution(&net, &x, &method)?;
    let k = r.inputs().min(r.outputs());
    let bins = match config.get("bins") {
        None | Some("default") => default_bins(k),
        Some(_) => config.bins("bins")?.unwrap_or_default(),
    };
    // `raw` scales e_j by the column sum, so the full map is E(z_j) itself
    let mut y = vec![0.0; r.outputs()];
    y[target] = match config.get("readout").unwrap_or("raw") {
        "raw" if !r.degenerate_columns().contains(&target) => r.normalizers()[target],
        "raw" | "unit" => 1.0,
        other => return Err(CliError::usage(format!("readout must be raw or unit, got `{other}`"))),
    };
    let e = expand_explanation(&r, &y, &bins)?;
    for w in &e.warnings {
        eprintln!("warning: {w}");
    }
    let out = out_dir(config)?;
    let full = xai_spectral::redistribution::explain_readout(&r, &y)?;
    let base = meta(id, &method, target);
    write_heatmap(&out, "heatmap", &full, &base)?;
    let mut table = Csv::new(&["first", "last", "norm_fraction"]);
    for b in &e.bins {
        let stem = format!("bin_{}-{}_frac{:.4}", b.first, b.last, b.norm_fraction);
        let mut m = base.clone();
        m.push(("bin", format!("[{}, {}]", b.first, b.last)));
        m.push(("norm_fraction", format!("\"{}\"", fmt_f64(b.norm_fraction))));
        write_heatmap(&out, &stem, &b.map, &m)?;
        table.row(&[b.first.to_string(), b.last.to_string(), fmt_f64(b.norm_fraction)]);
    }
    table.write(&out.join("bins.csv"))?;
    let mut cumulative = Csv::new(&["k", "cumulative_norm_fraction"]);
    for (i, c) in e.cumulative.iter().enumerate() {
        cumulative.row(&[(i + 1).to_string(), fmt_f64(*c)]);
    }
    cumulative.write(&out.join("cumulative.csv"))
}

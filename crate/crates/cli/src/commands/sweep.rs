use xai_spectral::evaluation::{FlipSchedule, Inpaint};
use xai_spectral::explainers::Method;
use xai_spectral::spectral::default_bins;
use xai_spectral::sweep::{aggregate, run_sweep, CellResult, SweepConfig, SweepImage};

use super::{allowed, out_dir};
use crate::report::{fmt_f64, fmt_opt, write_file, Csv, PLOT_SCRIPT};
use crate::setup::{self, DATA_KEYS, METHOD_KEYS};
use crate::{CliError, Config};

const KEYS: &[&str] = &[
    "model",
    "images",
    "out",
    "seed",
    "workers",
    "lrp_gammas",
    "lrp_gamma_logspace",
    "smoothgrad_noises",
    "ig_steps",
    "shapley_cycles",
    "gxi",
    "flip",
    "flip_counts",
    "inpaint",
    "entropy",
    "stability_trials",
    "expand_bins",
];

pub(crate) const INPAINT_HELP: &str = "inpaint must be diffusion, mean_fill, mean_fill:RADIUS or constant:VALUE";

pub(crate) fn inpaint(config: &Config) -> Result<Inpaint, CliError> {
    let spec = config.get("inpaint").unwrap_or("diffusion");
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let bad = || CliError::usage(INPAINT_HELP);
    Ok(match (name, arg) {
        ("diffusion", None) => Inpaint::diffusion(),
        ("mean_fill", None) => Inpaint::mean_fill(),
        ("mean_fill", Some(r)) => Inpaint::MeanFill {
            radius: r.parse().map_err(|_| bad())?,
        },
        ("constant", Some(v)) => Inpaint::Constant(v.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    })
}

pub(crate) fn schedule(config: &Config, d: usize) -> Result<FlipSchedule, CliError> {
    match config.usize_list("flip_counts")? {
        Some(counts) => Ok(FlipSchedule::new(counts, d)?),
        None => Ok(FlipSchedule::default_for(d)),
    }
}

/// The method grid: explicit `method` specs, then LRP, SmoothGrad, IG and
/// Shapley grids, then Gradient×Input.
fn method_grid(config: &Config, seed: u64) -> Result<Vec<Method>, CliError> {
    let mut specs: Vec<String> = config.list("method").unwrap_or_default();
    let mut gammas = config.f64_list("lrp_gammas")?.unwrap_or_default();
    gammas.extend(setup::logspace(config, "lrp_gamma_logspace")?.unwrap_or_default());
    specs.extend(gammas.iter().map(|g| format!("lrp:{g}")));
    for (key, name) in [
        ("smoothgrad_noises", "smoothgrad"),
        ("ig_steps", "ig"),
        ("shapley_cycles", "shapley"),
    ] {
        for v in config.list(key).unwrap_or_default() {
            specs.push(format!("{name}:{v}"));
        }
    }
    if config.bool_or("gxi", false)? {
        specs.push("gxi".to_string());
    }
    if specs.is_empty() {
        return Err(CliError::usage(
            "no methods: set method, lrp_gammas, lrp_gamma_logspace, smoothgrad_noises, ig_steps, shapley_cycles or gxi",
        ));
    }
    specs.iter().map(|s| setup::parse_method(config, s, seed)).collect()
}

fn label(c: &CellResult) -> [String; 3] {
    [c.image_id.to_string(), c.method.clone(), fmt_opt(c.param)]
}

fn with_label(c: &CellResult, rest: impl IntoIterator<Item = String>) -> Vec<String> {
    label(c).into_iter().chain(rest).collect()
}

/// Writes every per-cell report plus `aggregate.csv` and `plot_sweep.py`.
pub fn write_reports(out: &std::path::Path, cells: &[CellResult], methods: &[Method]) -> Result<(), CliError> {
    let head = ["image_id", "method", "param"];
    let cols = |rest: &[&'static str]| -> Vec<&'static str> { head.iter().chain(rest).copied().collect() };
    let mut spectral = Csv::new(&cols(&["target", "sigma1", "stability", "sensitivity", "ssm", "k"]));
    let mut sigma = Csv::new(&cols(&["index", "sigma"]));
    let mut flips = Csv::new(&cols(&["fraction", "logit"]));
    let mut auc = Csv::new(&cols(&["base_logit", "auc", "auc_raw"]));
    let mut entropy = Csv::new(&cols(&["entropy"]));
    let mut stability = Csv::new(&cols(&["sigma1", "trials", "max_ratio", "violations"]));
    let mut expansion = Csv::new(&cols(&["first", "last", "norm_fraction", "reconstruction_error"]));
    let mut degenerate = Csv::new(&cols(&["kind", "detail"]));
    for c in cells {
        for k in &c.degenerate_columns {
            degenerate.row(&with_label(c, ["degenerate_column".into(), k.to_string()]));
        }
        for k in &c.negative_columns {
            degenerate.row(&with_label(c, ["negative_column".into(), k.to_string()]));
        }
        if let Some(e) = &c.error {
            degenerate.row(&with_label(c, ["error".into(), format!("\"{}\"", e.replace('"', "'"))]));
        }
        if let Some(s) = &c.spectral {
            spectral.row(&with_label(
                c,
                [
                    c.target.to_string(),
                    fmt_f64(s.sigma1()),
                    fmt_f64(s.stability),
                    fmt_f64(s.sensitivity),
                    fmt_f64(s.ssm),
                    s.k.to_string(),
                ],
            ));
            for (i, v) in s.sigma.iter().enumerate() {
                sigma.row(&with_label(c, [(i + 1).to_string(), fmt_f64(*v)]));
            }
        }
        if let Some(f) = &c.flip {
            for (x, y) in f.fractions.iter().zip(&f.logits) {
                flips.row(&with_label(c, [fmt_f64(*x), fmt_f64(*y)]));
            }
            auc.row(&with_label(
                c,
                [fmt_f64(f.base_logit), fmt_f64(f.auc), fmt_f64(f.auc_raw)],
            ));
        }
        if let Some(h) = c.entropy {
            entropy.row(&with_label(c, [fmt_f64(h)]));
        }
        if let Some(s) = &c.stability {
            stability.row(&with_label(
                c,
                [
                    fmt_f64(s.sigma1),
                    s.trials.to_string(),
                    fmt_f64(s.max_ratio),
                    s.violations.to_string(),
                ],
            ));
        }
        if let Some(e) = &c.expansion {
            for &(first, last, frac) in &e.bins {
                expansion.row(&with_label(
                    c,
                    [
                        first.to_string(),
                        last.to_string(),
                        fmt_f64(frac),
                        fmt_f64(e.reconstruction_error),
                    ],
                ));
            }
        }
    }
    let mut agg = Csv::new(&[
        "method", "param", "metric", "count", "median", "q05", "q25", "q75", "q95", "star",
    ]);
    for r in aggregate(cells, methods) {
        let b = &r.band;
        agg.row(&[
            r.method.clone(),
            fmt_opt(r.param),
            r.metric.to_string(),
            b.count.to_string(),
            fmt_f64(b.median),
            fmt_f64(b.q05),
            fmt_f64(b.q25),
            fmt_f64(b.q75),
            fmt_f64(b.q95),
            u8::from(r.star).to_string(),
        ]);
    }
    let files = [
        ("spectral.csv", &spectral),
        ("sigma.csv", &sigma),
        ("pixel_flip.csv", &flips),
        ("pf_auc.csv", &auc),
        ("entropy.csv", &entropy),
        ("stability.csv", &stability),
        ("expansion.csv", &expansion),
        ("degenerate.csv", &degenerate),
        ("aggregate.csv", &agg),
    ];
    for (name, csv) in files {
        csv.write(&out.join(name))?;
    }
    write_file(&out.join("plot_sweep.py"), PLOT_SCRIPT.as_bytes())
}

/// Spectral summaries, pixel flipping, entropy, stability checks and
/// expansions for every `(image, method)` cell.
pub fn cmd_sweep(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[KEYS, DATA_KEYS, METHOD_KEYS]))?;
    let net = setup::model(config)?;
    let data = setup::dataset(config)?;
    let images: Vec<SweepImage> = setup::images(config, &data)?
        .into_iter()
        .map(|(id, x)| SweepImage { id, x })
        .collect();
    let seed = config.u64_or("seed", 0)?;
    let methods = method_grid(config, seed)?;
    let out = out_dir(config)?;

    let mut sc = SweepConfig::new(methods.clone());
    sc.seed = seed;
    sc.workers = setup::workers(config)?;
    sc.entropy = config.bool_or("entropy", true)?;
    sc.stability_trials = config.usize_or("stability_trials", 0)?;
    if config.bool_or("flip", true)? {
        sc.flip = Some((schedule(config, net.input_dim())?, inpaint(config)?));
    }
    sc.expand_bins = match config.get("expand_bins") {
        None | Some("none") => None,
        Some("default") => Some(default_bins(net.input_dim().min(net.output_dim()))),
        Some(_) => config.bins("expand_bins")?,
    };

    eprintln!(
        "sweep: {} images x {} methods on {} workers",
        images.len(),
        methods.len(),
        sc.workers
    );
    let cells = run_sweep(&net, &images, &sc);
    write_reports(&out, &cells, &methods)?;

    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    let violations: usize = cells
        .iter()
        .filter_map(|c| c.stability.as_ref())
        .map(|s| s.violations)
        .sum();
    eprintln!("wrote {} ({} cells, {failed} failed)", out.display(), cells.len());
    if violations > 0 {
        return Err(CliError::internal(format!("{violations} stability-bound violations")));
    }
    Ok(())
}

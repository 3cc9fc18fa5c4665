use xai_spectral::theory::network_bound_report;

use super::{allowed, out_dir};
use crate::report::{fmt_f64, Csv};
use crate::setup::{self, DATA_KEYS};
use crate::{CliError, Config};

const KEYS: &[&str] = &["model", "images", "out", "gammas", "lrp_last_epsilon", "lrp_stabilizer"];

const DEFAULT_GAMMAS: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

/// Per-layer closed-form bounds against realized LRP amplification.
///
/// Fails with exit code 1 when any link of the bound chain is violated,
/// after writing the reports.
pub fn cmd_theory_report(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[KEYS, DATA_KEYS]))?;
    let net = setup::model(config)?;
    let data = setup::dataset(config)?;
    let mut cfg = config.clone();
    if cfg.get("images").is_none() {
        cfg.set("images", "0-9")?;
    }
    let images = setup::images(&cfg, &data)?;
    let gammas = config.f64_list("gammas")?.unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    let out = out_dir(config)?;

    let mut layers = Csv::new(&[
        "image_id",
        "layer",
        "gamma",
        "c",
        "analytic_l1",
        "numeric_l1",
        "product_bound",
        "realized_ratio",
    ]);
    let mut summary = Csv::new(&[
        "image_id",
        "gamma",
        "product_bound",
        "product_numeric",
        "chain_l1",
        "median_ratio",
        "holds",
    ]);
    let mut broken = 0;
    for (id, x) in &images {
        for &g in &gammas {
            let plan = setup::lrp_config(config, g)?.plan(&net)?;
            let r = network_bound_report(&net, x, &plan)?;
            for l in &r.layers {
                layers.row(&[
                    id.to_string(),
                    l.layer.to_string(),
                    fmt_f64(l.gamma),
                    fmt_f64(l.c),
                    fmt_f64(l.analytic_l1),
                    fmt_f64(l.numeric_l1),
                    fmt_f64(r.product_bound),
                    fmt_f64(r.chain_l1()),
                ]);
            }
            let holds = r.chain_holds();
            broken += usize::from(!holds);
            summary.row(&[
                id.to_string(),
                fmt_f64(g),
                fmt_f64(r.product_bound),
                fmt_f64(r.product_numeric),
                fmt_f64(r.chain_l1()),
                fmt_f64(r.median_ratio()),
                u8::from(holds).to_string(),
            ]);
        }
    }
    layers.write(&out.join("theory.csv"))?;
    summary.write(&out.join("theory_summary.csv"))?;
    if broken > 0 {
        return Err(CliError::internal(format!(
            "bound chain violated for {broken} (image, gamma) pairs"
        )));
    }
    Ok(())
}

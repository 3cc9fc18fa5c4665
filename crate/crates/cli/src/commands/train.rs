use xai_spectral::model::{save_model, train, Architecture, TrainConfig};

use super::{allowed, out_dir};
use crate::report::{fmt_f64, write_file, Csv};
use crate::setup::load_data;
use crate::{CliError, Config};

const KEYS: &[&str] = &[
    "data",
    "out",
    "seed",
    "epochs",
    "batch_size",
    "learning_rate",
    "holdout_fraction",
    "arch",
    "mlp_hidden",
    "limit",
    "min_accuracy",
];

fn train_config(config: &Config) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let architecture = match config.get("arch").unwrap_or("cnn") {
        "cnn" => Architecture::MnistCnn,
        "mlp" => Architecture::Mlp {
            hidden: config.usize_list("mlp_hidden")?.unwrap_or_else(|| vec![64]),
        },
        other => return Err(CliError::usage(format!("arch must be cnn or mlp, got `{other}`"))),
    };
    Ok(TrainConfig {
        architecture,
        epochs: config.usize_or("epochs", d.epochs)?,
        batch_size: config.usize_or("batch_size", d.batch_size)?,
        learning_rate: config.f64_or("learning_rate", d.learning_rate)?,
        seed: config.u64_or("seed", d.seed)?,
        holdout_fraction: config.f64_or("holdout_fraction", d.holdout_fraction)?,
        min_accuracy: config
            .get("min_accuracy")
            .map(|_| config.f64_or("min_accuracy", 0.0))
            .transpose()?,
    })
}

/// Trains a model and writes it with `training_log.csv` and the resolved
/// `train.cfg`.
pub fn cmd_train(config: &Config) -> Result<(), CliError> {
    config.check_keys(&allowed(&[KEYS]))?;
    let mut data = load_data(config.require("data")?)?;
    let tc = train_config(config)?;
    if let Some(n) = config.get("limit").map(|_| config.usize_or("limit", 0)).transpose()? {
        let idx: Vec<usize> = (0..n.min(data.len())).collect();
        data = data.subset(&idx);
    }
    let out = out_dir(config)?;
    let outcome = train::train_small_cnn_with_progress(&data, &tc, |s| {
        eprintln!(
            "epoch {} loss {:.4} train {:.4} holdout {:.4}",
            s.epoch, s.mean_loss, s.train_accuracy, s.holdout_accuracy
        );
    })?;
    save_model(&outcome.network, &out)?;

    let mut log = Csv::new(&["epoch", "mean_loss", "train_accuracy", "holdout_accuracy"]);
    for s in &outcome.history {
        log.row(&[
            s.epoch.to_string(),
            fmt_f64(s.mean_loss),
            fmt_f64(s.train_accuracy),
            fmt_f64(s.holdout_accuracy),
        ]);
    }
    log.write(&out.join("training_log.csv"))?;
    write_file(&out.join("train.cfg"), config.to_text().as_bytes())?;
    eprintln!(
        "wrote {} (holdout accuracy {:.4})",
        out.display(),
        outcome.final_holdout_accuracy()
    );
    Ok(())
}

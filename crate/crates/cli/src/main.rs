use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xai_spectral_cli::{commands, CliError, Config};

/// Spectral evaluation of attribution methods.
#[derive(Parser)]
#[command(name = "xai-spectral", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MNIST CNN (or an MLP) and write a model directory.
    Train(Common),
    /// Sweep attribution methods and parameters over a set of images.
    Sweep(Common),
    /// Render one attribution as a PPM heat map.
    Heatmap(Common),
    /// Pixel-flipping curves and PF-AUC.
    Flip(Common),
    /// Decompose one explanation into singular-value bins.
    Expand(Common),
    /// Closed-form LRP-γ bounds against realized amplification.
    TheoryReport(Common),
}

/// Named flags are shorthands for config keys; `--set` accepts any key.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Image ids, e.g. `0-99` or `3,5,8`.
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    image: Option<String>,
    /// Method spec: gxi, lrp:GAMMA, smoothgrad:NOISE, ig:STEPS, shapley:CYCLES.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Any config key, repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn into_config(self) -> Result<Config, CliError> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let named = [
            ("model", self.model),
            ("data", self.data),
            ("out", self.out),
            ("seed", self.seed),
            ("images", self.images),
            ("image", self.image),
            ("method", self.method),
            ("target", self.target),
            ("epochs", self.epochs),
            ("bins", self.bins),
            ("workers", self.workers),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                c.set(k, v)?;
            }
        }
        for pair in &self.set {
            c.set_pair(pair)?;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match cli.command {
        Command::Train(c) => ("train", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Heatmap(c) => ("heatmap", c),
        Command::Flip(c) => ("flip", c),
        Command::Expand(c) => ("expand", c),
        Command::TheoryReport(c) => ("theory-report", c),
    };
    match common.into_config().and_then(|c| commands::run(name, &c)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod explain;
mod sweep;
mod theory;
mod train;

pub use explain::{cmd_expand, cmd_flip, cmd_heatmap};
pub use sweep::cmd_sweep;
pub use theory::cmd_theory_report;
pub use train::cmd_train;

use std::path::PathBuf;

use crate::report::create_dir;
use crate::{CliError, Config};

pub const COMMANDS: [&str; 6] = ["train", "sweep", "heatmap", "flip", "expand", "theory-report"];

/// Dispatches a command by name.
pub fn run(command: &str, config: &Config) -> Result<(), CliError> {
    match command {
        "train" => cmd_train(config),
        "sweep" => cmd_sweep(config),
        "heatmap" => cmd_heatmap(config),
        "flip" => cmd_flip(config),
        "expand" => cmd_expand(config),
        "theory-report" => cmd_theory_report(config),
        _ => Err(CliError::usage(format!("unknown command `{command}`"))),
    }
}

fn allowed(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

fn out_dir(config: &Config) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(config.require("out")?);
    create_dir(&out)?;
    Ok(out)
}

//! Flag definitions and the config-file layer.
//!
//! Each command's flags double as its section of the JSON config file.
//! Every field is optional so that a command-line value, a file value and
//! the built-in default can be told apart; merging keeps the first present.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "czsl", version, about = "Compositional zero-shot retrieval toolkit")]
pub struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Dataset directory (or manifest file).
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the val and test splits.
    Eval(EvalArgs),
    /// Rank images for an "attribute object" query.
    Retrieve(RetrieveArgs),
    /// Run the finite-difference gradient check suite.
    Gradcheck(GradcheckArgs),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

/// Merges `self` (higher precedence) over `lower`, field by field.
pub trait Merge {
    fn merge(self, lower: Self) -> Self;
}

macro_rules! mergeable {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, lower: Self) -> Self {
                Self { $($field: self.$field.or(lower.$field)),* }
            }
        }
    };
}

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_attr: Option<usize>,
    #[arg(long)]
    pub n_obj: Option<usize>,
    /// Feature channels.
    #[arg(long)]
    pub d: Option<usize>,
    /// Spatial positions.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub images_per_pair: Option<usize>,
    /// Feature noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fraction of pairs held out of training.
    #[arg(long)]
    pub unseen_frac: Option<f64>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub unseen_val_frac: Option<f64>,
}

mergeable!(SynthArgs {
    n_attr, n_obj, d, l, images_per_pair, sigma, unseen_frac, word_dim, train_frac, val_frac,
    unseen_val_frac,
});

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lambda_pair: Option<f64>,
    #[arg(long)]
    pub lambda_attr: Option<f64>,
    #[arg(long)]
    pub lambda_obj: Option<f64>,
    #[arg(long)]
    pub lambda_non_attr: Option<f64>,
    #[arg(long)]
    pub lambda_non_obj: Option<f64>,
    /// Save the checkpoint every N epochs as well as at the end (0 = only at the end).
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Record real elapsed time in the loss history instead of 0.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub wall_clock: Option<bool>,
}

mergeable!(TrainArgs {
    epochs, batch_size, lr, beta1, beta2, adam_eps, hidden, embed, temperature, lambda_pair,
    lambda_attr, lambda_obj, lambda_non_attr, lambda_non_obj, checkpoint_interval, wall_clock,
});

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Checkpoint to evaluate; defaults to OUT/checkpoint.czk.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    pub topk: Option<Vec<usize>>,
}

mergeable!(EvalArgs { checkpoint, topk });

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveArgs {
    /// Two tokens: attribute then object, e.g. "red pen".
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, value_parser = positive_usize)]
    pub topk: Option<usize>,
    /// Checkpoint to use; defaults to OUT/checkpoint.czk.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Image pool: train, val, test or all.
    #[arg(long)]
    pub split: Option<String>,
}

mergeable!(RetrieveArgs { query, topk, checkpoint, split });

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckArgs {
    /// Seeded cases per check, starting at --seed.
    #[arg(long, value_parser = positive_usize)]
    pub cases: Option<usize>,
    /// Overrides both the per-op and the end-to-end tolerance.
    #[arg(long)]
    pub threshold: Option<f64>,
}

mergeable!(GradcheckArgs { cases, threshold });

/// Contents of `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub synth: SynthArgs,
    pub train: TrainArgs,
    pub eval: EvalArgs,
    pub retrieve: RetrieveArgs,
    pub gradcheck: GradcheckArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Global settings after merging.
#[derive(Debug)]
pub struct Globals {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 42;

impl Globals {
    pub fn data(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::usage("--data is required"))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::usage("--out is required"))
    }
}

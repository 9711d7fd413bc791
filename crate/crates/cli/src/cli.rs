//! Command-line parsing. Flags fill an [`ExperimentSpec`]; a `--spec` JSON
//! file is applied on top and wins over flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sslab::game::LossVariant;
use sslab::metrics::Method;

use crate::commands::{cmd_compare, cmd_dump_discriminator, cmd_sweep, cmd_train, Axis};
use crate::error::Result;
use crate::spec::{parse_seeds, DatasetKind, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "sslab", version, about = "Semi-supervised learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train each method on each seed; write per-epoch metrics and models.
    Train(SpecArgs),
    /// Compare methods over seeds; write metrics and a summary.
    Compare(SpecArgs),
    /// Repeat the comparison over values of one setting.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Record the discriminator's confidences at chosen epochs.
    DumpDiscriminator {
        #[command(flatten)]
        spec: SpecArgs,
        /// Epochs to snapshot; 0 is before training. Defaults to the last.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<usize>,
    },
}

#[derive(Debug, Default, Args)]
pub struct SpecArgs {
    /// JSON file whose keys override every flag.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// two-moons or tabular.
    #[arg(long)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Feature count for the tabular dataset.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// Comma-separated: supervised, self-training, flexssl.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    /// [default: 0.6]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// bce, exp or logistic [default: bce]
    #[arg(long)]
    pub variant: Option<LossVariant>,
    /// [default: 10]
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub refresh_interval: Option<usize>,
    /// [default: 0.95]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Self-training labeling interval [default: 10]
    #[arg(long)]
    pub label_interval: Option<usize>,
    #[arg(long)]
    pub lr_f: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated list or half-open range, e.g. `0,1,2` or `0..5`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave wall_ms empty so reruns produce identical bytes.
    #[arg(long)]
    pub no_timing: bool,
}

impl SpecArgs {
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let mut s = ExperimentSpec::default();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    s.$field = v;
                }
            )*};
        }
        set!(dataset, n, noise_sigma, dim, n_test, missing_rate, noise_rate, alpha, variant, clip, epochs);
        set!(refresh_interval, tau, label_interval, lr_f, lr_d, batch_size, out);
        if !self.method.is_empty() {
            s.methods = self.method.clone();
        }
        if let Some(seeds) = &self.seeds {
            s.seeds = parse_seeds(seeds)?;
        }
        s.no_timing |= self.no_timing;
        match &self.spec {
            Some(path) => s.merged_with_file(path),
            None => Ok(s),
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let spec = args.to_spec()?;
            let runs = cmd_train(&spec)?;
            for r in &runs {
                let last = r.final_test_metric().map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                println!("{}-s{}\tfinal test metric {last}", r.method, r.seed);
            }
            println!("wrote {}", spec.out.join("metrics.csv").display());
        }
        Command::Compare(args) => {
            let spec = args.to_spec()?;
            let c = cmd_compare(&spec)?;
            for row in &c.summary {
                let std = row.std.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
                println!("{:<14}{:.4} ± {std}  n={}{}", row.method.as_str(), row.mean, row.n, if row.win { "  *" } else { "" });
            }
            println!("wrote {}", spec.out.join("summary.json").display());
        }
        Command::Sweep { spec, axis, values } => {
            let spec = spec.to_spec()?;
            let s = cmd_sweep(&spec, axis, &values)?;
            for p in &s.points {
                let cells: Vec<String> = p.methods.iter().map(|m| format!("{} {:.4}", m.method, m.mean)).collect();
                println!("{}={}\t{}", axis.as_str(), p.value, cells.join("\t"));
            }
            println!("wrote {}", spec.out.join("sweep.csv").display());
        }
        Command::DumpDiscriminator { spec, snapshots } => {
            let spec = spec.to_spec()?;
            let snaps = cmd_dump_discriminator(&spec, &snapshots)?;
            for s in &snaps {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
                println!(
                    "s{} epoch {}\tp(L) {}\tp(U) {}\tp(noisy) {}\tauc {}",
                    s.seed,
                    s.epoch,
                    f(s.mean_p_labeled),
                    f(s.mean_p_unlabeled),
                    f(s.mean_p_noisy),
                    f(s.auc_p_mask)
                );
            }
            println!("wrote {}", spec.out.join("discriminator").display());
        }
    }
    Ok(())
}

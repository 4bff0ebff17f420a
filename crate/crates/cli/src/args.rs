use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Estimand-aware fixed-effects network meta-analysis.
#[derive(Debug, Parser)]
#[command(name = "estnma", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an evidence file and report invariant violations and warnings.
    ///
    /// Exits 0 when no errors are found, 2 otherwise.
    Validate {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Build the evidence network per endpoint and export its edge list.
    ///
    /// Without --estimand every contrast of the endpoint is used. Exits 3 when any
    /// network is disconnected.
    Network {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Run a fixed-effects NMA for each (estimand, endpoint) slice and print the league table.
    Analyze {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        slice: SliceArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Compare pooled estimates across estimands; the first --estimand is the baseline.
    Compare {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        slice: SliceArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Evidence file (.csv or .json).
    #[arg(short, long, value_name = "PATH")]
    pub input: PathBuf,
    /// Output format: 2-decimal text, or full-precision csv / json.
    #[arg(short, long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Write results here instead of standard output.
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// Endpoint key to analyse (repeatable); defaults to the config or every endpoint in the input.
    #[arg(short, long, value_name = "NAME")]
    pub endpoint: Vec<String>,
    /// Target meta-estimand label (repeatable). Without --config the label must name a
    /// strategy (hypothetical, treatment_policy, ...) and the target is derived from the input.
    #[arg(long, value_name = "LABEL")]
    pub estimand: Vec<String>,
    /// JSON analysis configuration with meta-estimands, endpoints and defaults.
    #[arg(short, long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Strict matching: extra trial events with strategies the target does not use block pooling.
    #[arg(long)]
    pub strict: bool,
    /// Allowed endpoint timepoint difference in weeks [default: 4, or the config value].
    #[arg(long, value_name = "WEEKS")]
    pub tolerance: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Reference treatment [default: config value, else the lexicographically smallest node].
    #[arg(short, long, value_name = "TREATMENT")]
    pub reference: Option<String>,
    /// Confidence level in (0, 1) [default: 0.95, or the config value].
    #[arg(long, value_name = "LEVEL")]
    pub ci_level: Option<f64>,
    /// Analyse infeasible slices where possible, turning errors into warnings.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

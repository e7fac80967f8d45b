//! `timebin`: simulate, analyze, fit and reconstruct time-bin entangled
//! photon pairs from the command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 optimizer did not converge.

mod analyze;
mod config;
mod error;
mod fringe;
mod manifest;
mod output;
mod report;
mod simulate;
mod tomo;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use timebin_core::coinc::Weighting;
use timebin_core::io::TagFormat;
use timebin_core::sim::SourceMode;
use timebin_core::tomo::Normalization;

use error::CliError;
use output::Format;

#[derive(Debug, Parser)]
#[command(name = "timebin", version, about = "Time-bin entangled photon-pair toolkit")]
struct Cli {
    /// RNG seed: simulation seed for `simulate`, bootstrap seed for `tomo`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output file. Tables and the manifest are written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the summary printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    SingleBin,
    TimeBin,
}

impl From<ModeArg> for SourceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SingleBin => SourceMode::SingleBin,
            ModeArg::TimeBin => SourceMode::TimeBin,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncodingArg {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Unweighted,
    Poisson,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::Poisson => Weighting::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizationArg {
    Shared,
    PerSetting,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a time-tag file from a run file.
    Simulate {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
        encoding: EncodingArg,
        /// Overrides `experiment.duration_s`.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Rates, CAR, Klyshko efficiencies and histograms of a time-tag file.
    Analyze {
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Sinusoidal fit of coincidence counts against two-photon phase.
    Fringe {
        /// Analysis reports; the phase of each is taken from its config.
        reports: Vec<PathBuf>,
        /// Extra points as `phase_rad,counts,integration_s` rows.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = WeightingArg::Poisson)]
        weighting: WeightingArg,
    },
    /// Maximum-likelihood state from the four phase-setting runs.
    Tomo {
        /// Analysis reports of the four settings, in any order.
        reports: Vec<PathBuf>,
        /// Measurement record JSON instead of reports.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Bootstrap replicas; 0 skips the error analysis.
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long, value_enum)]
        normalization: Option<NormalizationArg>,
    },
    /// Collect analysis, fringe and tomography outputs into one table.
    Report {
        inputs: Vec<PathBuf>,
        /// Leave lower powers out of the Klyshko intercept fit.
        #[arg(long)]
        klyshko_min_power_w: Option<f64>,
        #[arg(long, value_enum, default_value_t = WeightingArg::Poisson)]
        weighting: WeightingArg,
    },
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    v.as_deref().ok_or_else(|| CliError::Usage(format!("missing required flag {flag}")))
}

fn dispatch(cli: &Cli) -> Result<output::Summary, CliError> {
    let out = require(&cli.out, "--out")?;
    match &cli.command {
        Command::Simulate {
            mode,
            encoding,
            duration_s,
        } => simulate::run(simulate::SimulateArgs {
            config: require(&cli.config, "--config")?,
            out,
            seed: cli.seed,
            mode: mode.map(Into::into),
            encoding: match encoding {
                EncodingArg::Binary => TagFormat::Binary,
                EncodingArg::Csv => TagFormat::Csv,
            },
            duration_s: *duration_s,
        }),
        Command::Analyze { input, mode } => analyze::run(analyze::AnalyzeArgs {
            input,
            out,
            config: cli.config.as_deref(),
            mode: mode.map(Into::into),
        }),
        Command::Fringe {
            reports,
            points,
            weighting,
        } => fringe::run(fringe::FringeArgs {
            reports,
            points: points.as_deref(),
            out,
            weighting: (*weighting).into(),
        }),
        Command::Tomo {
            reports,
            record,
            replicas,
            max_iterations,
            normalization,
        } => tomo::run(tomo::TomoArgs {
            reports,
            record: record.as_deref(),
            out,
            config: cli.config.as_deref(),
            seed: cli.seed,
            replicas: *replicas,
            max_iterations: *max_iterations,
            normalization: normalization.map(|n| match n {
                NormalizationArg::Shared => Normalization::Shared,
                NormalizationArg::PerSetting => Normalization::PerSetting,
            }),
        }),
        Command::Report {
            inputs,
            klyshko_min_power_w,
            weighting,
        } => report::run(report::ReportArgs {
            inputs,
            out,
            klyshko_min_power_w: *klyshko_min_power_w,
            weighting: (*weighting).into(),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(summary.render(cli.format).as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

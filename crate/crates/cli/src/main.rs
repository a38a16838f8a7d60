//! `cpsr` command-line front end.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "cpsr", version, about = "CPSR spectra, sweeps and line fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print every derived rate for a configuration.
    Params {
        #[command(flatten)]
        source: Source,
    },
    /// Two-photon transmission spectrum as CSV.
    Spectrum {
        #[command(flatten)]
        source: Source,
        /// Detuning grid in Hz: MIN MAX POINTS.
        #[arg(long, num_args = 3, value_names = ["MIN", "MAX", "N"], allow_negative_numbers = true)]
        grid: Option<Vec<f64>>,
        #[command(flatten)]
        model: ModelArgs,
        /// Multiply the e^{-d(Δ)} attenuation back in.
        #[arg(long)]
        absolute: bool,
        /// Multiplicative Gaussian noise on |T| (relative sigma), for fit tests.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep one configuration key and fit the lines at every value.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Configuration key to sweep, e.g. omega_a_hz.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "range")]
        values: Option<Vec<f64>>,
        /// START STOP POINTS.
        #[arg(long, num_args = 3, value_names = ["START", "STOP", "N"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Fit a CPSR line to `omega_hz,abs_t` data.
    FitLine {
        /// Two-column CSV; `-` reads standard input.
        input: PathBuf,
    },
    /// Fit optical depth and width to `nu_ghz,power` data.
    FitAbsorption {
        input: PathBuf,
        /// Bundled line list for this species.
        #[arg(long, default_value = "rb_natural", conflicts_with = "lines")]
        species: String,
        /// Line-list file (`<offset_GHz> <strength>` per line).
        #[arg(long)]
        lines: Option<PathBuf>,
    },
    /// Run a bundled scenario.
    Scenario {
        name: String,
        #[command(flatten)]
        model: ModelArgs,
        /// Print the scenario's configuration file and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct Source {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled scenario name instead of a file.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelChoice::Analytic)]
    model: ModelChoice,
    /// Spatial treatment for the detailed model.
    #[arg(long, value_enum, default_value_t = ModeChoice::Uniform)]
    mode: ModeChoice,
    /// Cells for `--mode spatial`.
    #[arg(long, default_value_t = 64)]
    cells: usize,
    /// Leave out optical pumping by the probe in the detailed model.
    #[arg(long)]
    no_probe_pumping: bool,
}

#[derive(Args, Debug, Clone)]
struct Output {
    /// Output file (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModelChoice {
    Analytic,
    Detailed,
    Both,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModeChoice {
    Uniform,
    Spatial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .chain()
                .find_map(|c| c.downcast_ref::<cpsr::Error>())
                .is_some_and(|c| c.is_numerical());
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

/// `CPSR_THREADS` caps the worker pool; 0 or unset means one per core.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("CPSR_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("CPSR_THREADS must be a non-negative integer, got `{value}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

//! `semrd`: sweeps, simulations and self-checks for Gaussian semantic
//! rate-distortion models stored as JSON.

mod commands;
mod error;
mod grid;
mod model_file;
mod table;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Budgets, Request, SimRegime};
use error::{CliError, CliResult};
use grid::{parse_rates, GridKind, Units};
use table::Table;
use verify::VerifyOptions;

#[derive(Debug, Parser)]
#[command(name = "semrd", version, about = "Gaussian semantic rate-distortion solvers")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON model file with sigma_x, b, sigma_v, w_e, w_d (row-major k×k).
    #[arg(long)]
    model: PathBuf,

    /// Unit of every rate, on input and output.
    #[arg(long, value_enum, default_value_t = Units::Nats)]
    units: Units,

    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct Grid {
    /// `a:b:n`, a comma list, or one value.
    #[arg(long)]
    rates: Option<String>,

    /// Spacing for `a:b:n`.
    #[arg(long, value_enum, default_value_t = GridKind::Linear)]
    grid: GridKind,
}

#[derive(Debug, Args)]
struct Sweep {
    #[command(flatten)]
    grid: Grid,

    /// Solve for the least rate reaching this encoder distortion instead.
    #[arg(long, conflicts_with = "rates")]
    distortion: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encoder observes X. Columns: rate_nats,distortion,water_level,active_modes.
    Direct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
    },
    /// Encoder observes Θ only. Columns as for `direct`.
    Remote {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
    },
    /// Encoder observes (X, V). Columns as for `direct`; --distortion needs a shared eigenbasis.
    Full {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
    },
    /// Encoder sees the modalities listed in the model file. Columns:
    /// modalities,rate_nats,distortion,posterior_term,excess,gap_to_direct,recoverability,water_level,active_modes.
    Multimodal {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// One block of rows per prefix 0..=m of the modality list.
        #[arg(long)]
        prefixes: bool,
    },
    /// Distortion against a total budget. Columns:
    /// steps,budget_nats,d_program,d_semantic,interior,water_level,active_modes,closed_form.
    /// d_program excludes the tr(W_e C_0) offset; d_semantic includes it.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: Grid,
        /// Budget per processing step; rows are L = 1..=steps.
        #[arg(long, requires = "steps", conflicts_with = "rates")]
        per_step_rate: Option<f64>,
        #[arg(long, requires = "per_step_rate")]
        steps: Option<usize>,
    },
    /// Monte Carlo check of one optimal design. Columns:
    /// regime,rate_nats,samples,seed,analytic,empirical,standard_error,z_score,target_rate_nats,empirical_rate_nats,cross_cov_error.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        regime: SimRegime,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Oracle and Monte Carlo checks at each rate; exits 1 if any fails.
    /// Columns: check,regime,rate,value,threshold,status.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Rates to check (default 0.25,1,4 in the chosen unit).
        #[arg(long, default_value = "0.25,1,4")]
        rates: String,
        #[arg(long, value_enum, default_value_t = GridKind::Linear)]
        grid: GridKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

fn rates_in_nats(grid: &Grid, units: Units) -> CliResult<Option<Vec<f64>>> {
    grid.rates
        .as_deref()
        .map(|s| Ok(parse_rates(s, grid.grid)?.into_iter().map(|r| units.to_nats(r)).collect()))
        .transpose()
}

fn request(sweep: &Sweep, units: Units) -> CliResult<Request> {
    if let Some(d) = sweep.distortion {
        return Ok(Request::Distortion(d));
    }
    rates_in_nats(&sweep.grid, units)?
        .map(Request::Rates)
        .ok_or_else(|| CliError::Input("one of --rates or --distortion is required".into()))
}

fn rate_value(flag: &str, x: f64, units: Units) -> CliResult<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(CliError::Input(format!("{flag}: must be finite and nonnegative, got {x}")));
    }
    Ok(units.to_nats(x))
}

fn emit(table: &Table, common: &Common, label: Option<&str>) -> CliResult<()> {
    let text = match common.format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(label),
    };
    write_text(&text, common.out.as_deref())
}

fn write_text(text: &str, out: Option<&Path>) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Input(format!("cannot write output: {e}"));
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("--out {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(io)?;
            stdout.flush().map_err(io)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Direct { common, sweep } => {
            let file = model_file::load(&common.model)?;
            let t = commands::direct(&file, &request(&sweep, common.units)?, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Remote { common, sweep } => {
            let file = model_file::load(&common.model)?;
            let t = commands::remote(&file, &request(&sweep, common.units)?, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Full { common, sweep } => {
            let file = model_file::load(&common.model)?;
            let t = commands::full(&file, &request(&sweep, common.units)?, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Multimodal { common, grid, prefixes } => {
            let file = model_file::load(&common.model)?;
            let rates = rates_in_nats(&grid, common.units)?
                .ok_or_else(|| CliError::Input("--rates is required".into()))?;
            let t = commands::multimodal(&file, &rates, prefixes, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Scaling { common, grid, per_step_rate, steps } => {
            let file = model_file::load(&common.model)?;
            let budgets = match (per_step_rate, steps, rates_in_nats(&grid, common.units)?) {
                (Some(p), Some(steps), _) => Budgets::Steps {
                    per_step: common.units.to_nats(p),
                    steps,
                },
                (_, _, Some(rates)) => Budgets::Rates(rates),
                _ => {
                    return Err(CliError::Input(
                        "either --per-step-rate with --steps, or --rates, is required".into(),
                    ))
                }
            };
            let t = commands::scaling(&file, &budgets, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Simulate { common, regime, rate, seed, samples } => {
            let file = model_file::load(&common.model)?;
            let rate = rate_value("--rate", rate, common.units)?;
            let t = commands::simulate(&file, regime, rate, samples, seed, common.units)?;
            emit(&t, &common, file.label.as_deref())
        }
        Command::Verify { common, rates, grid, seed, samples } => {
            let file = model_file::load(&common.model)?;
            let rates = parse_rates(&rates, grid)?
                .into_iter()
                .map(|r| common.units.to_nats(r))
                .collect();
            let opts = VerifyOptions { rates, samples, seed };
            let (t, failed) = verify::verify(&file.model, &opts, common.units);
            emit(&t, &common, file.label.as_deref())?;
            if failed > 0 {
                return Err(CliError::VerifyFailed {
                    failed,
                    total: t.rows().len(),
                });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Input("--threads: must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Input(format!("--threads: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semrd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

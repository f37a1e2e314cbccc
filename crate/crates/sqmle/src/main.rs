use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sqmle::config::{self, Config};
use sqmle::harness::{self, Experiment};
use sqmle::{io, llt, Error, Result};
use sqmle_core::inference::{studentize, StudentizedReport};
use sqmle_core::sim::simulate_fine;
use sqmle_core::sqlik::fit;
use sqmle_core::{FitResult, NoiseSpec, RngStream, StableKernel};

#[derive(Parser)]
#[command(name = "sqmle", version, about = "Stable quasi-likelihood estimation for Lévy-driven SDEs", after_help = config::reference())]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Overrides experiment.base_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override `section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see PRESETS below).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write `t,x` CSV plus a JSON sidecar.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        /// Index into simulation.designs.
        #[arg(long, default_value_t = 0)]
        design: usize,
    },
    /// Fit a `t,x` series and report Studentized statistics as JSON.
    Fit {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        data: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo experiment over the configured designs.
    Mc {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// L1 local-limit distances and their decay rate.
    Llt {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print `beta,C_alpha,C_gamma`.
    Constants {
        #[arg(long)]
        beta: f64,
    },
}

fn load(cli: &Cli, source: &Source) -> Result<Config> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), _) => config::load(path, &cli.overrides)?,
        (None, Some(name)) => config::parse(config::preset_text(name)?, name, &cli.overrides)?,
        (None, None) => return Err(Error::usage("pass --config <file> or --preset <name>")),
    };
    if let Some(seed) = cli.seed {
        config.experiment.base_seed = seed;
    }
    Ok(config)
}

#[derive(Serialize)]
struct SeriesInfo {
    model: String,
    theta_true: Vec<f64>,
    noise: NoiseSpec,
    horizon: f64,
    n: usize,
    fine_factor: usize,
    h: f64,
    x0: f64,
    seed: u64,
}

#[derive(Serialize)]
struct FitOutput {
    beta: f64,
    n: usize,
    h: f64,
    fit: FitResult,
    report: StudentizedReport,
}

/// Prints a line; a closed pipe on the reading side is not an error.
fn stdout(line: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Constants { beta } => {
            let c = StableKernel::new(*beta)?.info_constants()?;
            stdout(&format!("{beta},{},{}", c.c_alpha, c.c_gamma))?;
        }
        Command::Simulate { source, out, design } => {
            let config = load(cli, source)?;
            let model = config.model_spec()?;
            let noise = config.noise_spec()?;
            let d = config.design(*design)?;
            let seed = config.experiment.base_seed;
            let path = simulate_fine(&model, &noise, d.horizon, d.n_fine(), config.simulation.x0, &mut RngStream::new(seed, 0))?;
            let obs = path.thin(d.fine_factor)?;
            io::write_series(out, &obs)?;
            let info = SeriesInfo {
                model: model.name().to_string(),
                theta_true: model.theta_true().map(|t| t.to_flat()).unwrap_or_default(),
                noise,
                horizon: d.horizon,
                n: d.n,
                fine_factor: d.fine_factor,
                h: obs.h(),
                x0: config.simulation.x0,
                seed,
            };
            io::write_json(&out.with_extension("json"), &info)?;
            log::info!("wrote {} observations to {}", obs.n() + 1, out.display());
        }
        Command::Fit { source, data, out } => {
            let config = load(cli, source)?;
            let model = config.model_spec()?;
            let beta = config.beta_fit()?;
            let obs = io::read_series(data)?;
            let kernel = StableKernel::with_config(beta, config.kernel)?;
            let mut rng = RngStream::new(harness::start_seed(config.experiment.base_seed, 0), 0);
            let f = fit(&obs, &model, beta, &kernel, &config.estimation.optimizer, &mut rng)?;
            let report = studentize(&obs, &model, &f.theta_hat, model.theta_true(), &kernel, config.estimation.level)?;
            let output = FitOutput { beta, n: obs.n(), h: obs.h(), fit: f, report };
            match out {
                Some(path) => io::write_json(path, &output)?,
                None => stdout(&serde_json::to_string_pretty(&output).map_err(|e| Error::usage(e.to_string()))?)?,
            }
        }
        Command::Mc { source, out, replicates, workers } => {
            let mut config = load(cli, source)?;
            if let Some(l) = replicates {
                config.experiment.replicates = *l;
            }
            if let Some(w) = workers {
                config.experiment.workers = *w;
            }
            let exp = Experiment::from_config(&config)?;
            let summary = harness::run_experiment(&exp, out)?;
            log::info!("{} replicates, {} failed rows; results in {}", summary.replicates, summary.failed, out.display());
        }
        Command::Llt { source, out, workers } => {
            let config = load(cli, source)?;
            let report = llt::run_llt(&config.llt, config.kernel, workers.unwrap_or(config.experiment.workers))?;
            llt::write_llt(out, &report)?;
            match report.fit.slope {
                Some(s) => log::info!("L1 decay slope {s:.4}"),
                None => log::info!("L1 decay slope undefined"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

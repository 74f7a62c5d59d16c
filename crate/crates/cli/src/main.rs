use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use curvecast_core::backtest::{
    forecast_single_day, run_backtest, write_plot_data, write_reports, ExperimentConfig,
};
use curvecast_core::error::Error;
use curvecast_core::market_data::{
    generate_synthetic_market, write_coupling, write_exogenous, write_order_book, SyntheticConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "curvecast",
    version,
    about = "Forecast day-ahead supply and demand curves and clearing prices"
)]
struct Cli {
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Master seed; overrides the seed of a configuration file
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic market (orders, exogenous and coupling CSVs)
    Synth {
        /// Number of days
        #[arg(long)]
        days: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// First day (YYYY-MM-DD)
        #[arg(long, default_value = "2023-01-01")]
        start: NaiveDate,
    },
    /// Run a daily-recalibration backtest described by a configuration file
    Backtest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Forecast one day with the configured models
    Forecast {
        #[arg(long)]
        config: PathBuf,
        /// Forecast day (YYYY-MM-DD)
        #[arg(long)]
        date: NaiveDate,
        /// Output CSV (default: standard output)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the report tables from a forecast store
    Evaluate {
        #[arg(long)]
        store: PathBuf,
        /// Report directory (default: <store>/reports)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export plot series from a forecast store
    PlotData {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_user_error() {
        1
    } else if e.is_data_error() {
        2
    } else {
        3
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "configuration file {} not found",
            path.display()
        )));
    }
    let mut c = ExperimentConfig::from_file(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { days, out, start } => {
            let seed = cli.seed.unwrap_or(0);
            let market = generate_synthetic_market(
                seed,
                days,
                &SyntheticConfig {
                    start,
                    ..SyntheticConfig::default()
                },
            )?;
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_order_book(&market.snapshots, create(&out.join("orders.csv"))?)?;
            write_exogenous(&market.exogenous, create(&out.join("exogenous.csv"))?)?;
            write_coupling(&market.coupling(), create(&out.join("coupling.csv"))?)?;
            log::info!("wrote {days} synthetic days to {}", out.display());
        }
        Command::Backtest { config } => {
            let c = load_config(&config, cli.seed)?;
            let s = run_backtest(&c)?;
            log::info!(
                "backtest finished: {} forecast days, {} substitutions, {} leakage violations; output in {}",
                s.forecast_days,
                s.substitutions,
                s.leakage_violations,
                c.output.display()
            );
        }
        Command::Forecast { config, date, out } => {
            let c = load_config(&config, cli.seed)?;
            let f = forecast_single_day(&c, date)?;
            let mut w: Box<dyn Write> = match &out {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            let io_err = |e| Error::Io {
                path: out.clone().unwrap_or_else(|| PathBuf::from("<stdout>")),
                source: e,
            };
            writeln!(w, "timestamp,model,forecast,substituted").map_err(io_err)?;
            for m in &f.forecasts {
                for (h, p) in m.prices.iter().enumerate() {
                    writeln!(
                        w,
                        "{date}T{h:02}:00:00Z,{},{p},{}",
                        m.model,
                        u8::from(m.substituted)
                    )
                    .map_err(io_err)?;
                }
            }
            w.flush().map_err(io_err)?;
        }
        Command::Evaluate { store, out } => {
            if !store.is_dir() {
                return Err(Error::Config(format!(
                    "store {} not found",
                    store.display()
                )));
            }
            let out = out.unwrap_or_else(|| store.join("reports"));
            write_reports(&store, &out)?;
            log::info!("reports written to {}", out.display());
        }
        Command::PlotData { store, out } => {
            if !store.is_dir() {
                return Err(Error::Config(format!(
                    "store {} not found",
                    store.display()
                )));
            }
            write_plot_data(&store, &out)?;
            log::info!("plot data written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::error!("cannot configure the thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

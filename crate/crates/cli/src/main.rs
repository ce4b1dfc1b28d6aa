use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deepdeff::harness::{
    emit_report, file_safe, ingest, load_results, predict_entity, run_experiment, write_outputs, write_plot_data,
    ExperimentConfig, ReportFormat,
};
use deepdeff::model::load_weights;

#[derive(Parser)]
#[command(name = "deepdeff", version, about = "Short-term load forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, resample and offset every entity, writing canonical cache CSVs.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Train and score the method × time-steps matrix.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Re-render saved results.
    Report {
        /// A results.json / results.csv file or the directory holding it.
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Write results.<format> here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score saved weights on one entity and write its plot data.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        entity: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Table => ReportFormat::Table,
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            config.jobs = jobs;
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest { common } => {
            let config = common.load()?;
            let mut failures = 0;
            for (entity, result) in ingest(&config, &config.output_dir)? {
                match result {
                    Ok(path) => println!("{entity}: {}", path.display()),
                    Err(e) => {
                        failures += 1;
                        eprintln!("{entity}: {e}");
                    }
                }
            }
            if failures > 0 {
                log::warn!("{failures} entities failed to ingest");
            }
            Ok(())
        }
        Command::Run { common, format } => {
            let config = common.load()?;
            let run = run_experiment(&config)?;
            let rendered = write_outputs(&run, &config.output_dir, format.into(), config.save_weights)?;
            print!("{rendered}");
            log::info!("outputs written to {}", config.output_dir.display());
            Ok(())
        }
        Command::Report { results, format, out } => {
            let table = load_results(&results).with_context(|| format!("reading {}", results.display()))?;
            let format: ReportFormat = format.into();
            if matches!(format, ReportFormat::Table) && out.is_some() {
                bail!("--out writes csv or json; the table format only prints");
            }
            print!("{}", emit_report(&table, format, out.as_deref())?);
            Ok(())
        }
        Command::Predict { common, weights, entity } => {
            let config = common.load()?;
            let model = load_weights(&weights).with_context(|| format!("reading weights {}", weights.display()))?;
            let (rows, mape) = predict_entity(&config, &entity, &model)?;
            fs::create_dir_all(&config.output_dir)
                .with_context(|| format!("creating {}", config.output_dir.display()))?;
            let path = config.output_dir.join(format!("predictions_{}.csv", file_safe(&entity)));
            let spec = model.spec;
            write_plot_data(&path, &[(spec.method, spec.timesteps, spec.kind, &rows)])?;
            println!("{entity}: {} test points, MAPE {mape:.3}%", rows.len());
            println!("{}", path.display());
            Ok(())
        }
    }
}

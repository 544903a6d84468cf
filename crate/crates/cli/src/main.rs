use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use onnevo::datasets::{gen_modfmt_dataset, gen_ring, gen_triangle, SignalConfig, MODFMT_FEATURES};
use onnevo::harness::{
    boundary_csv, boundary_grid, evaluate_csv, load_model, run, sweep, sweep_csv, Algorithm, ExperimentConfig,
    SweepAxis,
};
use onnevo::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "onnevo",
    version,
    about = "Train simulated photonic neural networks by neuroevolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset as CSV.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train one configuration and write metrics.csv, model.json and config.echo.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algo: Option<String>,
        /// Overrides the run seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Loss and accuracy of a saved model on a labelled CSV, as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Predicted classes over a grid on the unit square.
    Boundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median outcomes over run seeds for each value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        seeds: usize,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    Gen {
        #[arg(long, value_enum)]
        kind: PlanarKind,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Modulation-format features of synthesized signals.
    Modfmt {
        #[arg(long, default_value_t = 800)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlanarKind {
    Triangle,
    Ring,
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Dataset(DatasetCommand::Gen { kind, n, seed, out }) => {
            let ds = match kind {
                PlanarKind::Triangle => gen_triangle(n, seed)?,
                PlanarKind::Ring => gen_ring(n, seed)?,
            };
            ds.write_csv(&out, None)
        }
        Command::Dataset(DatasetCommand::Modfmt { n, seed, snr_db, out }) => {
            let cfg = SignalConfig {
                snr_db: Some(snr_db),
                ..SignalConfig::default()
            };
            gen_modfmt_dataset(n, seed, &cfg)?.write_csv(&out, Some(&MODFMT_FEATURES))
        }
        Command::Train {
            config,
            algo,
            seed,
            out_dir,
        } => {
            let mut cfg = ExperimentConfig::read(&config)?;
            if let Some(a) = algo {
                cfg = cfg.with_algorithm(Algorithm::parse(&a)?);
            }
            if let Some(s) = seed {
                cfg.run_seed = s;
            }
            cfg.validate()?;
            let out = run(&cfg, Some(&out_dir))?;
            let last = out.result.final_record();
            println!(
                "{} generations, best loss {:.6}, train accuracy {:.4}, test accuracy {:.4} -> {}",
                last.generation,
                out.result.best_loss,
                last.train_accuracy,
                last.test_accuracy,
                out.dir.display()
            );
            Ok(())
        }
        Command::Eval { model, data } => {
            let model = load_model(&model)?;
            let e = evaluate_csv(&model, &data)?;
            let report = serde_json::json!({
                "loss": e.loss,
                "accuracy": e.accuracy(),
                "correct": e.correct,
                "total": e.total,
            });
            println!("{report}");
            Ok(())
        }
        Command::Boundary { model, grid, out } => {
            let model = load_model(&model)?;
            write(&out, &boundary_csv(&boundary_grid(&model, grid)?))
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            let csv = sweep_csv(axis, &sweep(&cfg, axis, &values, seeds)?);
            if let Some(dir) = &cfg.output_dir {
                write(&dir.join(format!("sweep_{}.csv", axis.name())), &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! The `amlab` binary: train, eval, export, and gradcheck subcommands.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 divergence
//! during training, 3 gradient-check failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use amlab::config::RunConfig;
use amlab::run;
use amlab::Error;

#[derive(Parser)]
#[command(name = "amlab", about = "Large-margin softmax loss laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an embedding network; writes checkpoint, history, metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the eval split; prints a metrics JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write metrics.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the CSV behind one of the analysis figures.
    Export {
        #[command(subcommand)]
        what: ExportKind,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        /// Comma-separated subset of softmax,normface,a_softmax,am_softmax.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seeds checked per variant.
        #[arg(long, default_value_t = 5)]
        runs: u64,
        /// Test hook: offset added to one analytic gradient entry.
        #[arg(long, hide = true, default_value_t = 0.0)]
        corrupt: f64,
    },
}

#[derive(Subcommand)]
enum ExportKind {
    /// Target-logit transform curves over [0, 180] degrees.
    #[command(name = "psi_curve")]
    PsiCurve {
        #[arg(long, default_value_t = 181)]
        grid_points: usize,
        #[arg(long, default_value = "psi_curve.csv")]
        out: PathBuf,
    },
    /// Unit-normalized embeddings of the eval split.
    Features {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "features.csv")]
        out: PathBuf,
    },
    /// Feature-gradient norm with and without feature normalization.
    Gradnorm {
        #[arg(long, default_value_t = 30.0)]
        s: f64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value = "gradnorm.csv")]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn execute(command: Command) -> Result<i32, Error> {
    match command {
        Command::Train { config, seed, out } => {
            let config = load_config(&config, seed)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.out_dir));
            let artifacts = run::cmd_train(&config, &out_dir)?;
            println!(
                "wrote {} (final loss {:.6})",
                artifacts.checkpoint.display(),
                artifacts.final_loss
            );
            Ok(0)
        }
        Command::Eval {
            checkpoint,
            config,
            seed,
            out,
        } => {
            let config = load_config(&config, seed)?;
            let report = run::cmd_eval(&checkpoint, &config)?;
            let json = report.to_json();
            print!("{json}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let path = dir.join("metrics.json");
                std::fs::write(&path, &json).map_err(|e| Error::io(&path, e))?;
            }
            Ok(0)
        }
        Command::Export { what } => {
            match what {
                ExportKind::PsiCurve { grid_points, out } => {
                    run::cmd_export_psi(grid_points, &out)?;
                    println!("wrote {}", out.display());
                }
                ExportKind::Features {
                    checkpoint,
                    config,
                    seed,
                    out,
                } => {
                    let config = load_config(&config, seed)?;
                    run::cmd_export_features(&checkpoint, &config, &out)?;
                    println!("wrote {}", out.display());
                }
                ExportKind::Gradnorm {
                    s,
                    classes,
                    dim,
                    seed,
                    out,
                } => {
                    run::cmd_export_gradnorm(s, classes, dim, seed, &out)?;
                    println!("wrote {}", out.display());
                }
            }
            Ok(0)
        }
        Command::Gradcheck {
            variants,
            seed,
            runs,
            corrupt,
        } => {
            let variants = match variants {
                Some(names) => names
                    .iter()
                    .map(|n| run::parse_variant(n))
                    .collect::<Result<Vec<_>, _>>()?,
                None => run::ALL_VARIANTS.to_vec(),
            };
            let (report, ok) = run::cmd_gradcheck(&variants, seed, runs, corrupt)?;
            print!("{report}");
            Ok(if ok { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

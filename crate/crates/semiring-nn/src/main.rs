use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semiring_nn::config;
use semiring_nn::runner;

#[derive(Parser)]
#[command(name = "semiring-nn", version, about = "Train and verify neural networks with trainable semiring nonlinearities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment from a config file or bundled preset.
    Train {
        /// Config file path, or a preset name (iris, heart, circles,
        /// spheres, fashion_mnist).
        #[arg(long)]
        config: String,
        /// Output directory for manifest, metrics, summary and checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. --set variant=maxplus (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Override the repetition count.
        #[arg(long)]
        runs: Option<usize>,
        /// Print the resolved config without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate a saved checkpoint on the configured dataset's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the full benchmark grid (7 variants x 5 datasets).
    ReproduceTable1 {
        #[arg(long)]
        out: PathBuf,
        /// Repetitions per grid cell (presets default to 10).
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// List the planned runs without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Finite-difference gradient check of a small model.
    Gradcheck {
        #[arg(long, default_value = "maxplus")]
        variant: String,
        #[arg(long)]
        mu: Option<f64>,
        /// Model sizes as n_features,n_classes,width.
        #[arg(long, default_value = "4,3,4")]
        sizes: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Semiring-axiom, quasilinearity and oracle-equivalence suites.
    Propcheck {
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset and export it as CSV.
    GenData {
        /// circles or spheres.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = config::DEFAULT_SYNTH_N)]
        n: usize,
        #[arg(long, default_value_t = config::DEFAULT_SYNTH_NOISE_SD)]
        noise_sd: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn overrides(set: &[String]) -> semiring_nn::Result<Vec<(String, String)>> {
    set.iter().map(|s| config::parse_override(s)).collect()
}

fn run(cli: Cli) -> semiring_nn::Result<()> {
    match cli.command {
        Command::Train { config: cfg_path, out, set, runs, dry_run } => {
            let mut ov = overrides(&set)?;
            if let Some(runs) = runs {
                ov.push(("runs".into(), runs.to_string()));
            }
            let cfg = config::load_config(&cfg_path, &ov)?;
            if dry_run {
                print!("{}", cfg.manifest_text());
                println!("# {} run(s) planned", cfg.runs);
                return Ok(());
            }
            runner::cmd_train(&cfg, &out)?;
        }
        Command::Eval { checkpoint, config: cfg_path, set } => {
            let cfg = config::load_config(&cfg_path, &overrides(&set)?)?;
            runner::cmd_eval(&checkpoint, &cfg)?;
        }
        Command::ReproduceTable1 { out, runs, set, dry_run } => {
            runner::cmd_reproduce_table1(&out, runs, &overrides(&set)?, dry_run)?;
        }
        Command::Gradcheck { variant, mu, sizes, seed, out } => {
            let dims: Vec<usize> = sizes
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        semiring_nn::Error::Config(format!(
                            "--sizes expects n_features,n_classes,width, got {sizes:?}"
                        ))
                    })
                })
                .collect::<semiring_nn::Result<_>>()?;
            if dims.len() != 3 {
                return Err(semiring_nn::Error::Config(
                    "--sizes expects exactly three numbers".into(),
                ));
            }
            runner::cmd_gradcheck(&variant, mu, (dims[0], dims[1], dims[2]), seed, out.as_deref())?;
        }
        Command::Propcheck { out } => {
            runner::cmd_propcheck(out.as_deref())?;
        }
        Command::GenData { dataset, out, n, noise_sd, seed } => {
            runner::cmd_gen_data(&dataset, &out, n, noise_sd, seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

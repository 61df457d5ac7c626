use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtn_trng::Execution;
use rtn_trng_cli::commands::{self, Format, Outcome};
use rtn_trng_cli::error::{EXIT_CONFIG, EXIT_OK, EXIT_TEST_FAILURE};
use rtn_trng_cli::repro::{self, Target};
use rtn_trng_cli::{CliError, ExperimentConfig, Result, DEFAULT_OUT, OUT_ENV};

/// Random telegraph noise entropy source: simulate, harvest, whiten,
/// analyze and test.
#[derive(Parser)]
#[command(name = "rtn-trng", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Primary artifact encoding.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a device current trace.
    Simulate,
    /// Run the single-ended or differential readout and clock out bits.
    Harvest,
    /// XOR a bitstream with the LFSR keystream.
    Whiten { input: PathBuf },
    /// Spectral and level analysis of a trace, or statistics of a bitstream.
    Analyze { input: PathBuf },
    /// Run the randomness test battery.
    Test {
        input: PathBuf,
        /// Significance level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Render a bitstream as a PBM image.
    Bitmap {
        input: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        /// Write ASCII P1 instead of binary P4.
        #[arg(long)]
        plain: bool,
    },
    /// Order-k Markov next-bit predictor.
    AttackBaseline {
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        order: usize,
        /// Fraction of the stream used for training.
        #[arg(long, default_value_t = 0.5)]
        split: f64,
    },
    /// Regenerate a figure or table with its canned configuration.
    Repro {
        #[arg(value_enum)]
        target: Target,
    },
    /// Check artifact hashes against a manifest.
    Verify { dir: PathBuf },
    /// Print the default configuration.
    Defaults,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| Path::new(DEFAULT_OUT).to_path_buf())
}

fn run(cli: &Cli) -> Result<Option<Outcome>> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let reject_format = |name: &str| match cli.format {
        Some(_) => Err(CliError::config(format!("{name} does not take --format"))),
        None => Ok(()),
    };
    match &cli.command {
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(None)
        }
        Command::Verify { dir } => {
            let bad = commands::verify(dir)?;
            if bad.is_empty() {
                println!("{}: all artifacts match", dir.display());
                Ok(None)
            } else {
                Err(CliError::Stage {
                    stage: "verify",
                    source: rtn_trng::Error::Data(format!("hash mismatch: {}", bad.join(", "))),
                })
            }
        }
        Command::Repro { target } => {
            if cli.config.is_some() {
                return Err(CliError::config("repro uses canned configurations; drop --config"));
            }
            if !matches!(cli.format, None | Some(Format::Json)) {
                return Err(CliError::config("repro writes fixed formats; drop --format"));
            }
            let seed = cli.seed.unwrap_or(rtn_trng_cli::experiments::DEFAULT_MASTER_SEED);
            let out = out_dir(cli, None);
            repro::run(*target, seed, &out, exec)?;
            Ok(Some(Outcome {
                summary: format!("repro {} (seed {seed})", target.name()),
                dir: out,
                tests_failed: false,
            }))
        }
        Command::Bitmap { input, width, height, plain } => {
            reject_format("bitmap")?;
            commands::bitmap(input, *width, *height, *plain, &out_dir(cli, None)).map(Some)
        }
        Command::AttackBaseline { input, order, split } => {
            reject_format("attack-baseline")?;
            commands::attack_baseline(input, *order, *split, &out_dir(cli, None)).map(Some)
        }
        cmd => {
            let cfg = load_config(cli)?;
            let out = out_dir(cli, Some(&cfg));
            match cmd {
                Command::Simulate => commands::simulate(&cfg, &out, cli.format),
                Command::Harvest => commands::harvest(&cfg, &out, cli.format),
                Command::Whiten { input } => commands::whiten(&cfg, input, &out, cli.format),
                Command::Analyze { input } => commands::analyze(&cfg, input, &out, cli.format),
                Command::Test { input, alpha } => commands::test(&cfg, input, *alpha, &out, cli.format),
                _ => unreachable!("handled above"),
            }
            .map(Some)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(None) => ExitCode::from(EXIT_OK),
        Ok(Some(o)) => {
            println!("{}: {}", o.dir.display(), o.summary);
            ExitCode::from(if o.tests_failed { EXIT_TEST_FAILURE } else { EXIT_OK })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

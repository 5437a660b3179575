//! `tentlab`: dyadic caches, weight constants, projection norms, domination
//! scans, sweeps and the acceptance suite from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tentlab::geometry::DomainKind;
use tentlab::harness::WeightFamilySpec;

use commands::DyadicRequest;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "tentlab", version, about = "Weighted Bergman projection experiments on the disc and the ball")]
struct Cli {
    /// Configuration file (sectioned key = value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Geometry: disc or ball2. Overrides the config file.
    #[arg(long, global = true)]
    geom: Option<String>,
    /// Base seed. Overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or validate cached dyadic systems.
    Dyadic {
        #[command(subcommand)]
        action: DyadicAction,
    },
    /// Bekolle-Bonami constant of one weight.
    B2 {
        #[command(flatten)]
        weight: WeightArgs,
        /// Optional one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Norm of the projection on L^2(W) for one weight.
    Norm {
        #[command(flatten)]
        weight: WeightArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sparse domination constant over random vector polynomials.
    Dominate {
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        polynomials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full sweep: CSV rows plus a JSON summary.
    Sweep {
        /// CSV path; the summary goes next to it with a .json extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Subcommand, Debug)]
enum DyadicAction {
    Build(DyadicArgs),
    Check(DyadicArgs),
}

#[derive(Args, Debug)]
struct DyadicArgs {
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Cache directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WeightArgs {
    /// identity, scalar_power, diagonal_power, rotated_diagonal or random_log_field.
    #[arg(long)]
    weight: String,
    /// First family parameter (the exponent alpha, or the amplitude).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Second family parameter (beta, winding or seed).
    #[arg(long, alias = "beta", alias = "winding", default_value_t = 0.0, allow_negative_numbers = true)]
    param2: f64,
    /// Matrix dimension (default: the family's natural one).
    #[arg(long)]
    d: Option<usize>,
}

impl WeightArgs {
    fn spec(&self) -> CliResult<WeightFamilySpec> {
        Ok(WeightFamilySpec::parse(&self.weight, self.alpha, self.param2, self.d)?)
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let kind = cli.geom.as_deref().map(DomainKind::parse).transpose()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text, kind)?
        }
        None => RunConfig::defaults(kind.unwrap_or(DomainKind::Disc)),
    };
    if let Some(seed) = cli.seed {
        cfg.sweep.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = load_config(&cli)?;
    if cli.print_config {
        return Ok(cfg.render().trim_end().to_string());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage("no command given (try --help)".into()));
    };
    match command {
        Command::Dyadic { action } => {
            let (args, build) = match action {
                DyadicAction::Build(a) => (a, true),
                DyadicAction::Check(a) => (a, false),
            };
            let req = DyadicRequest::resolve(&cfg, args.s, args.delta, args.levels, args.out);
            if build {
                commands::dyadic_build(cfg.kind(), &req)
            } else {
                commands::dyadic_check(cfg.kind(), &req)
            }
        }
        Command::B2 { weight, out } => {
            cfg.validate()?;
            commands::b2(&cfg, &weight.spec()?, out.as_deref())
        }
        Command::Norm { weight, out } => {
            cfg.validate()?;
            commands::norm(&cfg, &weight.spec()?, out.as_deref())
        }
        Command::Dominate { directions, samples, polynomials, out } => {
            let s = &mut cfg.sweep;
            s.directions = directions.unwrap_or(s.directions);
            s.samples = samples.unwrap_or(s.samples);
            s.polynomials = polynomials.unwrap_or(s.polynomials);
            cfg.validate()?;
            commands::dominate(&cfg, out.as_deref())
        }
        Command::Sweep { out } => {
            if let Some(out) = out {
                cfg.csv = Some(out);
            }
            cfg.validate()?;
            commands::sweep(&cfg)
        }
        Command::Verify { only } => commands::verify(&only),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Failed(report) = &e {
                println!("{report}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

use clap::{Args, Parser, Subcommand};
use jetfb::cli_io::{self, CliError, RunConfig, RunOutcome};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jetfb", version, about = "Axisymmetric subsonic jet free-boundary solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; omitted keys take the canonical defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Omit timings from the report.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Density branch and truncation at one (t, z).
    Probe {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Solve at a fixed free-boundary momentum.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Momentum Lambda (overrides numerics.lambda).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Fit Lambda for continuous fit at the orifice.
    Fit {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Downstream asymptotic states over a momentum sweep.
    Asymptotics {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-check a stored output directory.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn prepare(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = load(run.config.as_ref())?;
    if let Some(dir) = &run.output {
        cfg.output.directory = dir.clone();
    }
    cfg.output.reproducible |= run.reproducible;
    cli_io::configure_workers(&cfg.output)?;
    Ok(cfg)
}

fn summarize(out: RunOutcome) -> i32 {
    let r = &out.report;
    if let Some(e) = &r.error {
        eprintln!("error: {e}");
    }
    if let Some(f) = &r.fit {
        println!("Lambda* {} (converged {}, {} bisection steps)", f.lambda_star, f.converged, f.bisection_steps);
    } else if let Some(l) = r.lambda {
        println!("Lambda {l}");
    }
    for v in r.invariants.iter().filter(|v| v.verdict != cli_io::Status::Skip) {
        println!("{:?} {}{}", v.verdict, v.name, if v.mandatory { " (mandatory)" } else { "" });
    }
    println!("output {}", out.directory.display());
    out.exit_code
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Probe { t, z, config } => {
            print!("{}", cli_io::probe(&load(config.as_ref())?, t, z)?);
            Ok(cli_io::EXIT_OK)
        }
        Command::Solve { run, lambda } => {
            let mut cfg = prepare(&run)?;
            if lambda.is_some() {
                cfg.numerics.lambda = lambda;
                cfg.validate()?;
            }
            Ok(summarize(cli_io::run_solve(&cfg)?))
        }
        Command::Fit { run } => Ok(summarize(cli_io::run_fit(&prepare(&run)?)?)),
        Command::Asymptotics { run } => Ok(summarize(cli_io::run_asymptotics(&prepare(&run)?)?)),
        Command::Verify { dir } => {
            let out = cli_io::verify(&dir)?;
            for l in &out.lines {
                println!("{l}");
            }
            Ok(out.exit_code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("jetfb=info")).init();
    let code = match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

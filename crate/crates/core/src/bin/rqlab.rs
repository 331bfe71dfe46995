use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rqlab::harness::{run, ExperimentConfig, InstanceSource, Mode, ReprSpec};
use rqlab::ipm::{IpmKind, IpmSpec};
use rqlab::Error;

#[derive(Parser)]
#[command(name = "rqlab", version, about = "Recurrent Q-learning on finite POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance for malformed tensors.
    Validate(Common),
    /// Stationary analysis of the joint chain and the induced model.
    Analyze(Common),
    /// Solve for Q*_xi and finite-horizon history values.
    Solve(Common),
    /// Online recurrent Q-learning under the exploration policy.
    TrainRql(Common),
    /// Episodic training with sequence replay and AIS predictors.
    TrainRqlAis(Common),
    /// Certify the approximation bounds.
    Bounds(Common),
    /// Distance between two distributions.
    Ipm(IpmArgs),
    /// Randomized certification suite.
    Suite(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list.
    #[arg(long)]
    seed: Vec<u64>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Canonical name, `random:<seed>`, or instance JSON file.
    #[arg(long)]
    instance: Option<String>,
    /// `fs<n>` for frame stacking, or a machine JSON file.
    #[arg(long)]
    repr: Option<String>,
    /// Overrides the discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// IPMs used by `bounds` and `suite`.
    #[arg(long, value_enum)]
    ipm: Vec<IpmArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IpmArg {
    Tv,
    Wasserstein,
    Mmd,
}

impl From<IpmArg> for IpmKind {
    fn from(a: IpmArg) -> Self {
        match a {
            IpmArg::Tv => IpmKind::Tv,
            IpmArg::Wasserstein => IpmKind::Wasserstein,
            IpmArg::Mmd => IpmKind::Mmd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    /// `d(i, j) = 1` for `i != j`.
    Discrete,
    /// `d(i, j) = |i - j|`.
    Line,
}

#[derive(Args)]
struct IpmArgs {
    #[arg(long, value_enum, default_value = "tv")]
    ipm: IpmArg,
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',', required = true)]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    nu: Vec<f64>,
    /// Ground metric for Wasserstein.
    #[arg(long, value_enum, default_value = "discrete")]
    metric: MetricArg,
}

fn build_config(mode: Mode, c: Common) -> rqlab::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.mode = mode;
    if !c.seed.is_empty() {
        cfg.seeds = c.seed;
    }
    if let Some(out) = c.out {
        cfg.out = Some(out);
    }
    if let Some(inst) = c.instance {
        cfg.instance = inst.parse::<InstanceSource>()?;
    }
    if let Some(repr) = c.repr {
        cfg.representation = repr.parse::<ReprSpec>()?;
    }
    if let Some(g) = c.gamma {
        cfg.gamma = Some(g);
    }
    if !c.ipm.is_empty() {
        cfg.bounds.ipm = c.ipm.into_iter().map(IpmKind::from).collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ipm_command(a: IpmArgs) -> rqlab::Result<()> {
    if a.mu.len() != a.nu.len() {
        return Err(Error::Config("mu and nu must have the same length".into()));
    }
    let n = a.mu.len();
    let spec = match IpmKind::from(a.ipm) {
        IpmKind::Tv => IpmSpec::tv(n),
        IpmKind::Wasserstein => match a.metric {
            MetricArg::Discrete => IpmSpec::discrete_wasserstein(n),
            MetricArg::Line => IpmSpec::wasserstein(IpmSpec::line_metric(n), n)?,
        },
        IpmKind::Mmd => IpmSpec::mmd_default(n),
    };
    let d = spec.distance(&a.mu, &a.nu)?;
    println!("{}: {d}", spec.kind());
    if spec.kind() == IpmKind::Mmd {
        println!("mmd^2: {}", spec.mmd_squared(&a.mu, &a.nu));
    }
    Ok(())
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Ipm(a) => {
            return match ipm_command(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => exit_for(&e),
            }
        }
        Command::Validate(c) => (Mode::Validate, c),
        Command::Analyze(c) => (Mode::Analyze, c),
        Command::Solve(c) => (Mode::Solve, c),
        Command::TrainRql(c) => (Mode::TrainRql, c),
        Command::TrainRqlAis(c) => (Mode::TrainRqlAis, c),
        Command::Bounds(c) => (Mode::Bounds, c),
        Command::Suite(c) => (Mode::Suite, c),
    };
    let cfg = match build_config(mode, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => exit_for(&e),
    }
}

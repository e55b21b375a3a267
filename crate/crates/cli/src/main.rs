use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hankel_nullspace::estimator::Threshold;
use hankel_nullspace_cli::commands::{self, Input, Outcome};
use hankel_nullspace_cli::{exit_code, outcome_code, ExperimentConfig, InvalidConfig, EXIT_INVALID_CONFIG};

#[derive(Parser)]
#[command(name = "hankel-nullspace", version, about = "Recover Hankel left null spaces from noisy multi-experiment data")]
struct Cli {
    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Config JSON, or a manifest from an earlier run. Built-in defaults otherwise.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long = "nt")]
    nt: Option<usize>,
    #[arg(long = "samples")]
    samples: Option<usize>,
    #[arg(long = "depth")]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps_sigma: Option<f64>,
    #[arg(long)]
    eps_rank: Option<f64>,
    #[arg(long, value_parser = parse_threshold)]
    threshold: Option<Threshold>,
}

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    match s {
        "absolute" => Ok(Threshold::Absolute),
        "relative" => Ok(Threshold::Relative),
        _ => Err(format!("expected absolute or relative, got {s}")),
    }
}

impl Overrides {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.nt {
            cfg.nt = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eps_sigma {
            cfg.eps_sigma = v;
        }
        if let Some(v) = self.eps_rank {
            cfg.eps_rank = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noiseless and noisy datasets.
    Generate {
        #[command(flatten)]
        cfg: Overrides,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fold a dataset into a stats snapshot.
    Aggregate {
        #[command(flatten)]
        cfg: Overrides,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Grid-search the noise moments and recover the null space.
    Recover {
        #[command(flatten)]
        cfg: Overrides,
        #[arg(long, conflicts_with = "stats", required_unless_present = "stats")]
        data: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compare a candidate null space with the model oracle.
    Validate {
        #[command(flatten)]
        cfg: Overrides,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Convergence of the subspace error over an Nt ladder.
    Sweep {
        #[command(flatten)]
        cfg: Overrides,
        /// Comma-separated ascending Nt values.
        #[arg(long = "nt-list", value_delimiter = ',')]
        nt_list: Option<Vec<usize>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.workers {
        if n == 0 {
            anyhow::bail!(InvalidConfig("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    match cli.command {
        Command::Generate { cfg, out } => {
            let m = commands::generate(&cfg.resolve()?, &out)?;
            eprintln!("wrote {} experiments to {}", m.config.nt, out.display());
        }
        Command::Aggregate { cfg, data, out } => {
            commands::aggregate_cmd(&cfg.resolve()?, &data, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Recover { cfg, data, stats, out } => {
            let input = match (data, stats) {
                (Some(d), _) => Input::Dataset(d),
                (None, Some(s)) => Input::Stats(s),
                (None, None) => unreachable!("clap requires one input"),
            };
            let (m, outcome) = commands::recover(&cfg.resolve()?, &input, &out)?;
            if let Some(r) = &m.result {
                println!("{r}");
            }
            if outcome == Outcome::NoCandidate {
                eprintln!("no grid point was admitted; landscape written to {}", out.display());
            }
            return Ok(outcome);
        }
        Command::Validate { cfg, candidate, out } => {
            let r = commands::validate(&cfg.resolve()?, &candidate, &out)?;
            println!("theta_max = {:e}", r.theta_max);
        }
        Command::Sweep { cfg, nt_list, seeds, out } => {
            let mut c = cfg.resolve()?;
            if let Some(v) = nt_list {
                c.sweep.nt = v;
            }
            if let Some(v) = seeds {
                c.sweep.seeds = v;
            }
            commands::sweep(&c, &out)?;
            eprintln!("wrote sweep to {}", out.display());
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome_code(outcome)),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

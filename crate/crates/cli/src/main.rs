use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wirebeam::commands;
use wirebeam::{CliError, RunConfig};
use wirebeam_core::rarl::Variant;

#[derive(Parser)]
#[command(name = "wirebeam", version, about = "Beam tracking for a wire-mounted small base station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file; absent keys take the reference defaults.
    #[arg(long, env = "WIREBEAM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, env = "WIREBEAM_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "WIREBEAM_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the `variant` key (rarl, no_adversary, random_adversary).
    #[arg(long, env = "WIREBEAM_VARIANT")]
    variant: Option<Variant>,
    /// Overrides the `test_steps` key.
    #[arg(long, env = "WIREBEAM_STEPS")]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(v) = self.variant {
            cfg.train.variant = v;
        }
        if let Some(steps) = self.steps {
            cfg.train.test_steps = steps;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a protagonist (and adversary) and write checkpoints and curve.csv.
    Train(Common),
    /// Score a checkpoint against the stay and upper-limit baselines.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "WIREBEAM_CHECKPOINT")]
        checkpoint: PathBuf,
    },
    /// Mass × spring-constant robustness heat map.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Protagonist checkpoint to include; repeatable.
        #[arg(long, env = "WIREBEAM_CHECKPOINT", value_delimiter = ',')]
        checkpoint: Vec<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "WIREBEAM_WORKERS", default_value_t = default_workers())]
        workers: usize,
    },
    /// Azimuth cut of the transmit antenna gain.
    AntennaPattern(Common),
    /// Log one rollout of a policy to trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// stay, upper_limit, random_uniform or greedy_dqn.
        #[arg(long, env = "WIREBEAM_POLICY", default_value = "stay")]
        policy: String,
        #[arg(long, env = "WIREBEAM_CHECKPOINT")]
        checkpoint: Option<PathBuf>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Command {
    fn out(&self) -> &Path {
        match self {
            Command::Train(c) | Command::AntennaPattern(c) => &c.out,
            Command::Eval { common, .. } | Command::Sweep { common, .. } | Command::Simulate { common, .. } => {
                &common.out
            }
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let out = cli.command.out().to_path_buf();
    match &cli.command {
        Command::Train(c) => commands::cmd_train(&c.load()?, &c.out)?,
        Command::Eval { common, checkpoint } => commands::cmd_eval(&common.load()?, checkpoint, &common.out)?,
        Command::Sweep {
            common,
            checkpoint,
            workers,
        } => commands::cmd_sweep(&common.load()?, checkpoint, &common.out, *workers)?,
        Command::AntennaPattern(c) => commands::cmd_antenna_pattern(&c.load()?, &c.out)?,
        Command::Simulate {
            common,
            policy,
            checkpoint,
        } => {
            let cfg = common.load()?;
            let policy = commands::parse_policy(policy, checkpoint.as_deref())?;
            commands::cmd_simulate(&cfg, &policy, cfg.train.test_steps, &common.out)?
        }
    };
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            eprintln!("outputs written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use mcsfqf::config::RunConfig;
use mcsfqf::network::FusionMode;
use mcsfqf::{run, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mcsfqf", version, about = "Spiking distributional RL with multi-compartment neurons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more seeds.
    Train(RunArgs),
    /// Greedy episodes from a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle suite.
    Verify(RunArgs),
    /// Dump dendritic and somatic traces of sampled fusion units as CSV.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment state to observe; repeatable. Defaults to the start state.
        #[arg(long = "state")]
        states: Vec<usize>,
        #[arg(long, default_value = "inspect")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<FusionMode>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.apply_override(pair)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.display().to_string();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serialisable"));
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            info!("training {} seed(s) from {} for {} steps", cfg.seeds.max(1), cfg.seed, cfg.steps);
            for outcome in run::train(&cfg)? {
                print_json(&outcome);
            }
            Ok(0)
        }
        Command::Eval { checkpoint, episodes, seed } => {
            print_json(&run::eval(&checkpoint, episodes, seed)?);
            Ok(0)
        }
        Command::Verify(args) => {
            let cfg = args.load()?;
            let records = run::verify(&cfg)?;
            for r in &records {
                print_json(r);
            }
            let failed: Vec<&str> = records.iter().filter(|r| !r.passed).map(|r| r.check).collect();
            if failed.is_empty() {
                Ok(0)
            } else {
                eprintln!("failed checks: {}", failed.join(", "));
                Ok(EXIT_CHECK_FAILED)
            }
        }
        Command::Inspect { checkpoint, states, out } => {
            let states = if states.is_empty() {
                let ck = mcsfqf::checkpoint::Checkpoint::load(&checkpoint)?;
                vec![ck.config()?.env_spec().start_state()]
            } else {
                states
            };
            for path in run::inspect(&checkpoint, &states, &out)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Divergence { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            })
        }
    }
}

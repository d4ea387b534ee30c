use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hm2bp::checkpoint::load_checkpoint;
use hm2bp::config::RunConfig;
use hm2bp::train::{self, EpochMetrics, Session};
use hm2bp::verify::{run_suite, SUITES};
use hm2bp::{Error, NetworkTopology, Result};

#[derive(Parser)]
#[command(name = "hm2bp", version, about = "Spiking network training with hybrid macro/micro backpropagation")]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set optimizer.lr=0.002`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run oracle suites against the production code.
    Verify {
        /// Suite name or `all`.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write spike caches for whole dataset splits.
    EncodeCache {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = Split::Both)]
        split: Split,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Split {
    Train,
    Test,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hm2bp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, overrides } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let (train_set, test_set) = train::load_splits(&cfg)?;
            let mut report = |_: usize, _: &NetworkTopology, m: &EpochMetrics| {
                println!(
                    "epoch {:>3}  train loss {:>9.3}  train acc {:.4}  test acc {:.4}  {:>7.1}s",
                    m.epoch, m.train_loss, m.train_accuracy, m.test_accuracy, m.wall_time_s
                );
                Ok(())
            };
            let out = train::train(&cfg, &train_set, &test_set, &mut report)?;
            println!("final checkpoint: {}", out.final_checkpoint.display());
            Ok(())
        }
        Command::Eval {
            config,
            checkpoint,
            overrides,
            split,
            json,
        } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let mut net = cfg.build_topology()?;
            load_checkpoint(&checkpoint, &mut net)?;
            let (train_set, test_set) = train::load_splits(&cfg)?;
            let set = match split {
                Split::Train => &train_set,
                Split::Test => &test_set,
                Split::Both => return Err(Error::config("eval takes --split train or --split test")),
            };
            let session = Session::from_config(&cfg, net.output_len())?;
            let report = train::evaluate(&net, set, &session, 0)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            } else {
                println!("accuracy {:.4}  mean loss {:.3}  ({} samples)", report.accuracy, report.mean_loss, set.len());
                println!("confusion (rows: label, columns: prediction)");
                for (label, row) in report.confusion.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
                    println!("{label:>3} |{}", cells.join(""));
                }
            }
            Ok(())
        }
        Command::Verify { suite, seed } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut failed = Vec::new();
            for name in names {
                let report = run_suite(name, seed)?;
                println!("{report}");
                if !report.passed() {
                    failed.push(name.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Verification(failed.join(", ")))
            }
        }
        Command::EncodeCache { config, overrides, split } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let splits: &[&str] = match split {
                Split::Train => &["train"],
                Split::Test => &["test"],
                Split::Both => &["train", "test"],
            };
            for path in train::encode_cache(&cfg, splits)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

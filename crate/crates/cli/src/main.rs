mod align;
mod bench;
mod common;
mod episode;
mod json;
mod oracle;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jeanie_core::alignment::Method;

#[derive(Debug, Parser)]
#[command(
    name = "jeanie",
    version,
    about = "Joint temporal and viewpoint alignment of skeleton sequences"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML); the shipped defaults apply otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for episode and benchmark loops.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Alignment method.
    #[arg(long, global = true, value_name = "METHOD")]
    pub method: Option<Method>,
    /// Output file or directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes every simulated view of a corpus, one file per grid cell.
    SimulateViews(simulate::SimulateArgs),
    /// Aligns the first sequence of two files and prints the result as JSON.
    Align(align::AlignArgs),
    /// Runs N-way Z-shot episodes and reports accuracy.
    Episode(episode::EpisodeArgs),
    /// Checks the alignment recursions against brute force and each other.
    Oracle(oracle::OracleArgs),
    /// Times the alignment methods over a size sweep.
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JEANIE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = common::Context::new(&cli.global).and_then(|ctx| match cli.command {
        Command::SimulateViews(args) => simulate::run(&ctx, args),
        Command::Align(args) => align::run(&ctx, args),
        Command::Episode(args) => episode::run(&ctx, args),
        Command::Oracle(args) => oracle::run(&ctx, args),
        Command::Bench(args) => bench::run(&ctx, args),
    });
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(common::exit_code(&err))
        }
    }
}

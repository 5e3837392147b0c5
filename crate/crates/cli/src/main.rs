use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quadsig::scenario::{self, Format, GameKind, RunOptions, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "quadsig", version, about = "Equilibrium solvers for quadratic signaling games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override a scenario value, e.g. `--set lambda=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for sweeps and sampling.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    CheapTalk(RunArgs),
    CheapTalkMulti(RunArgs),
    Signaling(RunArgs),
    SignalingMulti(RunArgs),
    Stackelberg(RunArgs),
    Team(RunArgs),
    Poa(RunArgs),
    Simulate(RunArgs),
    /// Check the built-in 4×4 example and list its fixed-point classes.
    ReproduceExample {
        #[arg(long, default_value_t = 200)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn run_game(game: GameKind, args: RunArgs) -> Result<i32, String> {
    let opts = RunOptions {
        overrides: args.overrides,
        out: args.out,
        format: args.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }),
        jobs: args.jobs,
        seed: args.seed,
    };
    let outcome = scenario::run(&args.config, Some(game), &opts).map_err(|e| e.to_string())?;
    if outcome.written_to.is_none() {
        emit(&outcome.rendered, None).map_err(|e| e.to_string())?;
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::CheapTalk(a) => run_game(GameKind::CheapTalk, a),
        Command::CheapTalkMulti(a) => run_game(GameKind::CheapTalkMulti, a),
        Command::Signaling(a) => run_game(GameKind::Signaling, a),
        Command::SignalingMulti(a) => run_game(GameKind::SignalingMulti, a),
        Command::Stackelberg(a) => run_game(GameKind::Stackelberg, a),
        Command::Team(a) => run_game(GameKind::Team, a),
        Command::Poa(a) => run_game(GameKind::Poa, a),
        Command::Simulate(a) => run_game(GameKind::Simulate, a),
        Command::ReproduceExample { starts, seed, out } => scenario::reproduce_reference_example(starts, seed)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                let text = scenario::to_pretty_json(&r).map_err(|e| e.to_string())?;
                emit(&text, out.as_ref()).map_err(|e| e.to_string())?;
                Ok(0)
            }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}


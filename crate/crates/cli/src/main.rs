use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moe_routing::RouterKind;
use moe_routing_cli::{
    cmd_compare, cmd_gen_trace, cmd_place, cmd_route, cmd_simulate, cmd_sweep, CliResult, Context, Overrides,
};

#[derive(Parser)]
#[command(name = "moe-routing", version, about = "Expert-parallel MoE routing experiments")]
struct Cli {
    /// Experiment config (TOML); required.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    router: Option<RouterKind>,
    /// Replication ratio (total slots / experts).
    #[arg(long, global = true)]
    ratio: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic workload as a trace file.
    GenTrace,
    /// Write the expert placement.
    Place,
    /// Route one trace batch and write the assignment.
    Route {
        #[arg(long, default_value_t = 0)]
        batch: usize,
    },
    /// Simulate co-deployed prefill and decode.
    Simulate,
    /// Sweep batch size, parallelism and ratio; write the Pareto front.
    Sweep,
    /// Compare routers on the trace's decode batches.
    Compare,
}

fn run(cli: Cli, config: PathBuf) -> CliResult<()> {
    let overrides = Overrides { out: cli.out, seed: cli.seed, router: cli.router, ratio: cli.ratio };
    let ctx = Context::new(&config, overrides)?;
    match cli.command {
        Command::GenTrace => println!("{}", cmd_gen_trace(&ctx)?.display()),
        Command::Place => println!("{}", cmd_place(&ctx)?.display()),
        Command::Route { batch } => {
            let (path, summary) = cmd_route(&ctx, batch)?;
            println!("{}", path.display());
            println!("{}", serde_json::to_string(&summary).expect("plain record"));
        }
        Command::Simulate => println!("{}", cmd_simulate(&ctx)?.display()),
        Command::Sweep => {
            let (all, front) = cmd_sweep(&ctx)?;
            println!("{}\n{}", all.display(), front.display());
        }
        Command::Compare => println!("{}", cmd_compare(&ctx)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return usage_error(e.to_string().trim_end()),
    };
    let Some(config) = cli.config.clone() else {
        return usage_error("the following required arguments were not provided: --config <CONFIG>");
    };
    match run(cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": { "kind": "usage", "message": message } }));
    ExitCode::from(2)
}

//! `skillforge`: evolve, score and evaluate agent skill libraries.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use skillforge::providers::http::network_request_count;

use config::{ProviderKind, RunArgs, WorldArgs};

/// Bad flags or inputs the user can fix; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "skillforge", version, about = "Skill-library evolution for LLM agents")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tag a skill library or a task file with knowledge tags.
    #[command(group(ArgGroup::new("input").required(true).args(["library", "tasks"])))]
    Tag {
        #[arg(long, value_name = "FILE")]
        library: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        tasks: Option<PathBuf>,
        /// Output JSONL; stdout if omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a source-selection strategy on an instance file.
    Select {
        #[arg(long, value_name = "FILE")]
        instance: PathBuf,
        #[arg(long, default_value = "greedy")]
        strategy: String,
        /// Print the full selection result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evolve a library: the full epoch loop on a world, or one step from records.
    Evolve {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Evaluation records (JSONL) for a single step; needs --library.
        #[arg(long, value_name = "FILE")]
        records: Option<PathBuf>,
        /// Library (JSONL) the single step starts from.
        #[arg(long, value_name = "FILE")]
        library: Option<PathBuf>,
        /// Write every generation prompt into DIR.
        #[arg(long, value_name = "DIR")]
        dump_prompts: Option<PathBuf>,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score and filter a candidate file.
    Score {
        /// JSONL of {skill, task, target?, pair_id?}.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Library the retained candidates join.
        #[arg(long, value_name = "FILE")]
        library: Option<PathBuf>,
        /// Score table CSV; stdout if omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        library_out: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank library skills for a query with BM25.
    Retrieve {
        #[arg(long, value_name = "FILE")]
        library: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = skillforge::retrieval::DEFAULT_RETRIEVAL_K)]
        k: usize,
    },
    /// Generate a seeded synthetic world.
    Simworld {
        #[arg(long)]
        seed: Option<u64>,
        /// World configuration JSON.
        #[arg(long, value_name = "FILE")]
        world_config: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "FILE")]
        tasks_out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        library_out: Option<PathBuf>,
    },
    /// k-fold evaluation on a world, or transfer to a second world.
    Eval {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Evaluate on this world instead of held-out folds of the training world.
        #[arg(long, value_name = "FILE")]
        eval_world: Option<PathBuf>,
        /// Evaluate on reworded copies of the training world's tasks.
        #[arg(long, value_enum)]
        paraphrase_provider: Option<ProviderKind>,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sweep one parameter: epochs, filter_ratio, label_scale, transfer or scorer.
    Sweep {
        #[arg(long)]
        dimension: String,
        #[arg(long, value_name = "FILE")]
        world_config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render a report or sweep JSON as Markdown.
    Report {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn mock(&self) -> bool {
        match self {
            Command::Tag { run, .. }
            | Command::Evolve { run, .. }
            | Command::Score { run, .. }
            | Command::Eval { run, .. }
            | Command::Sweep { run, .. } => run.mock,
            _ => false,
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Tag { library, tasks, out, run } => commands::tag(&run, library.as_deref(), tasks.as_deref(), out.as_deref()),
        Command::Select { instance, strategy, json } => commands::select(&instance, &strategy, json),
        Command::Evolve { out, records, library, dump_prompts, world, run } => commands::evolve(commands::EvolveArgs {
            run: &run,
            world: &world,
            out: &out,
            records: records.as_deref(),
            library: library.as_deref(),
            dump_prompts: dump_prompts.as_deref(),
        }),
        Command::Score { input, library, out, library_out, run } => {
            commands::score(&run, &input, library.as_deref(), out.as_deref(), library_out.as_deref())
        }
        Command::Retrieve { library, query, k } => commands::retrieve(&library, &query, k),
        Command::Simworld { seed, world_config, out, tasks_out, library_out } => {
            commands::simworld(seed, world_config.as_deref(), &out, tasks_out.as_deref(), library_out.as_deref())
        }
        Command::Eval { out, eval_world, paraphrase_provider, world, run } => {
            commands::eval(&run, &world, eval_world.as_deref(), paraphrase_provider, &out)
        }
        Command::Sweep { dimension, world_config, out, run } => commands::sweep_cmd(&run, world_config.as_deref(), &dimension, &out),
        Command::Report { input, out } => commands::report(&input, out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some() || matches!(e.downcast_ref::<skillforge::Error>(), Some(skillforge::Error::Config(_)))
    });
    if usage {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let mock = cli.command.mock();
    let result = dispatch(cli.command).and_then(|()| {
        if mock && network_request_count() > 0 {
            anyhow::bail!("a --mock run made {} network requests", network_request_count());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tunnelscope::harness::{self, exit_code, ExperimentConfig};
use tunnelscope::parallel::{self, Execution};
use tunnelscope::Error;

#[derive(Parser)]
#[command(name = "tunnelscope", version, about = "1D tunneling and measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output].dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in recipe.
    Recipe {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in recipes.
    ListRecipes,
    /// Parse and validate a config, then print its canonical form.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    harness::parse_config(&text)
}

fn execution() -> Execution {
    if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn go(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let r = harness::run(&cfg, out.as_deref(), execution())?;
            println!("{}", r.summary_line());
        }
        Command::Recipe { name, seed, out } => {
            let cfg = harness::recipe_config(&name, seed)?;
            let r = harness::run(&cfg, out.as_deref(), execution())?;
            println!("{}", r.summary_line());
        }
        Command::ListRecipes => {
            for r in harness::recipes() {
                println!("{:<16} {}", r.name, r.description);
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("# config hash {}", cfg.hash());
            print!("{}", cfg.canonical_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    parallel::init_from_env();
    match go(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

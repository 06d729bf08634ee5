//! Command-line surface over `hasten`: tree validation, protocol runs with
//! ablations, traversals, reports and embedding export.
//!
//! Exit codes: 0 ok, 1 runtime, 2 structural validation, 3 coverage,
//! 4 configuration or usage.

pub mod config;
pub mod error;
pub mod inspect;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunFile;
use crate::error::CliResult;
use crate::inspect::Format;
use crate::run::Ablation;

#[derive(Debug, Parser)]
#[command(
    name = "hasten",
    version,
    about = "Hierarchical semantic-tree anchoring for class-incremental learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a tree's structure and, with a class list, its coverage.
    ValidateTree {
        tree: PathBuf,
        /// One class per line, or a JSON array.
        classes: Option<PathBuf>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the incremental protocol for every seed of a run file.
    Run {
        config: PathBuf,
        /// Extra variants, each run on the same seeds.
        #[arg(long, value_enum, num_args = 1..)]
        ablate: Vec<Ablation>,
        /// Overrides HASTEN_OUTPUT_ROOT; defaults to `runs`.
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Walk from a test image of CLASS to the root and print the nearest texts.
    Traverse {
        run_dir: PathBuf,
        class: String,
        /// `{class: [name, description, ...]}`; every tree node when absent.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Index of the test image.
        #[arg(long, default_value_t = 0)]
        image: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate Ā and A_B of finished runs, best first.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write every tree node's hyperbolic embedding as JSON.
    ExportEmbeddings {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the synthetic world's direction table here.
        #[arg(long)]
        world: Option<PathBuf>,
    },
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::ValidateTree { tree, classes, out } => {
            inspect::cmd_validate_tree(&tree, classes.as_deref(), out.as_deref())
        }
        Command::Run {
            config,
            ablate,
            output_root,
        } => {
            let file = RunFile::load(&config)?;
            let dirs = run::cmd_run(&file, &ablate, &run::output_root(output_root))?;
            for d in dirs {
                println!("{}", d.display());
            }
            Ok(())
        }
        Command::Traverse {
            run_dir,
            class,
            pool,
            steps,
            image,
            out,
        } => inspect::cmd_traverse(
            &run_dir,
            &class,
            pool.as_deref(),
            steps,
            image,
            out.as_deref(),
        ),
        Command::Report { dirs, format, out } => inspect::cmd_report(&dirs, format, out.as_deref()),
        Command::ExportEmbeddings {
            run_dir,
            out,
            world,
        } => inspect::cmd_export_embeddings(&run_dir, out.as_deref(), world.as_deref()),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
